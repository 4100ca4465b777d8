"""Pure numpy sum-product LDPC decoder, same contract as the compiled one."""

import numpy as np

_CLIP = 1.0 - 1e-12
_TINY = 1e-300


def bp_decode(llr, check_ptr, edge_var, var_ptr, var_edges, max_iter=50):
    llr = np.asarray(llr, dtype=np.float64)
    check_ptr = np.asarray(check_ptr)
    edge_var = np.asarray(edge_var)
    var_edges = np.asarray(var_edges)
    n = llr.shape[0]
    starts = check_ptr[:-1]
    edge_check = np.repeat(np.arange(len(starts)), np.diff(check_ptr))
    # var_edges grouped by variable -> owning variable of each entry
    var_of_entry = np.repeat(np.arange(n), np.diff(var_ptr))

    q = llr[edge_var].copy()
    r = np.zeros_like(q)
    hard = (llr < 0).astype(np.uint8)
    iterations = 0
    for it in range(max_iter + 1):
        syndrome = np.add.reduceat(hard[edge_var], starts) & 1
        if not syndrome.any():
            return hard, True, iterations
        if it == max_iter:
            return hard, False, iterations
        iterations += 1

        t = np.tanh(0.5 * q)
        neg = t < 0
        mag = np.log(np.maximum(np.abs(t), _TINY))
        mag_sum = np.add.reduceat(mag, starts)
        neg_sum = np.add.reduceat(neg.astype(np.int64), starts)
        excl_mag = mag_sum[edge_check] - mag
        excl_neg = (neg_sum[edge_check] - neg) & 1
        p = np.where(excl_neg == 1, -1.0, 1.0) * np.exp(excl_mag)
        r = 2.0 * np.arctanh(np.clip(p, -_CLIP, _CLIP))

        total = llr + np.bincount(var_of_entry, weights=r[var_edges], minlength=n)
        hard = (total < 0).astype(np.uint8)
        q = total[edge_var] - r
    return hard, False, iterations
