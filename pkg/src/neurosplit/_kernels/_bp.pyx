# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled sum-product (belief propagation) LDPC decoder."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs

cnp.import_array()

cdef double _CLIP = 1.0 - 1e-12


def bp_decode(
    const double[::1] llr,
    const long[::1] check_ptr,
    const long[::1] edge_var,
    const long[::1] var_ptr,
    const long[::1] var_edges,
    int max_iter=50,
):
    """Flooding sum-product decoding.

    Edges are ordered by check node: edges ``check_ptr[c]:check_ptr[c+1]``
    belong to check ``c`` and ``edge_var[e]`` is the variable of edge ``e``.
    ``var_edges[var_ptr[v]:var_ptr[v+1]]`` lists the edges of variable ``v``.
    LLRs are log P(0)/P(1).  Returns ``(hard_bits, converged, iterations)``.
    """
    cdef Py_ssize_t n = llr.shape[0]
    cdef Py_ssize_t n_checks = check_ptr.shape[0] - 1
    cdef Py_ssize_t n_edges = edge_var.shape[0]
    cdef Py_ssize_t c, e, v, k, start, stop, deg, max_deg = 0
    cdef int it, parity, iterations = 0
    cdef bint ok
    cdef double total, p, a

    for c in range(n_checks):
        if check_ptr[c + 1] - check_ptr[c] > max_deg:
            max_deg = check_ptr[c + 1] - check_ptr[c]

    q_arr = np.empty(n_edges, dtype=np.float64)
    r_arr = np.zeros(n_edges, dtype=np.float64)
    post_arr = np.array(llr, dtype=np.float64)
    hard_arr = np.empty(n, dtype=np.uint8)
    te_arr = np.empty(n_edges, dtype=np.float64)
    pre_arr = np.empty(max_deg + 1, dtype=np.float64)
    suf_arr = np.empty(max_deg + 1, dtype=np.float64)
    cdef double[::1] q = q_arr
    cdef double[::1] r = r_arr
    cdef double[::1] post = post_arr
    cdef unsigned char[::1] hard = hard_arr
    cdef double[::1] te = te_arr
    cdef double[::1] pre = pre_arr
    cdef double[::1] suf = suf_arr

    for v in range(n):
        hard[v] = post[v] < 0
    for e in range(n_edges):
        q[e] = llr[edge_var[e]]

    for it in range(max_iter + 1):
        # syndrome of the current hard decision
        ok = True
        for c in range(n_checks):
            parity = 0
            for e in range(check_ptr[c], check_ptr[c + 1]):
                parity ^= hard[edge_var[e]]
            if parity:
                ok = False
                break
        if ok or it == max_iter:
            return hard_arr, bool(ok), iterations
        iterations += 1

        # check-node update via prefix/suffix products (no division);
        # flat tanh/atanh passes over all edges so they vectorise
        for e in range(n_edges):
            # tanh(q/2) = (1 - e^-|q|) / (1 + e^-|q|), odd in q
            a = exp(-fabs(q[e]))
            p = (1.0 - a) / (1.0 + a)
            te[e] = p if q[e] >= 0 else -p
        for c in range(n_checks):
            start = check_ptr[c]
            stop = check_ptr[c + 1]
            deg = stop - start
            pre[0] = 1.0
            for k in range(deg):
                pre[k + 1] = pre[k] * te[start + k]
            suf[deg] = 1.0
            for k in range(deg - 1, -1, -1):
                suf[k] = suf[k + 1] * te[start + k]
            for k in range(deg):
                p = pre[k] * suf[k + 1]
                if p > _CLIP:
                    p = _CLIP
                elif p < -_CLIP:
                    p = -_CLIP
                r[start + k] = p
        for e in range(n_edges):
            # 2 atanh(p) = log((1 + p) / (1 - p))
            p = r[e]
            r[e] = log((1.0 + p) / (1.0 - p))

        # variable-node update
        for v in range(n):
            total = llr[v]
            for k in range(var_ptr[v], var_ptr[v + 1]):
                total += r[var_edges[k]]
            post[v] = total
            hard[v] = total < 0
            for k in range(var_ptr[v], var_ptr[v + 1]):
                e = var_edges[k]
                q[e] = total - r[e]

    return hard_arr, False, iterations
