"""Regular LDPC codes: seeded construction, systematic encoding, BP decoding."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from . import _kernels

__all__ = ["LdpcCode", "regular_parity_matrix", "gf2_rref"]


def regular_parity_matrix(n: int, dv: int, dc: int, rng: np.random.Generator) -> np.ndarray:
    """Random (dv, dc)-regular parity-check matrix by socket matching.

    Variable sockets are shuffled onto check sockets; double edges are
    repaired by swapping with random other sockets.
    """
    if (n * dv) % dc:
        raise ValueError(f"n * dv = {n * dv} is not divisible by dc = {dc}")
    n_checks = n * dv // dc
    var_sockets = np.repeat(np.arange(n), dv)
    check_sockets = np.repeat(np.arange(n_checks), dc)
    perm = rng.permutation(len(var_sockets))
    vs = var_sockets[perm]
    for _ in range(1000):
        pairs = check_sockets * n + vs
        _, first = np.unique(pairs, return_index=True)
        dup = np.setdiff1d(np.arange(len(pairs)), first)
        if len(dup) == 0:
            break
        for i in dup:
            j = rng.integers(len(vs))
            vs[i], vs[j] = vs[j], vs[i]
    else:
        raise RuntimeError("could not remove parallel edges")
    H = np.zeros((n_checks, n), dtype=np.uint8)
    H[check_sockets, vs] = 1
    return H


def gf2_rref(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Reduced row echelon form over GF(2). Returns (R, pivot_columns)."""
    R = A.astype(bool).copy()
    rows, cols = R.shape
    pivots = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        hits = np.flatnonzero(R[r:, c])
        if len(hits) == 0:
            continue
        p = r + hits[0]
        if p != r:
            R[[r, p]] = R[[p, r]]
        mask = R[:, c].copy()
        mask[r] = False
        R[mask] ^= R[r]
        pivots.append(c)
        r += 1
    return R[:r].astype(np.uint8), np.array(pivots, dtype=np.int64)


class LdpcCode:
    """Binary LDPC code with a systematic encoder.

    Information bits occupy the non-pivot columns of the reduced parity-check
    matrix; parity bits are solved from them.  ``k = n - rank(H)``.
    """

    def __init__(self, H: np.ndarray):
        H = np.asarray(H, dtype=np.uint8)
        R, pivots = gf2_rref(H)
        if len(pivots) != H.shape[0]:
            raise ValueError(f"parity-check matrix is rank deficient ({len(pivots)} < {H.shape[0]})")
        self.H = H
        self.n = H.shape[1]
        self.k = self.n - len(pivots)
        self.pivots = pivots
        self.info_cols = np.setdiff1d(np.arange(self.n), pivots)
        self._parity = R[:, self.info_cols].astype(np.int64)

        checks, vars_ = np.nonzero(H)  # row-major: edges grouped by check
        self.edge_var = np.ascontiguousarray(vars_, dtype=np.int64)
        self.check_ptr = np.concatenate([[0], np.cumsum(H.sum(axis=1))]).astype(np.int64)
        order = np.argsort(vars_, kind="stable")
        self.var_edges = np.ascontiguousarray(order, dtype=np.int64)
        self.var_ptr = np.concatenate([[0], np.cumsum(H.sum(axis=0))]).astype(np.int64)

    @property
    def rate(self) -> float:
        return self.k / self.n

    @classmethod
    def regular(cls, n: int, dv: int = 3, dc: int = 6, seed: int = 0) -> "LdpcCode":
        """Deterministic regular code; redraws until H has full row rank."""
        return _regular_cached(n, dv, dc, seed)

    def encode(self, info_bits) -> np.ndarray:
        u = np.asarray(info_bits, dtype=np.int64)
        if u.shape[-1] != self.k:
            raise ValueError(f"expected {self.k} info bits, got {u.shape[-1]}")
        c = np.zeros(u.shape[:-1] + (self.n,), dtype=np.uint8)
        c[..., self.info_cols] = u
        c[..., self.pivots] = (u @ self._parity.T) & 1
        return c

    def syndrome(self, codeword) -> np.ndarray:
        return (self.H.astype(np.int64) @ np.asarray(codeword, dtype=np.int64)) & 1

    def decode(self, llr, max_iter: int = 50, kernel=None) -> tuple[np.ndarray, bool]:
        """Sum-product decode of one codeword's LLRs (log P0/P1).

        Returns ``(info_bits, converged)``; a decode that hits ``max_iter``
        without a zero syndrome reports ``converged=False``.
        """
        bits, converged, _ = self.decode_codeword(llr, max_iter, kernel)
        return bits[self.info_cols], converged

    def decode_codeword(self, llr, max_iter: int = 50, kernel=None):
        llr = np.ascontiguousarray(llr, dtype=np.float64)
        if llr.shape != (self.n,):
            raise ValueError(f"expected {self.n} LLRs, got shape {llr.shape}")
        kernel = kernel or _kernels.bp_decode
        return kernel(llr, self.check_ptr, self.edge_var, self.var_ptr, self.var_edges, max_iter)


@lru_cache(maxsize=16)
def _regular_cached(n: int, dv: int, dc: int, seed: int) -> LdpcCode:
    rng = np.random.default_rng([seed, n, dv, dc])
    for _ in range(100):
        try:
            return LdpcCode(regular_parity_matrix(n, dv, dc, rng))
        except ValueError as exc:
            if "rank deficient" not in str(exc):
                raise
    raise RuntimeError(f"no full-rank ({dv},{dc}) code found for n={n}")
