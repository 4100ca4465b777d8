"""Compare the compiled and numpy sum-product decoders on one rate-1/2 code.

    python3 benchmarks/bench_bp.py [--blocks 200] [--ebn0 1.5 2.5 4.0]
"""

import argparse
import math
import time

import numpy as np

from neurosplit import _kernels
from neurosplit.ldpc import LdpcCode


def make_llrs(code, ebn0_db, n, rng):
    sigma = math.sqrt(1 / (2 * code.rate * 10 ** (ebn0_db / 10)))
    out = []
    for _ in range(n):
        c = code.encode(rng.integers(0, 2, code.k)).astype(float)
        out.append(2 * ((1 - 2 * c) + sigma * rng.standard_normal(code.n)) / sigma**2)
    return out


def bench(code, kernel, llrs, max_iter):
    t0 = time.perf_counter()
    iters = sum(code.decode_codeword(llr, max_iter, kernel)[2] for llr in llrs)
    return time.perf_counter() - t0, iters


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--n", type=int, default=1024, help="codeword length")
    ap.add_argument("--blocks", type=int, default=200)
    ap.add_argument("--ebn0", type=float, nargs="+", default=[1.5, 2.5, 4.0])
    ap.add_argument("--max-iter", type=int, default=50)
    args = ap.parse_args()

    if _kernels.bp_decode_compiled is None:
        raise SystemExit("compiled kernel not built; run `pip install -e . --no-build-isolation` first")
    code = LdpcCode.regular(args.n)
    rng = np.random.default_rng(0)
    print(f"(3,6) code n={code.n} k={code.k}, {args.blocks} blocks per point")
    print(f"{'Eb/N0 dB':>8} {'iters/blk':>9} {'cython ms/blk':>13} {'numpy ms/blk':>12} {'speedup':>7}")
    for ebn0 in args.ebn0:
        llrs = make_llrs(code, ebn0, args.blocks, rng)
        tc, it = bench(code, _kernels.bp_decode_compiled, llrs, args.max_iter)
        tp, it_p = bench(code, _kernels.bp_decode_python, llrs, args.max_iter)
        assert it == it_p, "kernels disagree on iteration counts"
        print(f"{ebn0:8.1f} {it / args.blocks:9.1f} {1e3 * tc / args.blocks:13.3f} "
              f"{1e3 * tp / args.blocks:12.3f} {tp / tc:7.1f}x")


if __name__ == "__main__":
    main()
