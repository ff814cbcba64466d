#!/usr/bin/env python3
"""Time the numba-jitted retrieval kernels against their numpy fallbacks.

Both paths produce bit-identical results; this script only compares speed.
Run it twice to see the dispatcher pick each path:

    python benchmarks/bench_kernels.py
    SPHASH_DISABLE_NUMBA=1 python benchmarks/bench_kernels.py

The direct comparison below calls both implementations in one process, so a
single run already reports both timings when numba is available.
"""

import argparse
import time

import numpy as np

from sphash import kernels


def timeit(fn, *args, repeats=5):
    fn(*args)  # warm-up (includes JIT compilation for the numba path)
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def bench_hamming(n_query, n_gallery, bits, rng):
    queries = rng.choice([-1, 1], (n_query, bits)).astype(np.int8)
    gallery = rng.choice([-1, 1], (n_gallery, bits)).astype(np.int8)
    qp = kernels.pack_signs(queries)
    gp = kernels.pack_signs(gallery)

    t_numpy = timeit(kernels.hamming_packed_numpy, qp, gp)
    print(f"hamming {n_query}x{n_gallery} @ {bits} bits")
    print(f"  numpy fallback : {t_numpy * 1e3:9.2f} ms")
    if kernels.hamming_packed_jit is not None:
        t_jit = timeit(kernels.hamming_packed_jit, qp, gp)
        same = np.array_equal(
            kernels.hamming_packed_jit(qp, gp), kernels.hamming_packed_numpy(qp, gp)
        )
        print(f"  numba jit      : {t_jit * 1e3:9.2f} ms  (x{t_numpy / t_jit:.1f}, equal={same})")
    else:
        print("  numba jit      : unavailable (disabled or not installed)")


def bench_ap(n_query, n_gallery, rng):
    rel = np.ascontiguousarray((rng.random((n_query, n_gallery)) < 0.05).astype(np.uint8))

    t_numpy = timeit(kernels.ap_scores_numpy, rel)
    print(f"average precision over {n_query}x{n_gallery} rankings")
    print(f"  numpy fallback : {t_numpy * 1e3:9.2f} ms")
    if kernels.ap_scores_jit is not None:
        t_jit = timeit(kernels.ap_scores_jit, rel)
        same = np.array_equal(kernels.ap_scores_jit(rel), kernels.ap_scores_numpy(rel))
        print(f"  numba jit      : {t_jit * 1e3:9.2f} ms  (x{t_numpy / t_jit:.1f}, equal={same})")
    else:
        print("  numba jit      : unavailable (disabled or not installed)")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--queries", type=int, default=2000)
    ap.add_argument("--gallery", type=int, default=20000)
    ap.add_argument("--bits", type=int, default=128)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    print(f"numba available: {kernels.HAVE_NUMBA}, active path: "
          f"{'numba' if kernels.USE_NUMBA else 'numpy'}")
    rng = np.random.default_rng(args.seed)
    bench_hamming(args.queries, args.gallery, args.bits, rng)
    bench_ap(args.queries, args.gallery, rng)


if __name__ == "__main__":
    main()
