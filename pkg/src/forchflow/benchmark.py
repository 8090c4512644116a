"""Timing comparison of the compiled and pure-NumPy inversion kernels.

Run as ``python -m forchflow.benchmark``.  Measures the batched root solve
s*F(s) = xi, the single genuinely iterative kernel in the package, across
batch sizes and polynomial families, and reports ns/element plus speedup.
"""

import argparse
import time

import numpy as np

from . import _kernel_numpy

try:
    from . import _fastkernel
except ImportError:
    _fastkernel = None

FAMILIES = {
    "darcy": ([0.0], [1.0]),
    "two_term": ([0.0, 1.0], [1.0, 1.0]),
    "fractional": ([0.0, 0.5, 2.5], [0.8, 0.3, 1.2]),
}


def _time(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+", default=[1_000, 10_000, 100_000])
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(0)
    print(f"compiled kernel available: {_fastkernel is not None}")
    print(f"{'family':<12} {'n':>8} {'numpy ns/el':>12} {'compiled ns/el':>15} {'speedup':>8}")
    for fam, (alphas, coeffs) in FAMILIES.items():
        alphas = np.asarray(alphas, float)
        row = np.asarray(coeffs, float)
        for n in args.sizes:
            xi = np.exp(rng.uniform(np.log(1e-6), np.log(1e8), n))
            cmat = np.ascontiguousarray(np.broadcast_to(row, (n, row.size)))
            t_np = _time(_kernel_numpy.invert_batch, xi, cmat, alphas,
                         repeats=args.repeats)
            if _fastkernel is not None:
                t_c = _time(_fastkernel.invert_batch, xi, cmat, alphas,
                            repeats=args.repeats)
                s_np, _ = _kernel_numpy.invert_batch(xi, cmat, alphas)
                s_c, _ = _fastkernel.invert_batch(xi, cmat, alphas)
                worst = np.max(np.abs(s_np - s_c) / np.maximum(1.0, np.abs(s_np)))
                assert worst < 1e-12, f"backend disagreement {worst}"
                print(f"{fam:<12} {n:>8} {1e9 * t_np / n:>12.1f} "
                      f"{1e9 * t_c / n:>15.1f} {t_np / t_c:>8.2f}")
            else:
                print(f"{fam:<12} {n:>8} {1e9 * t_np / n:>12.1f} {'-':>15} {'-':>8}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
