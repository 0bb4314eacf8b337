"""Numba vs numpy timings for the hot kernels.

    python3 benchmarks/bench_kernels.py [--repeat 3]

Each kernel runs once to warm the JIT, then `repeat` times per backend; the
best time is reported together with the max deviation between the two results.
"""

import argparse
import time

import numpy as np

from torikam import kernels
from torikam.families import theorem2_family, unit_pair_t3
from torikam.intmat import dual_map, mat_pow
from torikam.spectral import integer_ball, split


def best_of(fn, repeat):
    fn()
    best = float("inf")
    out = None
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t)
    return best, out


def cases():
    rng = np.random.default_rng(0)
    freqs = integer_ball(4, 6)
    coeffs = rng.normal(size=(len(freqs), 4)) + 1j * rng.normal(size=(len(freqs), 4))
    pts = rng.random((2000, 4))
    yield "eval_trig (T^4, r=6, 2000 pts)", kernels.eval_trig_numba, kernels.eval_trig_numpy, (freqs, coeffs, pts)

    sp = split(dual_map(theorem2_family().generators["A1"]))
    yield ("ball_floor (T^4, r=12)", kernels.ball_floor_numba, kernels.ball_floor_numpy,
           (sp.proj[0], sp.proj[2], 12.0, 4))

    a, b = unit_pair_t3()
    vs = integer_ball(3, 15).astype(np.float64)
    mats = np.stack([np.array((mat_pow(a, i) @ mat_pow(b, j)).entries, dtype=np.float64)
                     for i in range(-4, 5) for j in range(-4, 5) if (i, j) != (0, 0)])
    scale = np.ones(len(mats))
    yield ("min_ratio (T^3, 80 mats, r=15)", kernels.min_ratio_numba, kernels.min_ratio_numpy,
           (mats, scale, vs, np.linalg.norm(vs, axis=1) ** 3))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    print(f"numba available: {kernels.HAVE_NUMBA}")
    print(f"{'kernel':36s} {'numba s':>10s} {'numpy s':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, fast, slow, fargs in cases():
        tf, rf = best_of(lambda: fast(*fargs), args.repeat)
        ts, rs = best_of(lambda: slow(*fargs), args.repeat)
        diff = float(np.max(np.abs(np.asarray(rf) - np.asarray(rs))))
        print(f"{name:36s} {tf:10.4f} {ts:10.4f} {ts / tf:8.1f} {diff:10.2e}")


if __name__ == "__main__":
    main()
