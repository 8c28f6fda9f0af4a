"""Compare the compiled kernel backend against the pure NumPy fallback.

Usage:

    python3 benchmarks/bench_kernels.py [--repeats 7] [--points 4096] [--image 480 640]

Each kernel runs on identical inputs through both backends; the table reports
best-of-N wall time and the speedup, and every row asserts that the two
backends agree bit for bit before timing is trusted.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "src"))

from cmbench.kernels import _reference  # noqa: E402

try:
    from cmbench.kernels import _core as _native
except ImportError:
    _native = None


def best_of(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def build_cases(n_points: int, image_hw: tuple[int, int], rng):
    h, w = image_hw
    hmat = np.eye(3) + rng.normal(0, 0.05, size=(3, 3))
    hmat[2, 2] = 1.0
    hinv = np.linalg.inv(hmat)
    pa = rng.uniform(0, 640, size=(n_points, 2))
    pb = rng.uniform(0, 640, size=(n_points, 2))
    e = rng.normal(size=(3, 3))
    na = rng.uniform(-1, 1, size=(n_points, 2))
    nb = rng.uniform(-1, 1, size=(n_points, 2))
    pad1 = rng.uniform(0, 255, size=(h + 2, w + 2))
    kernel = rng.normal(size=(3, 3))
    radius = 7
    padw = rng.uniform(0, 255, size=(h + 2 * radius, w + 2 * radius))
    pad_mm = rng.uniform(0, 255, size=(h + 2, w + 2))
    return [
        (f"transfer_sq ({n_points} pts)",
         lambda b: b.transfer_sq(hmat, hinv, pa, pb)),
        (f"sampson_sq ({n_points} pts)",
         lambda b: b.sampson_sq(e, na, nb)),
        (f"conv2d 3x3 ({h}x{w})",
         lambda b: b.conv2d(pad1, kernel, h, w)),
        (f"window_mean_var r={radius} ({h}x{w})",
         lambda b: b.window_mean_var(padw, radius, h, w)),
        (f"window_min_max r=1 ({h}x{w})",
         lambda b: b.window_min_max(pad_mm, 1, h, w)),
    ]


def equal(a, b) -> bool:
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=7)
    ap.add_argument("--points", type=int, default=4096)
    ap.add_argument("--image", type=int, nargs=2, default=(480, 640),
                    metavar=("H", "W"))
    args = ap.parse_args()

    if _native is None:
        print("compiled backend not built; nothing to compare "
              "(pip install -e . builds it)", file=sys.stderr)
        return 1

    rng = np.random.default_rng(0)
    cases = build_cases(args.points, tuple(args.image), rng)
    name_w = max(len(name) for name, _ in cases)
    print(f"{'kernel'.ljust(name_w)}  {'numpy':>10}  {'native':>10}  {'speedup':>7}")
    for name, call in cases:
        assert equal(call(_native), call(_reference)), f"{name}: backends disagree"
        t_ref = best_of(lambda: call(_reference), args.repeats)
        t_nat = best_of(lambda: call(_native), args.repeats)
        print(f"{name.ljust(name_w)}  {t_ref * 1e3:9.3f}ms  {t_nat * 1e3:9.3f}ms  "
              f"{t_ref / t_nat:6.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
