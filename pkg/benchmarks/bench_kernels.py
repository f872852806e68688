"""Compiled vs numpy kernels: GA fitness batches and tree split search.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends are imported directly, so the CRSFL_PURE_PYTHON switch does
not matter here. Results are checked for agreement before timing.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from crsfl import _kernels_py

try:
    from crsfl import _kernels as _compiled
except ImportError:  # extension not built
    _compiled = None


def fitness_case(rng, n=40, pop=50):
    masks = (rng.random((pop, n)) < 0.5).astype(np.uint8)
    samples = rng.integers(80, 121, n).astype(np.float64)
    pro = rng.uniform(0.3, 0.6, n)
    labels = rng.integers(0, 12, n).astype(np.int64)
    _, labels = np.unique(labels, return_inverse=True)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    hist = rng.integers(0, 2, n).astype(np.float64)
    weights = np.full(5, 0.2)
    pv = float(pro.var())
    args = (masks, samples, pro, labels, hist, weights, int(labels.max()) + 1,
            float(samples.sum()), pv, float(hist.sum()))
    return args


def split_case(rng, n=500, p=5):
    X = rng.normal(size=(n, p))
    X[:, 3] = rng.integers(80, 121, n)
    y = 1300 + 5 * X[:, 3] + rng.normal(0, 100, n)
    return np.ascontiguousarray(X), np.ascontiguousarray(y), 2


def best_of(fn, args, repeat, inner):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        best = min(best, (time.perf_counter() - t0) / inner)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)

    cases = [("batch_fitness 50x40", "batch_fitness", fitness_case(rng), 200),
             ("best_split 500x5", "best_split", split_case(rng), 50)]
    print(f"{'kernel':24s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for label, name, case, inner in cases:
        py = getattr(_kernels_py, name)
        t_py = best_of(py, case, args.repeat, inner)
        if _compiled is None:
            print(f"{label:24s} {t_py * 1e3:10.3f} {'n/a':>10s} {'n/a':>8s}")
            continue
        cy = getattr(_compiled, name)
        a, b = py(*case), cy(*case)
        if name == "batch_fitness":
            assert np.allclose(a, b, rtol=0, atol=1e-12)
        else:
            assert tuple(a) == tuple(b), (a, b)
        t_cy = best_of(cy, case, args.repeat, inner)
        print(f"{label:24s} {t_py * 1e3:10.3f} {t_cy * 1e3:10.3f} {t_py / t_cy:7.1f}x")


if __name__ == "__main__":
    main()
