"""Time the compiled tree kernels against the NumPy fallback.

Builds single trees and scores a large matrix with both backends on the same
inputs, checks that the outputs agree, and prints the median time of each.

    python benchmarks/bench_kernels.py --rows 2000 --predict-rows 43008
"""
from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from crimelab.learn import _pytree
from crimelab.learn._backend import GINI
from crimelab.learn.tree import bin_columns, row_layout

try:
    from crimelab.learn import _ctree
except ImportError:
    _ctree = None


def make_data(n: int, d: int, seed: int):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    X[:, : d // 4] = np.round(X[:, : d // 4] * 3)  # some low-cardinality columns
    logit = X[:, 0] - 0.5 * X[:, 1] + 0.8 * X[:, 2] * X[:, 3]
    y = (rng.random(n) < 1 / (1 + np.exp(-logit))).astype(np.float64)
    return X, y


def timed(fn, repeats: int) -> tuple[float, object]:
    times, out = [], None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def run(args) -> list[tuple[str, str, float]]:
    X, y = make_data(args.rows, args.features, args.seed)
    codes, uniq = bin_columns(X)
    layout = row_layout(codes)
    w = np.ones(len(y))
    rows = np.arange(len(y), dtype=np.int32)
    max_features = max(1, int(np.sqrt(args.features)))
    Xp = make_data(args.predict_rows, args.features, args.seed + 1)[0]

    backends = [("python", _pytree)] + ([("cython", _ctree)] if _ctree is not None else [])
    results, trees = [], {}
    for name, mod in backends:
        def build():
            return mod.build_tree(codes, uniq, y, w, rows, args.max_depth, 1.0, max_features,
                                  args.seed, GINI, *layout)
        dt, out = timed(build, args.repeats)
        trees[name] = out
        results.append((name, "build_tree", dt))
        feature, threshold, left, right = out[:4]
        dt, leaves = timed(lambda: mod.apply(Xp, feature, threshold, left, right), args.repeats)
        trees[name + "_apply"] = leaves
        results.append((name, "apply", dt))

    if _ctree is not None:
        same = all(np.array_equal(a, b) for a, b in zip(trees["python"], trees["cython"]))
        same &= np.array_equal(trees["python_apply"], trees["cython_apply"])
        print(f"backends agree: {same}")
    else:
        print("compiled extension not built; timing the NumPy backend only")
    return results


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=2000, help="training rows per tree")
    ap.add_argument("--features", type=int, default=65)
    ap.add_argument("--max-depth", type=int, default=20)
    ap.add_argument("--predict-rows", type=int, default=43_008)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    results = run(args)
    base = {op: t for name, op, t in results if name == "python"}
    print(f"{'backend':<8} {'kernel':<11} {'median s':>10} {'speedup':>8}")
    for name, op, t in results:
        print(f"{name:<8} {op:<11} {t:>10.4f} {base[op] / t:>7.1f}x")


if __name__ == "__main__":
    main()
