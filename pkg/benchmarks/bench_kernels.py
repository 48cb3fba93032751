"""Compiled kernels against the numpy fallback on the same workloads.

Usage: python benchmarks/bench_kernels.py [--scale 1.0]

Each workload runs on both backends with identical seeds. The script checks
that the outputs agree exactly, then prints the wall time per backend and the
speed-up.
"""
import argparse
import math
import time

import numpy as np

from bgw_skeleton._backend import compiled_kernels, python_kernels
from bgw_skeleton.mutation import critical_chain
from bgw_skeleton.offspring import MarkingRule, binary_law, poisson_law
from bgw_skeleton.trees import TreeModel

SEED = 2024


def tree_workload(model: TreeModel, replicas: int, horizon: int, stop: int):
    def call(k):
        return k.batch_trees(SEED, 0, replicas, model.cum, model.amark, model.pimut, model.n_active, horizon,
                             10**6, stop, np.zeros(0, dtype=np.int64))
    return call


def bd_workload(lam: float, replicas: int, t_end: float, cap: int):
    def call(k):
        return k.bd_batch(SEED, 0, replicas, lam, 1.0, t_end, cap, False)
    return call


def workloads(scale: float) -> list:
    n = max(1, int(2000 * scale))
    binary = binary_law()
    pois = poisson_law(1.0)
    return [
        ("binary trees mu=1e-3, H=224, stop at first mark",
         tree_workload(TreeModel.single(binary, MarkingRule.constant(binary, 1e-3)), n, 224, 1)),
        ("Poisson(1) trees mu=1e-2, H=100, full growth",
         tree_workload(TreeModel.single(pois, MarkingRule.constant(pois, 1e-2)), n, 100, 0)),
        ("two-level critical chain pi=1e-2, H=150",
         tree_workload(TreeModel.from_mutation(critical_chain(2, 1e-2)), n, 150, 0)),
        ("birth-death lam=0.5, t=50", bd_workload(0.5, n, 50.0, 10**6)),
        ("birth-death lam=0.75, t=20, cap 1000", bd_workload(0.75, n, 20.0, 1000)),
    ]


def timed(fn, kernels, repeats: int) -> tuple[float, dict]:
    best, out = math.inf, None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(kernels)
        best = min(best, time.perf_counter() - t0)
    return best, out


def same(a: dict, b: dict) -> bool:
    return a.keys() == b.keys() and all(np.array_equal(np.asarray(a[k]), np.asarray(b[k])) for k in a)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scale", type=float, default=1.0, help="multiplies the replica counts")
    ap.add_argument("--repeats", type=int, default=3, help="best-of repeats for the compiled backend")
    args = ap.parse_args(argv)
    compiled = compiled_kernels()
    if compiled is None:
        print("compiled kernels are not built; run `pip install -e . --no-build-isolation` first")
        return 1
    print(f"{'workload':52s} {'cython s':>10s} {'python s':>10s} {'speed-up':>9s}  identical")
    for name, fn in workloads(args.scale):
        tc, oc = timed(fn, compiled, args.repeats)
        tp, op = timed(fn, python_kernels, 1)
        print(f"{name:52s} {tc:10.4f} {tp:10.3f} {tp / tc:8.0f}x  {same(oc, op)}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
