"""Compiled kernels against the numpy fallback on the same batches.

    python benchmarks/bench_kernels.py [--trajectories T] [--horizon N] [--repeat R]

Both backends consume identical draws, so the script also checks that
their outputs agree before reporting timings.
"""
import argparse
import time

import numpy as np

from perturbwalk import engine, kernels, lattice


def _cases(horizon):
    lazy = lattice.lazy_srw(2)
    mild = lattice.make_table_law({(0, 0): 0.5, (1, 0): 0.125, (-1, 0): 0.125, (0, 1): 0.125, (0, -1): 0.125})
    tail = lattice.make_axis_power_tail_law(2, 3.0)
    impure = engine.ImpuritySet({(0, 0): mild})
    return {
        "lazy+impurity summary": (engine.WalkSpec(d=2, base_law=lazy, impurities=impure, horizon=horizon, seed=1), False),
        "lazy+impurity coupled": (engine.WalkSpec(d=2, base_law=lazy, impurities=impure, horizon=horizon, seed=1), True),
        "beta=3 tail summary": (engine.WalkSpec(d=2, base_law=tail, impurities=impure, horizon=horizon, seed=1), False),
    }


def _time(spec, trajectories, coupled, backend, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = engine.run_batch_arrays(spec, trajectories, coupled=coupled, nubar=False, backend=backend)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--trajectories", type=int, default=2000)
    parser.add_argument("--horizon", type=int, default=1000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()
    backends = [b for b in ("cython", "python") if b in kernels.BACKENDS]
    steps = args.trajectories * args.horizon
    print(f"{'case':<24}{'backend':<9}{'seconds':>10}{'ns/step':>10}{'speedup':>9}")
    for name, (spec, coupled) in _cases(args.horizon).items():
        results = {b: _time(spec, args.trajectories, coupled, b, args.repeat) for b in backends}
        if len(results) == 2:
            a, b = results["cython"][1], results["python"][1]
            assert all(np.array_equal(a[k], b[k]) for k in a), f"{name}: backends disagree"
        slow = results[backends[-1]][0]
        for b in backends:
            sec = results[b][0]
            print(f"{name:<24}{b:<9}{sec:>10.3f}{1e9 * sec / steps:>10.1f}{slow / sec:>8.1f}x")


if __name__ == "__main__":
    main()
