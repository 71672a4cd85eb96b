"""Time the compiled epoch kernel against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--n 200000] [--repeat 5]

Each row is one full VRPG run (all epochs) on the canonical quadratic; the
best of ``--repeat`` wall times is reported along with the max deviation
between the two backends' final points.
"""

import argparse
import time

import numpy as np

from vrpg import _backend
from vrpg.algorithm import derive_plan, run_vrpg
from vrpg.instances import canonical_instance
from vrpg.prox import L1, Ball2, Box, Orthant, Simplex, Zero


def best_time(fn, repeat):
    out, times = None, []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000, help="sample budget N")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    if not _backend.has_kernels():
        print("compiled core not available; rebuild with `pip install -e . --no-build-isolation`")
        return 1
    inst = canonical_instance(0.1)
    plan = derive_plan(args.n, inst.mu, inst.L)
    regs = {
        "zero": Zero(5), "l1": L1(5, 0.1), "orthant": Orthant(5), "box": Box(-np.ones(5), np.ones(5)),
        "ball2": Ball2(np.zeros(5), 1.0), "simplex": Simplex(5, 1.0),
    }
    print(f"N={args.n}  epochs={plan.epochs}  K={plan.epoch_steps}  T={plan.recenter_size}")
    print(f"{'reg':<8} {'cython s':>10} {'python s':>10} {'speedup':>8} {'max |diff|':>11}")
    for name, reg in regs.items():
        tc, a = best_time(lambda: run_vrpg(inst, reg, plan, rng=0, use_kernels=True), args.repeat)
        tp, b = best_time(lambda: run_vrpg(inst, reg, plan, rng=0, use_kernels=False), args.repeat)
        diff = float(np.max(np.abs(a.final_point - b.final_point)))
        print(f"{name:<8} {tc:>10.4f} {tp:>10.4f} {tp / tc:>7.1f}x {diff:>11.1e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
