"""Compiled vs numpy kernels on the two hot loops.

    python benchmarks/bench_kernels.py [--paths 2000] [--runs 500] [--repeat 3]

Both backends consume identical random inputs, so the timings compare like
with like and the outputs are checked for agreement before timing.
"""

import argparse
import sys
import time

import numpy as np

from bbmmed import kernels
from bbmmed.bbm import simulate_absorbed
from bbmmed.core import SeedSpec


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench_paths(mod, n_paths, dt=1e-4, n_steps=50_000):
    def run():
        seeds = SeedSpec(1)
        for i in range(n_paths):
            simulate_absorbed(0.3, 1.0, dt, n_steps, seeds.stream(i), True, kernel=mod)
    return run


def bench_zoh(mod, n_runs, n_steps=20_000, n_rec=500):
    rng = np.random.default_rng(0)
    N, M = 3, 2
    P = np.ascontiguousarray(rng.random((N, N)) * 0.3)
    G = np.ascontiguousarray(rng.random((N, M)) * 0.01)
    O0 = np.ascontiguousarray(rng.random((n_runs, N)))
    S = np.ascontiguousarray(rng.random((n_runs, M, n_steps)))
    stop = np.full(n_runs, n_steps, dtype=np.int64)
    rec = np.linspace(0, n_steps, n_rec).astype(np.int64)
    out = np.empty((n_runs, n_rec, N))
    return lambda: mod.zoh_runs(P, G, O0, S, stop, rec, out)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--runs", type=int, default=500)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if kernels.compiled is None:
        sys.exit("compiled extension not available; build with `pip install -e . --no-build-isolation`")

    a = simulate_absorbed(0.3, 1.0, 1e-4, 50_000, SeedSpec(1).stream(0), True, kernel=kernels.compiled)
    b = simulate_absorbed(0.3, 1.0, 1e-4, 50_000, SeedSpec(1).stream(0), True, kernel=kernels.python)
    assert np.array_equal(a.head, b.head), "backends disagree on path sampling"

    rows = []
    for label, factory, size in (("message paths (dt=1e-4, t<=5)", bench_paths, args.paths),
                                 ("ZOH opinion runs (20k steps)", bench_zoh, args.runs)):
        tc = best_of(factory(kernels.compiled, size), args.repeat)
        tp = best_of(factory(kernels.python, size), args.repeat)
        rows.append((f"{label} x{size}", tc, tp))
    print(f"{'kernel':<44}{'compiled [s]':>14}{'numpy [s]':>12}{'speedup':>10}")
    for label, tc, tp in rows:
        print(f"{label:<44}{tc:>14.3f}{tp:>12.3f}{tp / tc:>9.1f}x")


if __name__ == "__main__":
    main()
