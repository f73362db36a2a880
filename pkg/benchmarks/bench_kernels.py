"""Time the compiled and numpy kernels on the workloads that dominate a run.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Workloads: a 20 000-point toy batch, a 20 000-trajectory cost batch (T = 50,
benchmark world 1) and a 200-step CHOMP fine-tune loop.
"""
import argparse
import timeit

import numpy as np

from lsmo import kernels
from lsmo.planning import Trajectory, benchmark_world
from lsmo.proposal import build_prior


def workloads(mod):
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 2, size=(20_000, 2))
    w = benchmark_world(1)
    T = 50
    line = Trajectory.straight(w.start, w.goal, T, w.dt)
    flats = build_prior(T, 2, 0.09, line.flat()).sample(20_000, 1)
    paths = np.empty((len(flats), T + 2, 2))
    paths[:, 0], paths[:, -1] = w.start, w.goal
    paths[:, 1:-1] = flats.reshape(-1, 2, T).transpose(0, 2, 1)
    paths = np.ascontiguousarray(paths)
    one = np.ascontiguousarray(paths[0])

    def chomp_loop():
        p = one.copy()
        for _ in range(200):
            _, _, g = mod.path_cost_grad(p, w.centers, w.radii, w.eps, w.dt, 1e-3)
            p[1:-1] -= 1e-4 * g

    return {
        "toy_eval x20000": lambda: mod.toy_eval(1, pts),
        "path_costs x20000": lambda: mod.path_costs(paths, w.centers, w.radii, w.eps, w.dt),
        "path_cost_grad x200": chomp_loop,
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = kernels.available_backends()
    results = {}
    for name, mod in backends.items():
        for label, fn in workloads(mod).items():
            results[(label, name)] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
    labels = list(workloads(backends["python"]))
    print(f"{'workload':24s}" + "".join(f"{n:>12s}" for n in backends) + "     speedup")
    for label in labels:
        times = [results[(label, n)] for n in backends]
        speed = times[0] / times[-1] if len(times) > 1 else 1.0
        print(f"{label:24s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times) + f"  {speed:9.1f}x")
    print(f"active backend: {kernels.BACKEND}")


if __name__ == "__main__":
    main()
