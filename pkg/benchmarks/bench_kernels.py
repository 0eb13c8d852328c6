"""Compare the compiled kernels with the numpy reference implementation.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each workload is timed under both backends (best of ``--repeat`` runs) and
the outputs are compared, so a speed-up is only reported for matching results.
"""

import argparse
import json
import sys
import time

import numpy as np

from gdm import kernels
from gdm.elliptic import weighted_solve
from gdm.flow import run_flow
from gdm.functionals import DensityField
from gdm.geodesic import cogeodesic_integrate
from gdm.grid import build_grid


def _density(grid, logv):
    return DensityField.normalized(grid, np.exp(logv))


def workloads():
    g1 = build_grid(dim=1, topology="periodic", n=256)
    g2 = build_grid(dim=2, topology="reflecting", n=64)
    x1 = g1.coords()[0]
    X, Y = g2.coords()
    rng = np.random.default_rng(0)
    rho1 = _density(g1, 0.2 * np.sin(2 * np.pi * x1))
    mu1 = _density(g1, 0.3 * np.cos(2 * np.pi * x1))
    rho2 = _density(g2, 0.2 * np.cos(np.pi * X) * np.cos(np.pi * Y))
    mu2 = _density(g2, 0.3 * np.cos(np.pi * X) + 0.1 * np.cos(np.pi * Y))
    h2 = np.exp(0.3 * rng.standard_normal(g2.shape))
    s2 = rng.standard_normal(g2.shape)
    s2 -= g2.integrate(s2) / g2.volume
    Wf = g2.face_mean(h2)
    u2 = rng.standard_normal(g2.shape)

    def wlap():
        out = None
        for _ in range(200):
            out = kernels.wlap(g2, Wf, u2)
        return out

    return {
        "wlap 64x64 (x200)": wlap,
        "weighted_solve 64x64": lambda: weighted_solve(g2, h2, s2),
        "run_flow 1D n=256, 200 steps": lambda: run_flow(rho1, mu1, 0.5, 0.02, 1e-4).divergence_series,
        "run_flow 2D 64x64, 20 steps": lambda: run_flow(rho2, mu2, 1.0, 0.02, 1e-3).divergence_series,
        "cogeodesic 1D n=256, 1024 steps": lambda: np.asarray(
            cogeodesic_integrate(rho1, 0.01 * np.cos(2 * np.pi * x1), 1.0, 1024, record_every=1024).densities),
        "cogeodesic 2D 64x64, 128 steps": lambda: np.asarray(
            cogeodesic_integrate(rho2, 0.005 * np.cos(np.pi * X), 0.5, 128, record_every=128).densities),
    }


def best_of(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, np.asarray(out)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--json", default=None, help="also write the results to this file")
    args = parser.parse_args(argv)

    if not kernels.HAVE_COMPILED:
        print("compiled kernels are not built; nothing to compare", file=sys.stderr)
        return 1
    previous = kernels.BACKEND
    rows = []
    try:
        for name, fn in workloads().items():
            kernels.use_backend("python")
            t_py, ref = best_of(fn, args.repeat)
            kernels.use_backend("cython")
            t_cy, out = best_of(fn, args.repeat)
            diff = float(np.max(np.abs(out - ref)) / max(np.max(np.abs(ref)), 1e-300))
            rows.append({"workload": name, "python_s": t_py, "cython_s": t_cy, "speedup": t_py / t_cy,
                         "max_rel_diff": diff})
    finally:
        kernels.use_backend(previous)

    width = max(len(r["workload"]) for r in rows)
    print(f"{'workload':<{width}}  {'python [s]':>11}  {'cython [s]':>11}  {'speed-up':>8}  {'rel. diff':>9}")
    for r in rows:
        print(f"{r['workload']:<{width}}  {r['python_s']:11.5f}  {r['cython_s']:11.5f}  "
              f"{r['speedup']:7.1f}x  {r['max_rel_diff']:9.1e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
