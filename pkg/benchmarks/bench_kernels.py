"""Time the numba kernels against the numpy fallback.

Each backend runs in its own interpreter with ``FREEDIM_BACKEND`` set, so the
comparison uses the same switch as production code. Kernels are called once
before timing so that JIT compilation is excluded.

    python benchmarks/bench_kernels.py [--repeat 5]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _cases():
    from freedim import _kernels
    from freedim.covering import _power_coefficients
    from freedim.matrixcore import gue_hermitian, haar_unitary, random_hermitian_tuple
    from freedim.microstates import Spectrum, presentation_battery, target_norms

    rng = np.random.default_rng(0)
    cloud = np.stack([random_hermitian_tuple(2, 6, rng).mats for _ in range(300)])
    d = _kernels.pairwise_op(cloud)
    omega = float(np.quantile(d, 0.2))

    p = Spectrum((0.0, 1.0))
    battery = presentation_battery(p, degree=2)
    targets = target_norms(p, battery)
    axis = 0.08 * np.arange(-15, 16)
    powcoef = _power_coefficients(battery.polys, battery.degree_bound)
    members = _kernels.grid_members(axis, 1, 2, battery.compiled, targets, 0.05, True, powcoef)
    coords = _kernels.grid_coords(axis, 1, 2, members)

    a, b = gue_hermitian(12, rng)[None], gue_hermitian(12, rng)[None]
    w0 = np.stack([haar_unitary(12, rng) for _ in range(4)])

    return {
        "pairwise_op (300 pts, n=2, k=6)": lambda: _kernels.pairwise_op(cloud),
        "pairwise_trace2 (300 pts, n=2, k=6)": lambda: _kernels.pairwise_trace2(cloud),
        "greedy_packing (300x300)": lambda: _kernels.greedy_packing(d, omega),
        "greedy_cover (300x300)": lambda: _kernels.greedy_cover(d, omega),
        "grid_members (k=2, 31^4 grid)": lambda: _kernels.grid_members(
            axis, 1, 2, battery.compiled, targets, 0.05, True, powcoef),
        f"coord_packing ({len(coords)} grid pts)": lambda: _kernels.coord_packing(
            coords, 1, 2, _kernels.METRIC_OP, 0.25),
        "orbit_descent (k=12, 4 starts)": lambda: _kernels.orbit_descent(a, b, w0, 1e-10, 300),
    }


def worker(repeat: int) -> dict:
    from freedim import _kernels

    out = {"backend": _kernels.BACKEND, "times": {}}
    for name, fn in _cases().items():
        fn()
        best = np.inf
        for _ in range(repeat):
            start = time.perf_counter()
            fn()
            best = min(best, time.perf_counter() - start)
        out["times"][name] = best
    return out


def run_backend(backend: str, repeat: int) -> dict:
    env = dict(os.environ, FREEDIM_BACKEND=backend)
    proc = subprocess.run([sys.executable, __file__, "--worker", "--repeat", str(repeat)],
                          env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args(argv)
    if args.worker:
        print(json.dumps(worker(args.repeat)))
        return 0
    fast = run_backend("numba", args.repeat)
    slow = run_backend("numpy", args.repeat)
    if fast["backend"] != "numba":
        print("numba is not importable; only the numpy fallback ran", file=sys.stderr)
    width = max(len(name) for name in slow["times"])
    print(f"{'kernel':<{width}}  {'numba [ms]':>11}  {'numpy [ms]':>11}  {'speedup':>8}")
    for name, t_np in slow["times"].items():
        t_nb = fast["times"][name]
        print(f"{name:<{width}}  {1e3 * t_nb:>11.3f}  {1e3 * t_np:>11.3f}  {t_np / t_nb:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
