"""Compiled vs numpy kernels: stencil application, ball oscillation and a full weighted solve.

    python benchmarks/bench_kernels.py [--sizes 32 64 128] [--repeat 5]
"""
import argparse
import importlib
import os
import subprocess
import sys
import time

import numpy as np

from thermoelectric import _kernels_py

try:
    _kernels_c = importlib.import_module("thermoelectric._kernels")
except ImportError:
    _kernels_c = None


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def bench_stencil(n, repeat, rng):
    m = n + 1
    c = [np.ascontiguousarray(rng.uniform(0.5, 2.0, size=tuple(m - (k == d) for k in range(3)))) for d in range(3)]
    x = rng.normal(size=(m, m, m))
    out = np.empty_like(x)
    rows = []
    for mod in (_kernels_py, _kernels_c):
        if mod is None:
            continue
        rows.append((mod.IMPLEMENTATION, best_of(lambda: mod.stencil_apply(*c, x, out, 1), repeat)))
    return rows


def bench_balls(n, repeat, rng):
    m = n + 1
    u = rng.normal(size=(m, m, m))
    xs = np.linspace(0.0, 1.0, m)
    stride = max(1, m // 6)
    idx = np.arange(0, m, stride)
    centers = np.ascontiguousarray(np.stack(np.meshgrid(idx, idx, idx, indexing="ij"), -1).reshape(-1, 3).astype(np.intp))
    radii = np.array([2.0 / n, 4.0 / n, 8.0 / n, 0.5])
    rows = []
    for mod in (_kernels_py, _kernels_c):
        if mod is None:
            continue
        rows.append((mod.IMPLEMENTATION, best_of(lambda: mod.ball_oscillation(u, xs, xs, xs, centers, radii, 1), repeat)))
    return rows


SOLVE_SNIPPET = """
import time, numpy as np
from thermoelectric import Grid, NodeField, ConductivityModel, ProblemSpec, run_fixed_point, BACKEND
g = Grid.cube({n})
spec = ProblemSpec(g, ConductivityModel.sigmoid(1, 2, 0.5, 0.5), NodeField.zeros(g), e_const=(1.0, 0.5, 0.0))
t = time.perf_counter(); r = run_fixed_point(spec); dt = time.perf_counter() - t
print(BACKEND, dt, r.diagnostics.iterations)
"""


def bench_solve(n):
    rows = []
    for pure in ("1", "0"):
        env = dict(os.environ, THERMOELECTRIC_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET.format(n=n)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        rows.append((out[0], float(out[1])))
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--solve-sizes", type=int, nargs="+", default=[16, 32])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    if _kernels_c is None:
        print("compiled extension not built; only the numpy backend is timed")
    print(f"{'kernel':<18}{'n':>5}{'backend':>10}{'seconds':>12}{'speedup':>9}")

    def report(name, n, rows):
        base = dict(rows).get("python")
        for backend, t in rows:
            print(f"{name:<18}{n:>5}{backend:>10}{t:>12.5f}{base / t:>9.2f}")

    for n in args.sizes:
        report("stencil_apply", n, bench_stencil(n, args.repeat, rng))
    for n in args.sizes[:2]:
        report("ball_oscillation", n, bench_balls(n, max(1, args.repeat // 2), rng))
    for n in args.solve_sizes:
        report("run_fixed_point", n, bench_solve(n))


if __name__ == "__main__":
    main()
