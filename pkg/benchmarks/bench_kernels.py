"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Reports the median wall time of one numerical-Hamiltonian evaluation and one
semi-Lagrangian branch sweep on junction grids of growing size, and checks
that both backends return the same numbers.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from hjnet import kernels
from hjnet.grid import Grid
from hjnet.hamiltonian import PowerHamiltonian, quadratic
from hjnet.network import build_junction
from hjnet.solver import Operator, SchemeConfig


def _median_time(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def bench_step(repeat: int) -> None:
    print("numerical Hamiltonian (3-branch junction)")
    print(f"{'nodes':>8} {'cython ms':>10} {'numpy ms':>10} {'speedup':>8} {'max diff':>10}")
    hams = [quadratic(), PowerHamiltonian(1.5, 0.3, 1.7, -0.2), quadratic(center=1.0)]
    rng = np.random.default_rng(0)
    for dx in (1e-2, 1e-3, 1e-4):
        grid = Grid(build_junction(3), dx, 1.0)
        fast = Operator(grid, SchemeConfig(hams, {"o": 0.2}, backend="cython"))
        slow = Operator(grid, SchemeConfig(hams, {"o": 0.2}, backend="python"))
        u = np.cumsum(rng.normal(scale=dx, size=grid.n_nodes))
        tf = _median_time(lambda: fast.raw(u), repeat)
        ts = _median_time(lambda: slow.raw(u), repeat)
        diff = float(np.max(np.abs(fast.raw(u)[0] - slow.raw(u)[0])))
        print(f"{grid.n_nodes:>8} {tf * 1e3:>10.3f} {ts * 1e3:>10.3f} {ts / tf:>8.1f} {diff:>10.2e}")


def bench_dp(repeat: int) -> None:
    print("semi-Lagrangian branch sweep (101 velocity samples)")
    print(f"{'nodes':>8} {'cython ms':>10} {'numpy ms':>10} {'speedup':>8} {'max diff':>10}")
    fast, slow = kernels.compiled(), kernels.fallback()
    b = np.linspace(-2.0, 2.0, 101)
    c = b**2 / 4
    for n in (101, 1001, 10001):
        h = 1.0 / (n - 1)
        dt = h / 2.0
        vals = np.sin(np.linspace(0.0, 3.0, n))
        out_f, out_s = np.zeros(n), np.zeros(n)
        tf = _median_time(lambda: fast.dp_branch(vals, h, 1.0, b, c, dt, out_f), repeat)
        ts = _median_time(lambda: slow.dp_branch(vals, h, 1.0, b, c, dt, out_s), repeat)
        ok = np.isfinite(out_f) & np.isfinite(out_s)
        diff = float(np.max(np.abs(out_f[ok] - out_s[ok])))
        print(f"{n:>8} {tf * 1e3:>10.3f} {ts * 1e3:>10.3f} {ts / tf:>8.1f} {diff:>10.2e}")


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=20)
    args = parser.parse_args()
    if kernels.compiled() is None:
        raise SystemExit("compiled extension not built; run pip install -e . --no-build-isolation")
    bench_step(args.repeat)
    print()
    bench_dp(args.repeat)


if __name__ == "__main__":
    main()
