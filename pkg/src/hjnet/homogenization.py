"""Periodic networks, the cell problem by vanishing discount, and the
comparison of oscillating solutions with the homogenized equation.

The unit cell of the ``d``-dimensional lattice network is one vertex ``"0"``
with a self-loop ``"x1"`` (and ``"x2"`` when ``d = 2``) of length 1. With
drift ``P`` the edge in direction ``i`` carries ``q -> H_i(P_i + q)``.
"""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgument
from .flux_limiter import MINUS_INFINITY, LimiterValue, effective_hamiltonian, resolve_limiter
from .grid import Grid, GridFunction
from .hamiltonian import FlooredHamiltonian, QuasiConvexHamiltonian
from .network import Edge, Network
from .solver import SchemeConfig, solve, solve_stationary

log = logging.getLogger(__name__)

ALPHA_LADDER = (1e-1, 1e-2, 1e-3)
#: relative disagreement between the last rung and the extrapolated value that marks a run suspect
RICHARDSON_TOLERANCE = 0.1


def worker_count() -> int:
    """Thread cap from ``HJNET_THREADS`` (default: CPU count)."""
    raw = os.environ.get("HJNET_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise InvalidArgument(f"HJNET_THREADS must be an integer, got {raw!r}") from None
    return os.cpu_count() or 1


def _map(fn, items):
    items = list(items)
    workers = min(worker_count(), len(items))
    if workers <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


@dataclass
class PeriodicCell:
    hamiltonians: Sequence[QuasiConvexHamiltonian]
    A: LimiterValue = MINUS_INFINITY

    def __post_init__(self) -> None:
        self.hamiltonians = list(self.hamiltonians)
        if len(self.hamiltonians) not in (1, 2):
            raise InvalidArgument("cells of dimension 1 or 2 are supported")
        for H in self.hamiltonians:
            H.validate()
        resolve_limiter(self.A, 0.0)

    @property
    def dimension(self) -> int:
        return len(self.hamiltonians)

    def network(self) -> Network:
        return Network.from_edges(Edge(f"x{i + 1}", 1.0, "0", "0") for i in range(self.dimension))


@dataclass
class CellSolution:
    """``lambda_`` satisfies ``lambda_ = -Hbar(P)``; ``corrector`` vanishes at the vertex."""

    lambda_: float
    corrector: GridFunction
    alpha_ladder: tuple[float, ...]
    lambdas: tuple[float, ...] = ()
    extrapolated: float = math.nan
    suspect: bool = False


def build_periodic_network(d: int, epsilon: float, extent) -> Network:
    """Lattice network with spacing ``epsilon`` restricted to a box.

    ``extent`` is ``(lo, hi)`` for ``d = 1``; for ``d = 2`` either one pair
    used on both axes or a pair of pairs.
    """
    if d not in (1, 2):
        raise InvalidArgument(f"dimension {d} is not supported")
    if not (epsilon > 0):
        raise InvalidArgument("epsilon must be positive")
    ext = np.asarray(extent, dtype=float)
    if ext.shape == (2,):
        ext = np.tile(ext, (d, 1))
    if ext.shape != (d, 2) or np.any(ext[:, 1] < ext[:, 0]):
        raise InvalidArgument(f"bad extent {extent!r}")
    ranges = [range(math.ceil(lo / epsilon - 1e-9), math.floor(hi / epsilon + 1e-9) + 1) for lo, hi in ext]
    if any(len(r) < 2 for r in ranges):
        raise InvalidArgument("the box holds fewer than two lattice points per axis")
    edges = []
    if d == 1:
        ks = ranges[0]
        for k in ks[:-1]:
            edges.append(Edge(f"x{k}", epsilon, f"v{k}", f"v{k + 1}"))
    else:
        for i in ranges[0]:
            for j in ranges[1]:
                if i + 1 in ranges[0]:
                    edges.append(Edge(f"x{i}_{j}", epsilon, f"v{i}_{j}", f"v{i + 1}_{j}"))
                if j + 1 in ranges[1]:
                    edges.append(Edge(f"y{i}_{j}", epsilon, f"v{i}_{j}", f"v{i}_{j + 1}"))
    return Network.from_edges(edges)


def _cell_config(cell: PeriodicCell, P: np.ndarray) -> SchemeConfig:
    hams = {f"x{i + 1}": H.shifted(dp=float(P[i])) for i, H in enumerate(cell.hamiltonians)}
    return SchemeConfig(hams, {"0": cell.A})


def cell_problem(cell: PeriodicCell, P, grid_resolution: float = 0.02,
                 alpha_ladder: Sequence[float] = ALPHA_LADDER, tol: float = 1e-10) -> CellSolution:
    """Approximate ``(lambda, v)`` by ``alpha v + H(P + v') = 0`` for decreasing ``alpha``.

    ``alpha * v(0)`` tends to ``lambda``. The value at the smallest discount is
    returned; a Richardson extrapolation over the last two rungs flags runs
    whose ladder has not settled.
    """
    P = np.atleast_1d(np.asarray(P, dtype=float))
    if P.shape != (cell.dimension,):
        raise InvalidArgument(f"P needs {cell.dimension} components")
    ladder = tuple(sorted((float(a) for a in alpha_ladder), reverse=True))
    if not ladder or ladder[-1] <= 0:
        raise InvalidArgument("discounts must be positive")
    grid = Grid(cell.network(), grid_resolution)
    config = _cell_config(cell, P)
    vnode = grid.vertex_node("0")
    lambdas = []
    guess = None
    v = None
    for alpha in ladder:
        v = solve_stationary(grid, config, alpha, u_init=guess, tol=tol)
        lambdas.append(alpha * float(v.values[vnode]))
        # alpha * v is nearly alpha-independent, so rescale for the next rung
        guess = GridFunction(grid, v.values * alpha / ladder[min(len(lambdas), len(ladder) - 1)])
    lam = lambdas[-1]
    extrapolated, suspect = lam, False
    if len(ladder) >= 2:
        a1, a2 = ladder[-2], ladder[-1]
        l1, l2 = lambdas[-2], lambdas[-1]
        extrapolated = (a1 * l2 - a2 * l1) / (a1 - a2)
        suspect = abs(lam - extrapolated) > RICHARDSON_TOLERANCE * max(1.0, abs(extrapolated))
        if suspect:
            log.warning("discount ladder unsettled: %s vs extrapolated %.4g", lambdas, extrapolated)
    corrector = GridFunction(grid, v.values - v.values[vnode])
    return CellSolution(lam, corrector, ladder, tuple(lambdas), extrapolated, suspect)


@dataclass(frozen=True)
class EffectiveRow:
    P: tuple[float, ...]
    lambda_num: float
    lambda_formula: float
    gap: float


def effective_check(cell: PeriodicCell, P_samples, grid_resolution: float = 0.02) -> list[EffectiveRow]:
    """Compare the cell-problem constant with ``-Hbar(P)`` from the closed form."""
    samples = [tuple(np.atleast_1d(np.asarray(P, dtype=float)).tolist()) for P in P_samples]

    def run(P):
        sol = cell_problem(cell, P, grid_resolution)
        formula = -effective_hamiltonian(P, cell.hamiltonians, cell.A)
        return EffectiveRow(P, sol.lambda_, formula, abs(sol.lambda_ - formula))

    return _map(run, samples)


# ---------------------------------------------------------------------------
# epsilon convergence in one dimension


def line_values(u: GridFunction, xs: np.ndarray, lo: float, epsilon: float) -> np.ndarray:
    """Values of a solution on a 1-d lattice network at real positions ``xs``."""
    xs = np.asarray(xs, dtype=float)
    ids = set(u.grid.network.edge_ids)
    out = np.empty_like(xs)
    first = math.ceil(lo / epsilon - 1e-9)
    for i, x in enumerate(xs):
        k = math.floor(x / epsilon + 1e-12)
        if f"x{k}" not in ids:
            k -= 1
        if f"x{k}" not in ids:
            raise InvalidArgument(f"position {x} lies outside the network")
        out[i] = float(u.at(f"x{k}", min(max(x - k * epsilon, 0.0), epsilon)))
    return out


@dataclass(frozen=True)
class ConvergenceRow:
    eps: float
    sup_error: float


def _effective_line(cell: PeriodicCell, lo: float, hi: float) -> tuple[Network, SchemeConfig]:
    H = cell.hamiltonians[0]
    level = resolve_limiter(cell.A, H.min_value)
    Hbar = H if level <= H.min_value else FlooredHamiltonian(H, level)
    net = Network.from_edges([Edge("line", hi - lo, "left", "right")])
    return net, SchemeConfig({"line": Hbar}, {})


def eps_convergence(cell: PeriodicCell, u0: Callable[[np.ndarray], np.ndarray], T: float,
                    eps_ladder: Sequence[float], *, extent: tuple[float, float] = (-3.0, 3.0),
                    window: tuple[float, float] = (-1.5, 1.5), cells_per_edge: int = 16,
                    samples: int = 601) -> list[ConvergenceRow]:
    """Sup-error between the oscillating solve on the lattice and the homogenized solve.

    The lattice has the cell limiter at every interior vertex and a state
    constraint at the two box ends; ``window`` should stay outside their
    domain of influence up to time ``T``.
    """
    if cell.dimension != 1:
        raise InvalidArgument("epsilon studies are implemented for d = 1")
    lo, hi = extent
    xs = np.linspace(window[0], window[1], samples)
    H = cell.hamiltonians[0]
    finest = min(eps_ladder)
    dx_ref = finest / cells_per_edge
    net, config = _effective_line(cell, lo, hi)
    ref_grid = Grid(net, dx_ref)
    reference = solve(lambda e, x: u0(x + lo), T, ref_grid, config)
    ref_vals = reference.at("line", xs - lo)

    def run(eps):
        lattice = build_periodic_network(1, eps, extent)
        ends = {v for v, vx in lattice.vertices.items() if vx.degree == 1}
        limiters = {v: (MINUS_INFINITY if v in ends else cell.A) for v in lattice.vertices}
        grid = Grid(lattice, eps / cells_per_edge)

        def initial(eid, offsets):
            k = int(eid[1:])
            return u0(k * eps + offsets)

        sol = solve(initial, T, grid, SchemeConfig(H, limiters))
        err = float(np.max(np.abs(line_values(sol, xs, lo, eps) - ref_vals)))
        return ConvergenceRow(float(eps), err)

    return _map(run, list(eps_ladder))
