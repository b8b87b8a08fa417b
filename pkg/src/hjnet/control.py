"""Optimal control on a junction: Hamiltonians generated by sampled controls,
the vertex flux limit, tangential constants, and a dynamic-programming value
function used as an independent check of the PDE solver.

Controls are finite samples ``(b, l)``: velocity ``b`` (positive means moving
away from the vertex along the branch) and running cost ``l``. A branch
Hamiltonian is ``H(p) = max_k (b_k p - l_k)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import kernels
from .errors import Infeasible, InvalidArgument, NotCoercive, RejectedConfig
from .flux_limiter import MINUS_INFINITY, LimiterValue, a0
from .grid import Grid, GridFunction
from .hamiltonian import MaxAffineHamiltonian
from .network import Network, NetworkPoint

DEFAULT_VELOCITY_SAMPLES = 101


@dataclass(frozen=True)
class BranchControl:
    velocities: np.ndarray
    costs: np.ndarray

    def __post_init__(self) -> None:
        b = np.asarray(self.velocities, dtype=float).ravel()
        c = np.asarray(self.costs, dtype=float).ravel()
        if b.size == 0 or b.shape != c.shape:
            raise InvalidArgument("control samples must be non-empty (velocity, cost) pairs")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(c))):
            raise InvalidArgument("control samples must be finite")
        object.__setattr__(self, "velocities", b)
        object.__setattr__(self, "costs", c)

    @classmethod
    def from_samples(cls, samples: Sequence[tuple[float, float]]) -> "BranchControl":
        arr = np.asarray(samples, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])

    @classmethod
    def from_lagrangian(cls, L: Callable[[np.ndarray], np.ndarray], vmin: float, vmax: float,
                        count: int = DEFAULT_VELOCITY_SAMPLES) -> "BranchControl":
        """Sample ``count`` velocities evenly on ``[vmin, vmax]`` with costs ``L(v)``."""
        v = np.linspace(vmin, vmax, count)
        return cls(v, np.asarray(L(v), dtype=float) * np.ones_like(v))

    @property
    def samples(self) -> list[tuple[float, float]]:
        return list(zip(self.velocities.tolist(), self.costs.tolist()))

    def is_two_sided(self) -> bool:
        return bool(np.any(self.velocities < 0) and np.any(self.velocities > 0))


@dataclass(frozen=True)
class VertexControl:
    """Dwell controls at the vertex; every velocity must be zero."""

    velocities: np.ndarray = field(default_factory=lambda: np.zeros(0))
    costs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self) -> None:
        b = np.asarray(self.velocities, dtype=float).ravel()
        c = np.asarray(self.costs, dtype=float).ravel()
        if b.shape != c.shape:
            raise InvalidArgument("vertex samples must be (velocity, cost) pairs")
        if np.any(b != 0):
            raise InvalidArgument("vertex controls must have zero velocity")
        if not np.all(np.isfinite(c)):
            raise InvalidArgument("vertex costs must be finite")
        object.__setattr__(self, "velocities", b)
        object.__setattr__(self, "costs", c)

    @classmethod
    def from_samples(cls, samples: Sequence[tuple[float, float]]) -> "VertexControl":
        arr = np.asarray(samples, dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])

    @property
    def best_cost(self) -> float:
        return float(self.costs.min()) if self.costs.size else math.inf


@dataclass
class ControlProblem:
    junction: Network
    branch_controls: Mapping[str, BranchControl]
    vertex_control: VertexControl = field(default_factory=VertexControl)
    u0: Callable[[str, np.ndarray], np.ndarray] | None = None

    def __post_init__(self) -> None:
        net = self.junction
        if len(net.vertices) != 1 or not all(net.edges[e].is_half_line for e in net.edge_ids):
            raise InvalidArgument("control problems live on a junction of half-lines")
        missing = set(net.edge_ids) - set(self.branch_controls)
        if missing:
            raise InvalidArgument(f"missing controls for branches {sorted(missing)}")
        self.branch_controls = {e: self.branch_controls[e] for e in net.edge_ids}

    @property
    def vertex(self) -> str:
        return next(iter(self.junction.vertices))

    def hamiltonians(self) -> dict[str, MaxAffineHamiltonian]:
        return {e: hamiltonian_from_controls(bc) for e, bc in self.branch_controls.items()}

    def initial_value(self, point: NetworkPoint) -> float:
        if self.u0 is None:
            raise InvalidArgument("the problem has no initial cost")
        return float(np.asarray(self.u0(point.edge, np.array([point.offset])), dtype=float).ravel()[0])


# ---------------------------------------------------------------------------
# Hamiltonians from controls


def hamiltonian_from_controls(bc: BranchControl) -> MaxAffineHamiltonian:
    if not bc.is_two_sided():
        raise NotCoercive("velocities of both signs are needed for a coercive Hamiltonian")
    H = MaxAffineHamiltonian(bc.velocities, bc.costs)
    H.validate()
    return H


def h_minus_from_controls(bc: BranchControl) -> Callable:
    """Nonincreasing part of the branch Hamiltonian from the ``b <= 0`` samples.

    A zero-velocity sample costing ``-min H`` is added so the envelope floor is
    reached even when ``b = 0`` is not sampled.
    """
    floor = hamiltonian_from_controls(bc).min_value
    keep = bc.velocities <= 0
    b = np.concatenate([bc.velocities[keep], [0.0]])
    c = np.concatenate([bc.costs[keep], [-floor]])

    def h_minus(p):
        arr = np.asarray(p, dtype=float)
        out = np.max(np.multiply.outer(arr, b) - c, axis=-1)
        return float(out) if out.ndim == 0 else out

    return h_minus


def vertex_flux_limit(problem: ControlProblem) -> float:
    """``max(H0, A0)`` with ``H0 = max(-l0)`` over the vertex samples."""
    base = a0(list(problem.hamiltonians().values()))
    cost = problem.vertex_control.best_cost
    return base if math.isinf(cost) else max(-cost, base)


def _pair_best(b1, l1, b2, l2, regular: bool) -> float:
    """Smallest ``mu l1 + (1 - mu) l2`` over pairs with ``mu b1 + (1 - mu) b2 = 0``."""
    B1, B2 = b1[:, None], b2[None, :]
    L1, L2 = l1[:, None], l2[None, :]
    best = math.inf
    ok = (B1 <= 0) & (B2 >= 0)
    if not regular:
        # signs, not the product, which underflows for tiny velocities
        ok = ok | ((B1 >= 0) & (B2 <= 0))
    both_zero = (B1 == 0) & (B2 == 0)
    if np.any(ok & both_zero):
        best = min(best, float(np.min(np.where(ok & both_zero, np.minimum(L1, L2), np.inf))))
    mixed = ok & ~both_zero
    if np.any(mixed):
        with np.errstate(divide="ignore", invalid="ignore"):
            mu = B2 / (B2 - B1)
            cost = mu * L1 + (1 - mu) * L2
        best = min(best, float(np.min(np.where(mixed, cost, np.inf))))
    return best


def tangential_hamiltonians(bc1: BranchControl, bc2: BranchControl) -> tuple[LimiterValue, LimiterValue]:
    """``(H_T, H_T_reg)`` for a line split at 0.

    Velocities are in line coordinates: ``bc1`` controls the left half
    ``x < 0`` and ``bc2`` the right half. Stationary combinations mix one
    sample from each side; the regular ones point away from 0 on both sides.
    A side with no admissible pair reports ``MINUS_INFINITY``.
    """
    full = _pair_best(bc1.velocities, bc1.costs, bc2.velocities, bc2.costs, regular=False)
    reg = _pair_best(bc1.velocities, bc1.costs, bc2.velocities, bc2.costs, regular=True)
    as_value = lambda c: MINUS_INFINITY if math.isinf(c) else -c
    return as_value(full), as_value(reg)


def _dwell_cost(problem: ControlProblem, mode: str) -> float:
    if mode == "junction":
        return -vertex_flux_limit(problem)
    if mode not in ("tangential", "regular"):
        raise InvalidArgument(f"unknown dwell mode {mode!r}")
    edges = problem.junction.edge_ids
    best = problem.vertex_control.best_cost if mode == "tangential" else math.inf
    for i in edges:
        for j in edges:
            if i == j:
                continue
            # branch i read as the left half-line: its outgoing velocities become negative
            bi, bj = problem.branch_controls[i], problem.branch_controls[j]
            best = min(best, _pair_best(-bi.velocities, bi.costs, bj.velocities, bj.costs, mode == "regular"))
    return best


# ---------------------------------------------------------------------------
# dynamic programming


def _max_speed(problem: ControlProblem) -> float:
    return max(float(np.max(np.abs(bc.velocities))) for bc in problem.branch_controls.values())


def value_function_dp(problem: ControlProblem, T: float, grid: Grid, time_steps: int | None = None,
                      *, dwell: str = "junction", backend: str | None = None,
                      initial: np.ndarray | None = None) -> GridFunction:
    """Semi-Lagrangian dynamic programming for the value function at time ``T``.

    Each step takes ``u(t + dt, x) = min_k u(t, x - b_k dt) + l_k dt`` with
    linear interpolation along the branch. A characteristic whose foot falls
    behind the vertex is split exactly at the vertex: before the crossing it
    either dwells there or arrives from another branch. Beyond a truncated
    end the data are held constant.
    """
    if grid.network is not problem.junction:
        raise InvalidArgument("grid and problem use different networks")
    if not (T >= 0):
        raise InvalidArgument("T must be nonnegative")
    speed = _max_speed(problem)
    h_min = grid.min_dx
    if time_steps is None:
        time_steps = max(1, math.ceil(T * speed / h_min - 1e-9)) if T > 0 else 0
    dt = T / time_steps if time_steps else 0.0
    if speed * dt > h_min * (1 + 1e-12):
        raise RejectedConfig(f"max |b| dt = {speed * dt:.3g} exceeds dx = {h_min:.3g}")

    if initial is not None:
        u = np.array(initial, dtype=float)
    else:
        if problem.u0 is None:
            raise InvalidArgument("the problem has no initial cost")
        u = grid.sample(problem.u0)
    if backend == "python":
        mod = kernels.fallback()
    else:
        mod = kernels.compiled() or kernels.fallback()
        if backend == "cython" and kernels.compiled() is None:
            raise InvalidArgument("compiled backend unavailable")

    c_dwell = _dwell_cost(problem, dwell)
    vnode = grid.vertex_node(problem.vertex)
    branches = []
    for e in problem.junction.edge_ids:
        bc = problem.branch_controls[e]
        branches.append((e, grid.edge_nodes[e], grid.edge_dx[e], grid.edge_length[e],
                         np.ascontiguousarray(bc.velocities), np.ascontiguousarray(bc.costs)))

    for _ in range(time_steps):
        vals = {e: np.ascontiguousarray(u[nodes]) for e, nodes, *_ in branches}

        def at_vertex(s: float) -> float:
            # best value of being at the vertex at time t + s
            best = u[vnode] + c_dwell * s
            for e, nodes, h, length, b, c in branches:
                inc = b < 0
                if not np.any(inc):
                    continue
                foot = -b[inc] * s
                cand = np.interp(foot, grid.edge_offsets[e], vals[e]) + c[inc] * s
                best = min(best, float(cand.min()))
            return best

        new = u.copy()
        new[vnode] = at_vertex(dt)
        for e, nodes, h, length, b, c in branches:
            out = np.full(nodes.size, np.inf)
            mod.dp_branch(vals[e], h, length, b, c, dt, out)
            x = grid.edge_offsets[e]
            for j in np.flatnonzero(b > 0):
                ride = x / b[j]
                crossing = np.flatnonzero((ride < dt) & (np.arange(x.size) > 0))
                for k in crossing:
                    cand = at_vertex(dt - ride[k]) + c[j] * ride[k]
                    if cand < out[k]:
                        out[k] = cand
            new[nodes[1:]] = out[1:]
        if not np.all(np.isfinite(new)):
            raise Infeasible("some nodes are unreachable with the sampled controls")
        u = new
    return GridFunction(grid, u, T, {"dt": dt, "steps": time_steps, "dwell_cost": c_dwell})


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True)
class ControlSegment:
    """Hold one control for ``duration``. ``edge=None`` means dwelling at the vertex."""

    edge: str | None
    velocity: float
    duration: float
    cost: float | None = None


def _segment_cost(problem: ControlProblem, seg: ControlSegment) -> float:
    if seg.edge is None:
        if seg.velocity != 0:
            raise Infeasible("a vertex dwell needs zero velocity")
        costs = problem.vertex_control.costs
    else:
        bc = problem.branch_controls.get(seg.edge)
        if bc is None:
            raise Infeasible(f"unknown branch {seg.edge!r}")
        costs = bc.costs[np.isclose(bc.velocities, seg.velocity, rtol=0, atol=1e-12)]
    if seg.cost is not None:
        if not np.any(np.isclose(costs, seg.cost, rtol=0, atol=1e-12)):
            raise Infeasible(f"({seg.velocity}, {seg.cost}) is not a sampled control")
        return float(seg.cost)
    if costs.size == 0:
        raise Infeasible(f"velocity {seg.velocity} is not sampled on {seg.edge or 'the vertex'}")
    return float(costs.min())


def follow_schedule(problem: ControlProblem, start: NetworkPoint | None,
                    schedule: Sequence[ControlSegment]) -> tuple[NetworkPoint | None, float]:
    """End point (``None`` for the vertex) and running cost of a schedule."""
    here = start
    if here is not None:
        problem.junction.validate_point(here)
        if here.offset == 0:
            here = None
    running = 0.0
    for seg in schedule:
        if not (seg.duration >= 0):
            raise Infeasible("segment durations must be nonnegative")
        ell = _segment_cost(problem, seg)
        if seg.edge is None:
            if here is not None:
                raise Infeasible("cannot dwell at the vertex away from it")
        else:
            offset = 0.0 if here is None else here.offset
            if here is not None and here.edge != seg.edge:
                raise Infeasible(f"segment on {seg.edge!r} starts on {here.edge!r}")
            end = offset + seg.velocity * seg.duration
            if end < -1e-12:
                raise Infeasible("the trajectory passes through the vertex mid-segment")
            here = None if end <= 1e-12 else NetworkPoint(seg.edge, end)
        running += ell * seg.duration
    return here, running


def trajectory_cost(problem: ControlProblem, start: NetworkPoint | None,
                    schedule: Sequence[ControlSegment]) -> float:
    """``u0(start)`` plus the running cost of a piecewise-constant schedule."""
    _, running = follow_schedule(problem, start, schedule)
    origin = start or NetworkPoint(problem.junction.edge_ids[0], 0.0)
    return problem.initial_value(origin) + running
