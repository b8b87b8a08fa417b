"""Monotone explicit scheme for ``u_t + H_e(u_x) = 0`` on a discretised network.

Interior nodes use the Godunov form ``max(H+(left slope), H-(right slope))``.
A junction row (vertex or truncated end) uses the limited flux

    max(A, H_e-(s_e) for tail incidences, H_e+(-s_e) for head incidences)

where ``s_e`` is the slope measured away from the node. A vertex may instead
carry a general monotone junction function ``F``, in which case the flux is
``max(F(s), the same envelope terms)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .errors import InvalidArgument, InvalidState, MaxIterations, RejectedStep
from .flux_limiter import (MINUS_INFINITY, JunctionFunction, LimiterValue,
                           reduce_to_flux_limit, resolve_limiter)
from .grid import HEAD, TAIL, Grid, GridFunction
from .hamiltonian import QuasiConvexHamiltonian
from .network import Network, build_junction

log = logging.getLogger(__name__)

VertexCondition = Union[float, type(MINUS_INFINITY), JunctionFunction]
HamiltonianSpec = Union[QuasiConvexHamiltonian, Sequence[QuasiConvexHamiltonian],
                        Mapping[str, QuasiConvexHamiltonian]]


@dataclass
class SchemeConfig:
    """Hamiltonians per edge, a condition per vertex, and the CFL safety factor.

    ``limiters`` maps vertex ids to a real limiter, ``MINUS_INFINITY`` or a
    :class:`JunctionFunction`; vertices not listed get ``MINUS_INFINITY``.
    Truncated half-line ends always use the state-constraint closure.
    """

    hamiltonians: HamiltonianSpec
    limiters: Mapping[str, VertexCondition] = field(default_factory=dict)
    cfl_safety: float = 0.5
    boundary: str = "state_constraint"
    backend: str | None = None

    def __post_init__(self) -> None:
        if not (0 < self.cfl_safety <= 1):
            raise InvalidArgument("cfl_safety must lie in (0, 1]")
        if self.boundary != "state_constraint":
            raise InvalidArgument(f"unsupported boundary treatment {self.boundary!r}")
        if self.backend not in (None, "cython", "python"):
            raise InvalidArgument(f"unknown backend {self.backend!r}")

    def hamiltonian_for(self, net: Network, edge_id: str) -> QuasiConvexHamiltonian:
        hs = self.hamiltonians
        if isinstance(hs, QuasiConvexHamiltonian):
            return hs
        if isinstance(hs, Mapping):
            if edge_id not in hs:
                raise InvalidArgument(f"no Hamiltonian for edge {edge_id!r}")
            return hs[edge_id]
        seq = list(hs)
        if len(seq) != len(net.edge_ids):
            raise InvalidArgument("one Hamiltonian per edge is required")
        return seq[net.edge_ids.index(edge_id)]


# ---------------------------------------------------------------------------
# pointwise fluxes


def godunov_flux(H: QuasiConvexHamiltonian, pL: float, pR: float) -> float:
    return max(float(H.plus(pL)), float(H.minus(pR)))


def junction_flux(net: Network, vertex_id: str, slopes: Sequence[float], config: SchemeConfig) -> float:
    """Flux at a vertex given one outward slope per incidence.

    Incidences are ordered as the vertex stores them: tail incidences first,
    then head incidences (a self-loop appears once in each group).
    """
    v = net.vertex(vertex_id)
    edges = list(v.incoming_minus) + list(v.incoming_plus)
    orient = [TAIL] * len(v.incoming_minus) + [HEAD] * len(v.incoming_plus)
    slopes = list(slopes)
    if len(slopes) != len(edges) or any(s is None for s in slopes):
        raise InvalidState(f"vertex {vertex_id!r} needs {len(edges)} slopes, got {len(slopes)}")
    terms = []
    for eid, o, s in zip(edges, orient, slopes):
        H = config.hamiltonian_for(net, eid)
        terms.append(float(H.minus(s)) if o == TAIL else float(H.plus(-s)))
    base = max(config.hamiltonian_for(net, e).min_value for e in edges)
    cond = config.limiters.get(vertex_id, MINUS_INFINITY)
    if isinstance(cond, JunctionFunction):
        return max(cond(np.asarray(slopes, dtype=float)), *terms)
    return max(resolve_limiter(cond, base), *terms)


# ---------------------------------------------------------------------------
# compiled operator


class Operator:
    """Everything needed to evaluate the numerical Hamiltonian on one grid."""

    def __init__(self, grid: Grid, config: SchemeConfig):
        self.grid = grid
        self.config = config
        net = grid.network
        uniq: list[QuasiConvexHamiltonian] = []
        index: dict[int, int] = {}
        edge_ham = []
        for eid in net.edge_ids:
            H = config.hamiltonian_for(net, eid)
            if id(H) not in index:
                index[id(H)] = len(uniq)
                uniq.append(H)
            edge_ham.append(index[id(H)])
        self.hamiltonians = uniq
        edge_ham = np.array(edge_ham, dtype=np.int64)
        g = grid
        self.int_node, self.int_left, self.int_right = g.int_node, g.int_left, g.int_right
        self.int_inv_dx = g.int_inv_dx
        self.int_ham = edge_ham[g.int_edge] if g.int_edge.size else g.int_edge
        self.inc_node, self.inc_nb, self.inc_inv_dx = g.inc_node, g.inc_nb, g.inc_inv_dx
        self.inc_orient, self.inc_row, self.row_node = g.inc_orient, g.inc_row, g.row_node
        self.inc_ham = edge_ham[g.inc_edge]
        self.int_groups = [(h, np.flatnonzero(self.int_ham == h)) for h in range(len(uniq))]
        self.inc_groups = [(h, np.flatnonzero(self.inc_ham == h)) for h in range(len(uniq))]

        for key in config.limiters:
            if key not in net.vertices:
                raise InvalidArgument(f"limiter given for unknown vertex {key!r}")
        floors = np.empty(len(g.rows))
        self.general: list[tuple[int, JunctionFunction, np.ndarray]] = []
        for r, row in enumerate(g.rows):
            base = max(config.hamiltonian_for(net, e).min_value for e in row.edges)
            cond = MINUS_INFINITY if row.is_truncation else config.limiters.get(row.key, MINUS_INFINITY)
            if isinstance(cond, JunctionFunction):
                if cond.arity != len(row.edges):
                    raise InvalidArgument(
                        f"junction function at {row.key!r} has arity {cond.arity}, vertex degree {len(row.edges)}"
                    )
                floors[r] = base
                self.general.append((r, cond, np.flatnonzero(self.inc_row == r)))
            else:
                floors[r] = resolve_limiter(cond, base)
        self.row_floor = floors

        # smallest spacing seen by each Hamiltonian, for the CFL bound
        self.ham_dx = np.full(len(uniq), np.inf)
        for h, sel in self.int_groups:
            if sel.size:
                self.ham_dx[h] = min(self.ham_dx[h], 1.0 / self.int_inv_dx[sel].max())
        for h, sel in self.inc_groups:
            if sel.size:
                self.ham_dx[h] = min(self.ham_dx[h], 1.0 / self.inc_inv_dx[sel].max())

        self._compiled = None
        specs = [H.kernel_spec() for H in uniq]
        want = config.backend
        mod = kernels.compiled()
        if want == "python" or mod is None or any(s is None for s in specs):
            if want == "cython" and (mod is None or any(s is None for s in specs)):
                raise InvalidArgument("compiled backend unavailable for this problem")
        else:
            self._compiled = mod
            kinds = np.array([s[0] for s in specs], dtype=np.int32)
            lengths = np.array([s[1].size for s in specs], dtype=np.int64)
            starts = np.concatenate([[0], np.cumsum(lengths)[:-1]]).astype(np.int64)
            self._tables = (
                kinds,
                np.array([H.p0 for H in uniq], dtype=float),
                np.array([H.min_value for H in uniq], dtype=float),
                starts,
                lengths,
                np.ascontiguousarray(np.concatenate([s[1] for s in specs]), dtype=float),
            )

    @property
    def backend(self) -> str:
        return "cython" if self._compiled is not None else "python"

    def raw(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Numerical Hamiltonian at every node and per-Hamiltonian slope ranges."""
        u = np.ascontiguousarray(u, dtype=float)
        if self._compiled is not None:
            out, smin, smax = self._compiled.numerical_hamiltonian(
                u, self.int_node, self.int_left, self.int_right, self.int_inv_dx, self.int_ham,
                self.inc_node, self.inc_nb, self.inc_inv_dx, self.inc_orient, self.inc_ham,
                self.inc_row, self.row_node, self.row_floor, *self._tables,
            )
        else:
            out, smin, smax = kernels.fallback().numerical_hamiltonian(u, self)
        for r, F, inc in self.general:
            s = (u[self.inc_nb[inc]] - u[self.inc_node[inc]]) * self.inc_inv_dx[inc]
            node = self.row_node[r]
            out[node] = max(out[node], F(s))
        return out, smin, smax

    def evaluate(self, u: np.ndarray) -> tuple[np.ndarray, float]:
        """``(numerical Hamiltonian, admissible dt)``."""
        out, smin, smax = self.raw(u)
        return out, self.admissible_dt(u, smin, smax)

    def admissible_dt(self, u, smin, smax) -> float:
        inv = 0.0
        for h, H in enumerate(self.hamiltonians):
            if not np.isfinite(smin[h]):
                continue
            lo, hi = float(smin[h]), float(smax[h])
            pad = 0.1 * max(hi - lo, abs(lo), abs(hi), 1.0)
            lip = H.lipschitz(lo - pad, hi + pad)
            inv = max(inv, lip / self.ham_dx[h])
        for r, F, inc in self.general:
            s = (u[self.inc_nb[inc]] - u[self.inc_node[inc]]) * self.inc_inv_dx[inc]
            base = F(s)
            weight = 0.0
            for k in range(s.size):
                q = s.copy()
                q[k] += 1e-6
                weight += abs(F(q) - base) / 1e-6 * self.inc_inv_dx[inc[k]]
            inv = max(inv, 1.1 * weight)
        if inv <= 0:
            return math.inf
        return self.config.cfl_safety / inv


def _initial_values(u0, grid: Grid) -> np.ndarray:
    if isinstance(u0, GridFunction):
        if u0.grid is not grid:
            raise InvalidArgument("initial grid function lives on a different grid")
        return u0.values.copy()
    if isinstance(u0, np.ndarray):
        if u0.shape != (grid.n_nodes,):
            raise InvalidArgument("initial array has the wrong length")
        return np.array(u0, dtype=float)
    if callable(u0):
        return grid.sample(u0)
    raise InvalidArgument("initial data must be a callable, an array or a GridFunction")


def step(state: GridFunction, dt: float, config: SchemeConfig, operator: Operator | None = None) -> GridFunction:
    """One explicit Euler step; raises :class:`RejectedStep` if ``dt`` breaks the CFL bound."""
    op = operator or Operator(state.grid, config)
    hhat, allowed = op.evaluate(state.values)
    if dt > allowed * (1 + 1e-12):
        raise RejectedStep(f"dt={dt} exceeds the CFL bound {allowed}", allowed)
    return GridFunction(state.grid, state.values - dt * hhat, state.time + dt)


def solve(u0, T: float, grid: Grid, config: SchemeConfig, *, snapshot_times: Sequence[float] | None = None,
          max_steps: int = 10_000_000) -> GridFunction:
    """March to time ``T`` with the largest admissible step each time.

    With ``snapshot_times`` the returned function carries the states at those
    times (steps are shortened to land on them) in ``info["snapshots"]``.
    """
    if not (T >= 0):
        raise InvalidArgument("T must be nonnegative")
    op = Operator(grid, config)
    u = _initial_values(u0, grid)
    targets = sorted(set(float(t) for t in (snapshot_times or []) if 0 <= t <= T) | {float(T)})
    snaps: list[GridFunction] = []
    t = 0.0
    steps = 0
    if targets and targets[0] == 0.0:
        snaps.append(GridFunction(grid, u.copy(), 0.0))
        targets.pop(0)
    for target in targets:
        while t < target:
            hhat, allowed = op.evaluate(u)
            dt = min(allowed, target - t)
            # land exactly on the target, not a rounding error short of it
            if target - (t + dt) <= 1e-14 * max(1.0, target):
                dt = target - t
                u = u - dt * hhat
                t = target
            else:
                u = u - dt * hhat
                t += dt
            steps += 1
            if steps > max_steps:
                raise MaxIterations(f"more than {max_steps} time steps", float("nan"))
            if not np.all(np.isfinite(u)):
                raise InvalidState("solution became non-finite")
        snaps.append(GridFunction(grid, u.copy(), t))
    out = GridFunction(grid, u, t, {"steps": steps, "backend": op.backend})
    if snapshot_times is not None:
        out.info["snapshots"] = snaps
    return out


# ---------------------------------------------------------------------------
# stationary problem


def _jacobian(op: Operator, u: np.ndarray, alpha: float) -> sp.csr_matrix:
    """Generalised Jacobian of ``alpha * u + Hhat(u)`` from the active branches."""
    n = u.size
    rows, cols, vals = [np.arange(n)], [np.arange(n)], [np.full(n, alpha)]
    pl = (u[op.int_node] - u[op.int_left]) * op.int_inv_dx
    pr = (u[op.int_right] - u[op.int_node]) * op.int_inv_dx
    for h, sel in op.int_groups:
        if not sel.size:
            continue
        H = op.hamiltonians[h]
        a, b = pl[sel], pr[sel]
        left = H.plus(a) >= H.minus(b)
        da = np.where(a > H.p0, H.derivative(a), 0.0) * op.int_inv_dx[sel]
        db = np.where(b < H.p0, H.derivative(b), 0.0) * op.int_inv_dx[sel]
        node = op.int_node[sel]
        rows += [node, node, node, node]
        cols += [node, op.int_left[sel], node, op.int_right[sel]]
        vals += [np.where(left, da, 0.0), np.where(left, -da, 0.0),
                 np.where(left, 0.0, -db), np.where(left, 0.0, db)]
    s = (u[op.inc_nb] - u[op.inc_node]) * op.inc_inv_dx
    q = np.where(op.inc_orient == TAIL, s, -s)
    terms = np.empty(s.size)
    slope = np.empty(s.size)
    for h, sel in op.inc_groups:
        if not sel.size:
            continue
        H = op.hamiltonians[h]
        tail = op.inc_orient[sel] == TAIL
        terms[sel] = np.where(tail, H.minus(q[sel]), H.plus(q[sel]))
        d = H.derivative(q[sel])
        active = np.where(tail, q[sel] < H.p0, q[sel] > H.p0)
        # d(term)/d(u_nb): tail -> H'(s) / dx, head -> -H'(-s) / dx
        slope[sel] = np.where(active, np.where(tail, d, -d), 0.0) * op.inc_inv_dx[sel]
    general_rows = {r for r, _, _ in op.general}
    for r in range(len(op.grid.rows)):
        inc = np.flatnonzero(op.inc_row == r)
        node = op.row_node[r]
        if r in general_rows:
            _, F, inc = next(g for g in op.general if g[0] == r)
            sv = s[inc]
            base = F(sv)
            if base >= terms[inc].max(initial=-np.inf):
                for k, i in enumerate(inc):
                    qv = sv.copy()
                    qv[k] += 1e-7
                    g = (F(qv) - base) / 1e-7 * op.inc_inv_dx[i]
                    rows += [[node], [node]]
                    cols += [[op.inc_nb[i]], [node]]
                    vals += [[g], [-g]]
                continue
        if inc.size == 0:
            continue
        k = inc[int(np.argmax(terms[inc]))]
        if terms[k] <= op.row_floor[r]:
            continue
        rows += [[node], [node]]
        cols += [[op.inc_nb[k]], [node]]
        vals += [[slope[k]], [-slope[k]]]
    return sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )


def solve_stationary(grid: Grid, config: SchemeConfig, alpha: float, *, u_init=None,
                     tol: float = 1e-8, max_iter: int = 1_000_000, implicit: bool = True) -> GridFunction:
    """Solve ``alpha * u + Hhat(u) = 0`` as the steady state of pseudo-time marching.

    The default marches with linearly implicit steps
    ``(I / tau + alpha I + J) delta = -R`` whose pseudo-time step ``tau`` grows
    as the residual falls, so the late iterations are Newton steps. A step that
    raises the residual is retried with a smaller ``tau``. With
    ``implicit=False`` the explicit iteration ``u <- u - tau R`` with ``tau``
    from the CFL bound is used instead. ``info["history"]`` records the
    residual sup-norm of every accepted iterate.
    """
    if not (alpha > 0):
        raise InvalidArgument("alpha must be positive")
    op = Operator(grid, config)
    u = np.zeros(grid.n_nodes) if u_init is None else _initial_values(u_init, grid)

    def residual(v):
        hhat, smin, smax = op.raw(v)
        return alpha * v + hhat, smin, smax

    R, smin, smax = residual(u)
    r = float(np.max(np.abs(R)))
    history = [r]
    iterations = 0
    eye = sp.identity(grid.n_nodes, format="csr")
    dt = op.admissible_dt(u, smin, smax)
    tau = dt if math.isfinite(dt) else 1.0 / alpha
    while r >= tol:
        if iterations >= max_iter:
            raise MaxIterations(f"stationary iteration stalled at residual {r:.3e}", r)
        iterations += 1
        if implicit:
            J = _jacobian(op, u, alpha)
            delta = spla.spsolve((J + eye / tau).tocsc(), R)
            cand = u - delta
        else:
            dt = op.admissible_dt(u, smin, smax)
            cand = u - (1.0 / (alpha + 1.0 / dt) if math.isfinite(dt) else 1.0 / alpha) * R
        if not np.all(np.isfinite(cand)):
            if not implicit:
                raise InvalidState("stationary iteration diverged")
            tau *= 0.25
            continue
        Rc, smin_c, smax_c = residual(cand)
        rc = float(np.max(np.abs(Rc)))
        if implicit:
            if rc > r:
                tau *= 0.25
                if tau < 1e-14:
                    raise MaxIterations(f"pseudo-time step collapsed at residual {r:.3e}", r)
                continue
            tau = min(tau * min(10.0, max(2.0, r / max(rc, 1e-300))), 1e15)
        u, R, r, smin, smax = cand, Rc, rc, smin_c, smax_c
        history.append(r)
    log.debug("stationary solve: %d iterations, residual %.3e", iterations, r)
    return GridFunction(grid, u, math.inf, {"history": history, "iterations": iterations,
                                            "method": "implicit" if implicit else "explicit",
                                            "residual": r})


# ---------------------------------------------------------------------------
# reduction experiment


@dataclass
class ReductionResult:
    relaxed: GridFunction
    limited: GridFunction
    flux_limit: float
    sup_gap: float


def reduction_experiment(F: JunctionFunction, Hs: Sequence[QuasiConvexHamiltonian], u0, T: float,
                         grid: Grid, cfl_safety: float = 0.5) -> ReductionResult:
    """Solve once with ``F`` at the vertex and once with the equivalent limiter."""
    net = grid.network
    if len(net.vertices) != 1:
        raise InvalidArgument("the reduction experiment runs on a junction")
    vertex = next(iter(net.vertices))
    hams = dict(zip(net.edge_ids, Hs))
    A_F = reduce_to_flux_limit(F, list(Hs))
    relaxed = solve(u0, T, grid, SchemeConfig(hams, {vertex: F}, cfl_safety))
    limited = solve(u0, T, grid, SchemeConfig(hams, {vertex: A_F}, cfl_safety))
    gap = float(np.max(np.abs(relaxed.values - limited.values)))
    return ReductionResult(relaxed, limited, A_F, gap)


def junction_grid(n_branches: int, dx: float, truncation: float) -> Grid:
    return Grid(build_junction(n_branches), dx, truncation)
