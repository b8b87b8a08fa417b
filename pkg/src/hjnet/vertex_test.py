"""Two-point test functions on a junction.

Points are addressed as ``(branch, offset)`` with ``branch`` a 0-based index
into the junction's edge order; offset 0 is the vertex. Every kind of test
function offers a batched evaluator returning the value together with the
one-sided partial derivatives along the branches of ``x`` and ``y``, and all
kinds share one residual engine measuring

    H(y, -G_y(x, y)) - H(x, G_x(x, y))

where at a kink the Hamiltonian is ``max(H+(left slope), H-(right slope))``
and at the vertex it is the limited flux of the outward slopes.

Three kinds are provided:

* ``G0``: the supremum of ``p_i x - p_j y - lam`` over the germ, exact up to
  the bisection tolerance on the foliation level.
* ``regularized``: ``G0`` smoothed in a strip around each in-branch diagonal
  so that it is C^1 there, with diagonal excess bounded by ``gamma``.
* ``piecewise_sharp``: the same supremum restricted to the level ladder
  ``A, A + gamma0, A + 2 gamma0, ...``, piecewise linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (CannotRegularize, InvalidArgument, InvalidHamiltonian,
                     OutsideDomain, SearchBoundExceeded)
from .flux_limiter import LimiterValue, a0, f_A, resolve_limiter
from .hamiltonian import (QuasiConvexHamiltonian, convex_surrogate, is_convex,
                          is_strictly_convex_superlinear)
from .network import Network, NetworkPoint, build_junction

MAX_BISECTION_STEPS = 200
MAX_HALVINGS = 20
DEFAULT_RADIUS = 10.0
CHECK_RADIUS = 5.0


# ---------------------------------------------------------------------------
# germ and the level function


def germ_contains(p, lam: float, A: LimiterValue, Hs: Sequence[QuasiConvexHamiltonian],
                  tol: float = 1e-8) -> bool:
    p = np.atleast_1d(np.asarray(p, dtype=float))
    if p.size != len(Hs):
        raise InvalidArgument("one slope per branch is required")
    level = resolve_limiter(A, a0(Hs))
    on_level = all(abs(float(H(pi)) - lam) <= tol for H, pi in zip(Hs, p))
    if len(Hs) == 1:
        return on_level and lam >= level - tol
    return on_level and abs(f_A(A, p, Hs) - lam) <= tol


class _Branches:
    """Vectorised partial inverses and slopes for a list of Hamiltonians."""

    def __init__(self, Hs: Sequence[QuasiConvexHamiltonian]):
        self.Hs = list(Hs)
        self.N = len(self.Hs)
        self.level_cap = min(
            min(float(H(H.search_bound)), float(H(-H.search_bound))) for H in self.Hs
        )

    def reach(self) -> float:
        """Largest ``|z|_1`` whose level is guaranteed inside the search window."""
        cap = np.array([self.level_cap])
        return min(float(self.outer_slope(n, cap, s)[0]) for n in range(self.N) for s in (1, -1))

    def inverse(self, branch: np.ndarray, lam: np.ndarray, sign) -> np.ndarray:
        """``pi^sign_branch(lam)`` row by row; ``sign`` is a scalar or an array of +-1."""
        branch = np.asarray(branch)
        sign = np.broadcast_to(np.asarray(sign), branch.shape)
        out = np.empty(branch.shape, dtype=float)
        for n in range(self.N):
            for s in (1, -1):
                sel = (branch == n) & (sign == s)
                if np.any(sel):
                    out[sel] = self.Hs[n].partial_inverse(lam[sel], s)
        return out

    def outer_slope(self, n: int, lam: np.ndarray, s: int) -> np.ndarray:
        """``s * H_n'(pi^s_n(lam))``, one-sided at the minimizer."""
        H = self.Hs[n]
        p = np.asarray(H.partial_inverse(lam, s), dtype=float)
        central = np.asarray(H.derivative(p), dtype=float)
        sided = np.asarray(H.derivative(p, side=s), dtype=float)
        return s * np.where(p == H.p0, sided, central)

    def apply(self, name: str, branch: np.ndarray, q: np.ndarray) -> np.ndarray:
        out = np.empty(q.shape, dtype=float)
        for n in range(self.N):
            sel = branch == n
            if np.any(sel):
                out[sel] = getattr(self.Hs[n], name)(q[sel])
        return out


def _levels(Z: np.ndarray, A: float, br: _Branches) -> np.ndarray:
    """Foliation level for each row of ``Z`` (shape ``(M, N)``)."""
    M = Z.shape[0]
    absz = np.abs(Z)
    sig = np.where(Z > 0, 1, -1)
    nonzero = Z != 0

    def ratio(lam: np.ndarray, rows: np.ndarray) -> np.ndarray:
        total = np.zeros(rows.size)
        for n in range(br.N):
            for s in (1, -1):
                sel = nonzero[rows, n] & (sig[rows, n] == s)
                if not np.any(sel):
                    continue
                zb = br.outer_slope(n, lam[sel], s)
                with np.errstate(divide="ignore"):
                    total[sel] += np.where(zb > 0, absz[rows[sel], n] / np.where(zb > 0, zb, 1.0), np.inf)
        return total

    lam = np.full(M, A)
    rows = np.arange(M)
    active = rows[ratio(lam, rows) > 1.0]
    if active.size == 0:
        return lam
    lo = np.full(active.size, A)
    step = np.ones(active.size)
    hi = np.minimum(A + step, br.level_cap)
    for _ in range(MAX_BISECTION_STEPS):
        still = ratio(hi, active) > 1.0
        if not np.any(still):
            break
        if np.any(still & (hi >= br.level_cap)):
            raise SearchBoundExceeded("foliation level exceeds the Hamiltonians' search bound")
        lo = np.where(still, hi, lo)
        step = np.where(still, 2.0 * step, step)
        hi = np.where(still, np.minimum(A + step, br.level_cap), hi)
    for _ in range(MAX_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        done = (mid <= lo) | (mid >= hi)
        if np.all(done):
            break
        over = ratio(mid, active) > 1.0
        lo = np.where(over & ~done, mid, lo)
        hi = np.where(~over & ~done, mid, hi)
    lam[active] = hi
    return lam


def _clamped_level(A: LimiterValue, Hs) -> float:
    return resolve_limiter(A, a0(Hs))


def frak_L(z, A: LimiterValue, Hs: Sequence[QuasiConvexHamiltonian]) -> float:
    z = np.atleast_1d(np.asarray(z, dtype=float))
    if z.size != len(Hs):
        raise InvalidArgument("z must have one component per branch")
    if len(Hs) >= 2 and np.all(z > 0):
        raise OutsideDomain("z has every coordinate positive")
    return float(_levels(z[None, :], _clamped_level(A, Hs), _Branches(Hs))[0])


def frak_G(z, A: LimiterValue, Hs: Sequence[QuasiConvexHamiltonian]) -> tuple[float, float, np.ndarray]:
    """``(value, level, p)`` with ``value = z . p - level`` and ``p`` the maximizing germ slopes."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    lam = frak_L(z, A, Hs)
    br = _Branches(Hs)
    signs = np.where(z > 0, 1, -1)
    p = br.inverse(np.arange(len(Hs)), np.full(len(Hs), lam), signs)
    return float(np.dot(z, p) - lam), lam, p


# ---------------------------------------------------------------------------
# partial derivatives container


@dataclass
class Partials:
    """Value and one-sided partials of a batch; ``*_left`` is toward the vertex."""

    value: np.ndarray
    gx_left: np.ndarray
    gx_right: np.ndarray
    gy_left: np.ndarray
    gy_right: np.ndarray
    level: np.ndarray | None = None


def _as_rows(i, a, j, b):
    i = np.atleast_1d(np.asarray(i, dtype=int))
    j = np.atleast_1d(np.asarray(j, dtype=int))
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    i, a, j, b = np.broadcast_arrays(i, a, j, b)
    if np.any(a < 0) or np.any(b < 0):
        raise InvalidArgument("offsets must be nonnegative")
    return i.copy(), a.copy(), j.copy(), b.copy()


def _g0_batch(i, a, j, b, A: float, br: _Branches) -> Partials:
    M = i.size
    same = i == j
    Z = np.zeros((M, br.N))
    rows = np.arange(M)
    np.add.at(Z, (rows, i), a)
    np.add.at(Z, (rows, j), -b)
    lam = _levels(Z, A, br)
    pp_i = br.inverse(i, lam, 1)
    pm_i = br.inverse(i, lam, -1)
    pm_j = br.inverse(j, lam, -1)
    d = a - b

    # cross-branch rows: smooth, both sides agree
    gx = pp_i.copy()
    gy = -pm_j
    value = a * pp_i - b * pm_j - lam
    gxl, gxr, gyl, gyr = gx.copy(), gx.copy(), gy.copy(), gy.copy()

    up = same & (d > 0)
    down = same & (d < 0)
    tie = same & (d == 0)
    value = np.where(up, d * pp_i - lam, value)
    value = np.where(down, d * pm_i - lam, value)
    value = np.where(tie, -lam, value)
    for arr, v in ((gxl, pp_i), (gxr, pp_i)):
        arr[up] = v[up]
    gyl[up] = -pp_i[up]
    gyr[up] = -pp_i[up]
    gxl[down] = pm_i[down]
    gxr[down] = pm_i[down]
    gyl[down] = -pm_i[down]
    gyr[down] = -pm_i[down]
    # on the diagonal: moving x right enters {x > y}, moving y right enters {x < y}
    gxr[tie] = pp_i[tie]
    gxl[tie] = pm_i[tie]
    gyr[tie] = -pm_i[tie]
    gyl[tie] = -pp_i[tie]
    return Partials(value, gxl, gxr, gyl, gyr, lam)


# ---------------------------------------------------------------------------
# test function objects


@dataclass
class VertexTestFunction:
    """Normalised test function ``G`` with ``G(0, 0) = 0``.

    ``raw`` values (``G - A``) are what the underlying suprema produce; the
    normalisation shift does not change any gradient.
    """

    junction: Network
    hamiltonians: tuple
    A: float
    gamma: float
    kind: str
    epsilon: float | None = None
    cutoff: float | None = None
    gamma0: float | None = None
    ladder: "SharpLadder | None" = None
    surrogate: bool = False
    valid_radius: float = math.inf
    _br: _Branches = field(init=False, repr=False)
    _reg: dict = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        self._br = _Branches(self.hamiltonians)

    @property
    def n_branches(self) -> int:
        return len(self.hamiltonians)

    # raw batch, dispatched on kind
    def raw_batch(self, i, a, j, b) -> Partials:
        i, a, j, b = _as_rows(i, a, j, b)
        if np.any((i < 0) | (i >= self.n_branches) | (j < 0) | (j >= self.n_branches)):
            raise InvalidArgument("branch index out of range")
        if self.kind == "G0":
            return _g0_batch(i, a, j, b, self.A, self._br)
        if self.kind == "regularized":
            return _regularized_batch(self, i, a, j, b)
        if self.kind == "piecewise_sharp":
            return _sharp_batch(self, i, a, j, b)
        raise InvalidArgument(f"unknown kind {self.kind!r}")

    def batch(self, i, a, j, b) -> Partials:
        out = self.raw_batch(i, a, j, b)
        out.value = out.value + self.A
        return out

    def _index(self, x) -> tuple[int, float]:
        if isinstance(x, NetworkPoint):
            return self.junction.edge_ids.index(x.edge), float(x.offset)
        branch, offset = x
        return int(branch), float(offset)

    def __call__(self, x, y) -> float:
        (i, a), (j, b) = self._index(x), self._index(y)
        return float(self.batch(i, a, j, b).value[0])

    def gradients(self, x, y) -> tuple[float, float]:
        """Right partial derivatives along the branches of ``x`` and ``y``."""
        (i, a), (j, b) = self._index(x), self._index(y)
        out = self.raw_batch(i, a, j, b)
        return float(out.gx_right[0]), float(out.gy_right[0])


def _check_hamiltonians(Hs, gamma: float | None, strict: bool):
    hs = list(Hs)
    if not hs:
        raise InvalidArgument("need at least one branch")
    replaced = False
    out = []
    for H in hs:
        if not is_convex(H):
            raise InvalidHamiltonian(
                f"{H!r} is not convex; vertex test functions are built for convex Hamiltonians"
            )
        if is_strictly_convex_superlinear(H):
            out.append(H)
            continue
        if strict or gamma is None:
            raise InvalidHamiltonian(f"{H!r} must be strictly convex and superlinear")
        out.append(convex_surrogate(H, gamma / (12.0 * H.search_bound**2)))
        replaced = True
    return tuple(out), replaced


def g0_function(A: LimiterValue, Hs: Sequence[QuasiConvexHamiltonian]) -> VertexTestFunction:
    hs, _ = _check_hamiltonians(Hs, None, strict=True)
    level = _clamped_level(A, hs)
    return VertexTestFunction(build_junction(len(hs)), hs, level, 0.0, "G0")


def g0_eval(x: NetworkPoint, y: NetworkPoint, A: LimiterValue,
            Hs: Sequence[QuasiConvexHamiltonian]) -> tuple[float, float, float, float]:
    """``(value, grad_x, grad_y, level)`` of the raw ``G0`` (so ``G0(0, 0) = -A``).

    Gradients are right derivatives along the branches of ``x`` and ``y``.
    """
    G = g0_function(A, Hs)
    (i, a), (j, b) = G._index(x), G._index(y)
    out = G.raw_batch(i, a, j, b)
    return float(out.value[0]), float(out.gx_right[0]), float(out.gy_right[0]), float(out.level[0])


# ---------------------------------------------------------------------------
# regularisation


@dataclass(frozen=True)
class _Smoothing:
    """Convex C^1 replacement of ``L(s) = s * pi^{sign(s)}(A)`` near ``s = 0``.

    Inside ``[shrink * z_minus, shrink * z_plus]`` the graph is the quadratic
    Bezier arc with end tangents along the two lines of ``L`` (their
    intersection, the origin, is the control point); outside it equals ``L``.
    """

    z_minus: float
    z_plus: float
    slope_minus: float
    slope_plus: float
    shrink: float

    @classmethod
    def build(cls, H: QuasiConvexHamiltonian, A: float) -> "_Smoothing":
        pm = float(H.partial_inverse(A, -1))
        pp = float(H.partial_inverse(A, 1))
        zm = float(H.derivative(pm, side=-1 if pm == H.p0 else 0))
        zp = float(H.derivative(pp, side=1 if pp == H.p0 else 0))
        if not (zm < 0 < zp):
            raise CannotRegularize(f"saturation interval of {H!r} at level {A} is degenerate")
        probe = cls(zm, zp, pm, pp, 1.0)
        excess = float(probe.value(np.array([0.0]))[0])
        # scaling the interval keeps C^1 and scales the excess linearly
        return cls(zm, zp, pm, pp, min(1.0, 1.0 / excess) if excess > 0 else 1.0)

    def _tau(self, s: np.ndarray) -> np.ndarray:
        p0 = self.shrink * self.z_minus
        p2 = self.shrink * self.z_plus
        disc = np.maximum(s * (p0 + p2) - p0 * p2, 0.0)
        return (p0 - s) / (p0 - np.sqrt(disc))

    def inside(self, s: np.ndarray) -> np.ndarray:
        return (s > self.shrink * self.z_minus) & (s < self.shrink * self.z_plus)

    def linear(self, s: np.ndarray) -> np.ndarray:
        return np.where(s >= 0, s * self.slope_plus, s * self.slope_minus)

    def linear_slope(self, s: np.ndarray) -> np.ndarray:
        return np.where(s >= 0, self.slope_plus, self.slope_minus)

    def value(self, s: np.ndarray) -> np.ndarray:
        p0 = self.shrink * self.z_minus
        p2 = self.shrink * self.z_plus
        t = self._tau(s)
        curve = (1 - t) ** 2 * p0 * self.slope_minus + t**2 * p2 * self.slope_plus
        return np.where(self.inside(s), curve, self.linear(s))

    def slope(self, s: np.ndarray) -> np.ndarray:
        p0 = self.shrink * self.z_minus
        p2 = self.shrink * self.z_plus
        t = self._tau(s)
        num = -(1 - t) * p0 * self.slope_minus + t * p2 * self.slope_plus
        den = -(1 - t) * p0 + t * p2
        return np.where(self.inside(s), num / den, self.linear_slope(s))


def _smoothstep(s: np.ndarray, width: float) -> tuple[np.ndarray, np.ndarray]:
    u = np.clip(s / width, 0.0, 1.0)
    val = u**3 * (10.0 - 15.0 * u + 6.0 * u**2)
    der = 30.0 * u**2 * (1.0 - u) ** 2 / width
    return val, der


def _regularized_batch(G: VertexTestFunction, i, a, j, b) -> Partials:
    out = _g0_batch(i, a, j, b, G.A, G._br)
    eps = G.epsilon
    for n, smooth in G._reg.items():
        rows = np.flatnonzero((i == n) & (j == n))
        if rows.size == 0:
            continue
        ssum = a[rows] + b[rows]
        diff = a[rows] - b[rows]
        zeta, dzeta = _smoothstep(ssum, G.cutoff)
        width = eps * zeta
        safe = np.where(width > 0, width, 1.0)
        scaled = diff / safe
        strip = (width > 0) & smooth.inside(scaled)
        if not np.any(strip):
            continue
        r = rows[strip]
        w = width[strip]
        s = scaled[strip]
        lt = smooth.value(s)
        lp = smooth.slope(s)
        xi = lt - s * lp
        dw = eps * dzeta[strip]
        out.value[r] = w * lt - G.A
        gx = lp + dw * xi
        gy = -(lp - dw * xi)
        out.gx_left[r] = gx
        out.gx_right[r] = gx
        out.gy_left[r] = gy
        out.gy_right[r] = gy
    return out


def regularize(A: LimiterValue, Hs: Sequence[QuasiConvexHamiltonian], gamma: float,
               sample_count: int = 4000, seed: int = 0) -> VertexTestFunction:
    """C^1 test function with diagonal excess and compatibility residual at most ``gamma``."""
    if not (gamma > 0):
        raise InvalidArgument("gamma must be positive")
    hs, replaced = _check_hamiltonians(Hs, gamma, strict=False)
    level = _clamped_level(A, hs)
    reg: dict[int, _Smoothing] = {}
    for n, H in enumerate(hs):
        if float(H.partial_inverse(level, 1)) > float(H.partial_inverse(level, -1)):
            reg[n] = _Smoothing.build(H, level)
    zmax = max([max(-s.z_minus, s.z_plus) for s in reg.values()], default=0.0)
    cutoff = 1.0 + 4.0 * zmax
    # pairs with a + b below the reach have finite levels; nearly linear surrogates shrink it
    radius = min(CHECK_RADIUS, 0.45 * _Branches(hs).reach())
    eps = min(1.0, gamma)
    for _ in range(MAX_HALVINGS + 1):
        G = VertexTestFunction(build_junction(len(hs)), hs, level, gamma, "regularized",
                               epsilon=eps, cutoff=cutoff, surrogate=replaced, valid_radius=radius)
        G._reg = reg
        diag = diagonal_excess(G, sample_count=min(sample_count, 400), radius=radius)
        res = compatibility_residual(G, sample_count, seed=seed, radius=radius, strip_focus=True)
        if diag <= gamma and res <= gamma and diag >= -1e-12:
            return G
        eps *= 0.5
    raise CannotRegularize(f"no epsilon down to {eps * 2} met the budget {gamma}")


# ---------------------------------------------------------------------------
# the piecewise-linear construction


@dataclass
class SharpLadder:
    lambdas: np.ndarray
    slopes_plus: np.ndarray     # (N, K+1): pi+_i(lambda_k)
    slopes_minus: np.ndarray    # (N, K+1): pi-_i(lambda_k)
    breakpoints_plus: np.ndarray   # (N, K+1): z_i^{k,+}, z^{0,+} = 0
    breakpoints_minus: np.ndarray
    truncated: bool = False


def _build_ladder(level: float, br: _Branches, gamma0: float, radius: float,
                  max_levels: int = 100000) -> SharpLadder:
    lams = [level]
    pp = [[float(H.partial_inverse(level, 1))] for H in br.Hs]
    pm = [[float(H.partial_inverse(level, -1))] for H in br.Hs]
    zp = [[0.0] for _ in br.Hs]
    zm = [[0.0] for _ in br.Hs]
    truncated = False
    while len(lams) <= max_levels:
        if min(min(zp[n][-1], -zm[n][-1]) for n in range(br.N)) >= 2.0 * radius:
            break
        nxt = level + len(lams) * gamma0
        try:
            new_p = [float(H.partial_inverse(nxt, 1)) for H in br.Hs]
            new_m = [float(H.partial_inverse(nxt, -1)) for H in br.Hs]
        except SearchBoundExceeded:
            truncated = True
            break
        step = nxt - lams[-1]
        for n in range(br.N):
            zp[n].append(step / (new_p[n] - pp[n][-1]))
            zm[n].append(step / (new_m[n] - pm[n][-1]))
            pp[n].append(new_p[n])
            pm[n].append(new_m[n])
        lams.append(nxt)
    else:
        truncated = True
    return SharpLadder(np.array(lams), np.array(pp), np.array(pm), np.array(zp), np.array(zm), truncated)


def build_sharp(A: LimiterValue, Hs: Sequence[QuasiConvexHamiltonian], gamma0: float,
                radius: float = DEFAULT_RADIUS) -> tuple[VertexTestFunction, SharpLadder]:
    if not (gamma0 > 0):
        raise InvalidArgument("gamma0 must be positive")
    hs, replaced = _check_hamiltonians(Hs, gamma0, strict=False)
    level = _clamped_level(A, hs)
    br = _Branches(hs)
    ladder = _build_ladder(level, br, gamma0, radius)
    G = VertexTestFunction(build_junction(len(hs)), hs, level, gamma0, "piecewise_sharp",
                           gamma0=gamma0, ladder=ladder, surrogate=replaced)
    return G, ladder


def _sharp_batch(G: VertexTestFunction, i, a, j, b) -> Partials:
    lad = G.ladder
    lam = lad.lambdas[None, :]
    same = (i == j)[:, None]
    pp_i = lad.slopes_plus[i]
    pm_i = lad.slopes_minus[i]
    pm_j = lad.slopes_minus[j]
    A_, B_ = a[:, None], b[:, None]
    # family one: cross pieces, or the "+" pieces on a shared branch
    sx1 = pp_i
    sy1 = np.where(same, -pp_i, -pm_j)
    v1 = A_ * sx1 + B_ * sy1 - lam
    # family two: "-" pieces on a shared branch (duplicates family one otherwise)
    sx2 = np.where(same, pm_i, sx1)
    sy2 = np.where(same, -pm_i, sy1)
    v2 = A_ * sx2 + B_ * sy2 - lam
    vals = np.concatenate([v1, v2], axis=1)
    sx = np.concatenate([sx1, sx2], axis=1)
    sy = np.concatenate([sy1, sy2], axis=1)
    top = vals.max(axis=1)
    tol = 1e-9 * (1.0 + np.abs(top))
    active = vals >= (top - tol)[:, None]
    gxr = np.where(active, sx, -np.inf).max(axis=1)
    gxl = np.where(active, sx, np.inf).min(axis=1)
    gyr = np.where(active, sy, -np.inf).max(axis=1)
    gyl = np.where(active, sy, np.inf).min(axis=1)
    k = np.argmax(vals, axis=1) % lad.lambdas.size
    return Partials(top, gxl, gxr, gyl, gyr, lad.lambdas[k])


def sharp_region(G: VertexTestFunction, x, y) -> int:
    """Index ``k`` of the ladder level whose piece is active at ``(x, y)``."""
    (i, a), (j, b) = G._index(x), G._index(y)
    return int(np.searchsorted(G.ladder.lambdas, G.raw_batch(i, a, j, b).level[0]))


# ---------------------------------------------------------------------------
# residual engine


def _x_side_hamiltonian(G: VertexTestFunction, i, a, j, b, part: Partials) -> np.ndarray:
    br = G._br
    out = np.maximum(br.apply("plus", i, part.gx_left), br.apply("minus", i, part.gx_right))
    at_vertex = np.flatnonzero(a == 0)
    if at_vertex.size:
        flux = np.full(at_vertex.size, G.A)
        for k in range(G.n_branches):
            kk = np.full(at_vertex.size, k)
            sub = G.raw_batch(kk, np.zeros(at_vertex.size), j[at_vertex], b[at_vertex])
            flux = np.maximum(flux, br.apply("minus", kk, sub.gx_right))
        out[at_vertex] = flux
    return out


def _y_side_hamiltonian(G: VertexTestFunction, i, a, j, b, part: Partials) -> np.ndarray:
    br = G._br
    out = np.maximum(br.apply("plus", j, -part.gy_left), br.apply("minus", j, -part.gy_right))
    at_vertex = np.flatnonzero(b == 0)
    if at_vertex.size:
        flux = np.full(at_vertex.size, G.A)
        for k in range(G.n_branches):
            kk = np.full(at_vertex.size, k)
            sub = G.raw_batch(i[at_vertex], a[at_vertex], kk, np.zeros(at_vertex.size))
            flux = np.maximum(flux, br.apply("minus", kk, -sub.gy_right))
        out[at_vertex] = flux
    return out


def residuals(G: VertexTestFunction, i, a, j, b) -> tuple[Partials, np.ndarray]:
    """Per-pair ``H(y, -G_y) - H(x, G_x)`` along with the partials used."""
    i, a, j, b = _as_rows(i, a, j, b)
    part = G.raw_batch(i, a, j, b)
    hx = _x_side_hamiltonian(G, i, a, j, b, part)
    hy = _y_side_hamiltonian(G, i, a, j, b, part)
    part.value = part.value + G.A
    return part, hy - hx


def sample_pairs(G: VertexTestFunction, count: int, seed: int = 0,
                 radius: float = 5.0, strip_focus: bool = False):
    """Random pairs with some mass on the vertex, on shared branches and near diagonals."""
    rng = np.random.default_rng(seed)
    N = G.n_branches
    i = rng.integers(0, N, count)
    j = np.where(rng.random(count) < 0.5, i, rng.integers(0, N, count))
    a = rng.uniform(0.0, radius, count)
    b = rng.uniform(0.0, radius, count)
    a[rng.random(count) < 0.08] = 0.0
    b[rng.random(count) < 0.08] = 0.0
    if strip_focus:
        near = rng.random(count) < 0.4
        b = np.where(near, np.abs(a + rng.normal(0.0, 0.05 + 0.05 * a, count)), b)
    if G.kind == "piecewise_sharp" and G.ladder is not None:
        ka, kb = _kink_pairs(G, max(count // 5, 1), rng, radius)
        i = np.concatenate([i, ka[0]])
        a = np.concatenate([a, ka[1]])
        j = np.concatenate([j, kb[0]])
        b = np.concatenate([b, kb[1]])
    return i, a, j, b


def _kink_pairs(G: VertexTestFunction, count: int, rng, radius: float):
    """Pairs lying exactly on the breaklines of the ladder."""
    lad = G.ladder
    N = G.n_branches
    K = lad.lambdas.size - 1
    if K < 1:
        z = np.zeros(0, dtype=int)
        return (z, np.zeros(0)), (z, np.zeros(0))
    i = rng.integers(0, N, count)
    k = rng.integers(1, K + 1, count)
    # shared-branch kinks at x - y = z^{k,+} or z^{k,-}
    use_plus = rng.random(count) < 0.5
    gap = np.where(use_plus, lad.breakpoints_plus[i, k], lad.breakpoints_minus[i, k])
    base = rng.uniform(0.0, radius, count)
    a = np.where(gap > 0, base + gap, base)
    b = np.where(gap > 0, base, base - gap)
    # cross-branch kinks between consecutive ladder levels along random rays
    half = count // 2
    jc = (i[:half] + rng.integers(1, max(N, 2), half)) % N if N > 1 else i[:half]
    theta = rng.uniform(0.0, np.pi / 2, half)
    c, s = np.cos(theta), np.sin(theta)
    dpp = lad.slopes_plus[i[:half], k[:half]] - lad.slopes_plus[i[:half], k[:half] - 1]
    dpm = lad.slopes_minus[jc, k[:half]] - lad.slopes_minus[jc, k[:half] - 1]
    denom = c * dpp - s * dpm
    r = np.where(denom > 0, (lad.lambdas[k[:half]] - lad.lambdas[k[:half] - 1]) / np.where(denom > 0, denom, 1.0), 0.0)
    ac, bc = r * c, r * s
    if N > 1:
        j_all = np.concatenate([jc, i[half:]])
        a_all = np.concatenate([ac, a[half:]])
        b_all = np.concatenate([bc, b[half:]])
        i_all = i
    else:
        i_all, j_all, a_all, b_all = i, i, a, b
    return (i_all, a_all), (j_all, b_all)


def _mask_excluded(G: VertexTestFunction, i, a, j, b) -> np.ndarray:
    keep = np.ones(i.size, dtype=bool)
    if G.kind in ("G0", "piecewise_sharp"):
        keep &= ~((i == j) & (a == b) & (a > 0))
    return keep


def compatibility_residual(G: VertexTestFunction, sample_count: int = 10000, seed: int = 0,
                           radius: float = 5.0, strip_focus: bool = False) -> float:
    """Largest sampled ``H(y, -G_y) - H(x, G_x)``.

    For ``G0`` and the piecewise construction the exact in-branch diagonal
    away from the vertex is left out, where neither kind is meant to hold.
    """
    i, a, j, b = sample_pairs(G, sample_count, seed, radius, strip_focus)
    keep = _mask_excluded(G, i, a, j, b)
    _, res = residuals(G, i[keep], a[keep], j[keep], b[keep])
    return float(np.max(res))


def diagonal_excess(G: VertexTestFunction, sample_count: int = 400, radius: float = 5.0) -> float:
    """Largest ``G(x, x) - G(0, 0)`` over sampled in-branch diagonal points."""
    N = G.n_branches
    x = np.linspace(0.0, radius, sample_count)
    i = np.repeat(np.arange(N), x.size)
    xs = np.tile(x, N)
    vals = G.batch(i, xs, i, xs).value
    origin = G.batch(0, 0.0, 0, 0.0).value[0]
    excess = vals - origin
    return float(np.max(excess)) if np.min(excess) >= -1e-12 else float(np.min(excess))
