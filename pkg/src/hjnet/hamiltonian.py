"""Coercive quasi-convex Hamiltonians of one variable.

A Hamiltonian is nonincreasing left of its minimizer ``p0`` and nondecreasing
right of it. Each one exposes the monotone envelopes (``minus`` is the
nonincreasing part, ``plus`` the nondecreasing part) and partial inverses
returning the root of ``H = level`` on the chosen monotone side.

Closed-form families override the generic numerical routines (minimizer
search, bisection, finite-difference derivative) where an exact answer is
cheap, which keeps the solvers exact on linear data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from .errors import BelowMinimum, InvalidArgument, InvalidHamiltonian, SearchBoundExceeded

DEFAULT_SEARCH_BOUND = 64.0
MAX_BISECTION_STEPS = 200
COERCIVITY_MARGIN = 1e-3
FD_STEP = 1e-6

# kernel tags understood by the compiled step routines
KIND_POWER = 0
KIND_MAX_AFFINE = 1
KIND_TABLE = 2


def _scalar_or_array(values: np.ndarray, like) -> float | np.ndarray:
    if np.ndim(like) == 0:
        return float(values)
    return values


class QuasiConvexHamiltonian:
    """Base class. Subclasses implement :meth:`_raw` on float arrays."""

    family = "generic"
    search_bound: float = DEFAULT_SEARCH_BOUND

    def _raw(self, p: np.ndarray) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def __call__(self, p):
        arr = np.asarray(p, dtype=float)
        return _scalar_or_array(self._raw(arr), p)

    # -- minimizer -----------------------------------------------------
    def _find_p0(self) -> float:
        return _leftmost_minimizer(self._raw, self.search_bound)

    @cached_property
    def p0(self) -> float:
        return float(self._find_p0())

    @cached_property
    def min_value(self) -> float:
        return float(self._raw(np.array([self.p0]))[0])

    # -- envelopes -----------------------------------------------------
    def minus(self, q):
        arr = np.asarray(q, dtype=float)
        out = np.where(arr <= self.p0, self._raw(arr), self.min_value)
        return _scalar_or_array(out, q)

    def plus(self, q):
        arr = np.asarray(q, dtype=float)
        out = np.where(arr >= self.p0, self._raw(arr), self.min_value)
        return _scalar_or_array(out, q)

    # -- partial inverses ---------------------------------------------
    def _check_level(self, lam: np.ndarray) -> np.ndarray:
        if np.any(~np.isfinite(lam)):
            raise InvalidArgument("levels must be finite")
        if np.any(lam < self.min_value - 1e-12):
            raise BelowMinimum(
                f"level {float(np.min(lam))} below the minimum {self.min_value} of {self!r}"
            )
        return np.maximum(lam, self.min_value)

    def _inverse(self, lam: np.ndarray, sign: int) -> np.ndarray:
        bound = self.search_bound
        edge = sign * bound
        if np.any(self._raw(np.array([edge]))[0] < lam):
            raise SearchBoundExceeded(
                f"level {float(np.max(lam))} not reached within |p| <= {bound} for {self!r}"
            )
        p0 = self.p0
        # the root is the boundary of the sublevel set {H < lam} on one side
        inner = np.full_like(lam, p0)
        outer = np.full_like(lam, edge)
        for _ in range(MAX_BISECTION_STEPS):
            mid = 0.5 * (inner + outer)
            below = self._raw(mid) < lam
            inner = np.where(below, mid, inner)
            outer = np.where(below, outer, mid)
            if np.all(np.abs(outer - inner) <= 4e-16 * np.maximum(1.0, np.abs(mid))):
                break
        return outer

    def partial_inverse(self, lam, sign: int):
        if sign not in (1, -1):
            raise InvalidArgument("sign must be +1 or -1")
        arr = self._check_level(np.asarray(lam, dtype=float))
        out = np.asarray(self._inverse(np.atleast_1d(arr), sign)).reshape(arr.shape)
        return _scalar_or_array(out, lam)

    # -- derivative ----------------------------------------------------
    def derivative(self, p, side: int = 0):
        """Central difference; ``side`` = +1/-1 selects a one-sided quotient."""
        arr = np.asarray(p, dtype=float)
        h = FD_STEP * np.maximum(1.0, np.abs(arr))
        if side > 0:
            out = (self._raw(arr + h) - self._raw(arr)) / h
        elif side < 0:
            out = (self._raw(arr) - self._raw(arr - h)) / h
        else:
            out = (self._raw(arr + h) - self._raw(arr - h)) / (2 * h)
        return _scalar_or_array(out, p)

    # -- checks and utilities -----------------------------------------
    def validate(self, samples: int = 4001, margin: float = COERCIVITY_MARGIN) -> None:
        """Check quasi-convexity on a grid and coercivity at the search bound."""
        p0 = self.p0
        bound = self.search_bound
        h_min = self.min_value
        lo = self(-bound)
        hi = self(bound)
        if not (lo >= h_min + margin and hi >= h_min + margin):
            raise InvalidHamiltonian(f"{self!r} is not coercive on [-{bound}, {bound}]")
        _check_quasi_convex(self._raw, bound, samples, p0)

    def lipschitz(self, lo: float, hi: float, samples: int = 65) -> float:
        """Largest difference quotient of H over ``[lo, hi]``."""
        grid = np.linspace(lo, hi, samples)
        vals = self._raw(grid)
        return float(np.max(np.abs(np.diff(vals)) / np.diff(grid)))

    def shifted(self, dp: float = 0.0, dc: float = 0.0) -> "QuasiConvexHamiltonian":
        """The Hamiltonian ``p -> H(p + dp) - dc``."""
        base = self
        return CallableHamiltonian(
            lambda p: base._raw(p + dp) - dc,
            name=f"{self!r} shifted by ({dp}, {dc})",
            search_bound=self.search_bound + abs(dp),
        )

    def kernel_spec(self) -> tuple[int, np.ndarray] | None:
        """``(kind, params)`` for the compiled kernels, or ``None`` if unsupported."""
        return None


def _leftmost_minimizer(fn: Callable[[np.ndarray], np.ndarray], bound: float) -> float:
    grid = np.linspace(-bound, bound, 4097)
    vals = fn(grid)
    if not np.all(np.isfinite(vals)):
        raise InvalidHamiltonian("Hamiltonian is not finite on its search window")
    k = int(np.argmin(vals))
    _check_quasi_convex(fn, bound, 4097, float(grid[k]), grid=grid, vals=vals)
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    # ternary search biased to the left so plateaus resolve to their left end
    for _ in range(MAX_BISECTION_STEPS):
        if hi - lo <= 1e-13:
            break
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        f1, f2 = fn(np.array([m1, m2]))
        if f1 <= f2:
            hi = m2
        else:
            lo = m1
    best = 0.5 * (lo + hi)
    # keep the sampled point when it is strictly lower, or as low and further left
    f_grid, f_best = fn(np.array([grid[k], best]))
    if f_grid < f_best or (f_grid == f_best and grid[k] <= best):
        return float(grid[k])
    return float(best)


def _check_quasi_convex(fn, bound, samples, p0, grid=None, vals=None) -> None:
    if grid is None:
        grid = np.linspace(-bound, bound, samples)
        vals = fn(grid)
    scale = 1e-9 * (1.0 + np.abs(vals))
    left = grid <= p0
    right = grid >= p0
    dl = np.diff(vals[left])
    dr = np.diff(vals[right])
    if np.any(dl > scale[left][1:]) or np.any(dr < -scale[right][1:]):
        raise InvalidHamiltonian("sampled values are not quasi-convex")


# ---------------------------------------------------------------------------
# closed-form families


@dataclass(frozen=True, eq=False)
class PowerHamiltonian(QuasiConvexHamiltonian):
    """``scale * |p - center| ** exponent + offset`` with ``exponent >= 1``."""

    scale: float = 1.0
    center: float = 0.0
    exponent: float = 2.0
    offset: float = 0.0
    search_bound: float = DEFAULT_SEARCH_BOUND
    family = "power"

    def __post_init__(self) -> None:
        if not (self.scale > 0) or not (self.exponent >= 1):
            raise InvalidHamiltonian("power family needs scale > 0 and exponent >= 1")

    def _raw(self, p: np.ndarray) -> np.ndarray:
        d = np.abs(p - self.center)
        if self.exponent == 2.0:
            mag = d * d
        elif self.exponent == 1.0:
            mag = d
        else:
            mag = d**self.exponent
        return self.scale * mag + self.offset

    def _find_p0(self) -> float:
        return self.center

    def _inverse(self, lam: np.ndarray, sign: int) -> np.ndarray:
        reach = self.search_bound - sign * self.center
        r = (lam - self.offset) / self.scale
        if self.exponent == 2.0:
            dist = np.sqrt(r)
        elif self.exponent == 1.0:
            dist = r
        else:
            dist = r ** (1.0 / self.exponent)
        if np.any(dist > reach):
            raise SearchBoundExceeded(f"level {float(np.max(lam))} beyond the search bound")
        return self.center + sign * dist

    def derivative(self, p, side: int = 0):
        arr = np.asarray(p, dtype=float)
        d = arr - self.center
        if self.exponent == 1.0:
            slope = np.sign(d) * self.scale
            at_kink = d == 0
            slope = np.where(at_kink, self.scale * np.sign(side) if side else 0.0, slope)
        else:
            slope = self.scale * self.exponent * np.sign(d) * np.abs(d) ** (self.exponent - 1)
        return _scalar_or_array(slope, p)

    def shifted(self, dp: float = 0.0, dc: float = 0.0) -> "PowerHamiltonian":
        return PowerHamiltonian(
            self.scale, self.center - dp, self.exponent, self.offset - dc,
            self.search_bound + abs(dp),
        )

    def kernel_spec(self):
        return KIND_POWER, np.array([self.scale, self.center, self.exponent, self.offset])

    def __repr__(self) -> str:
        return f"PowerHamiltonian({self.scale}*|p-{self.center}|^{self.exponent}+{self.offset})"


def quadratic(scale: float = 1.0, center: float = 0.0, offset: float = 0.0, **kw) -> PowerHamiltonian:
    return PowerHamiltonian(scale, center, 2.0, offset, **kw)


@dataclass(frozen=True, eq=False)
class PiecewiseLinearHamiltonian(QuasiConvexHamiltonian):
    """Linear interpolation of a sample table, extended linearly past both ends."""

    knots: np.ndarray = field(default_factory=lambda: np.array([-1.0, 0.0, 1.0]))
    values: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 1.0]))
    search_bound: float = DEFAULT_SEARCH_BOUND
    family = "table"

    def __post_init__(self) -> None:
        k = np.asarray(self.knots, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if k.ndim != 1 or k.shape != v.shape or k.size < 2:
            raise InvalidHamiltonian("a sample table needs at least two (p, H) pairs")
        order = np.argsort(k, kind="stable")
        k, v = k[order], v[order]
        if np.any(np.diff(k) <= 0):
            raise InvalidHamiltonian("sample abscissae must be distinct")
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)

    def _raw(self, p: np.ndarray) -> np.ndarray:
        k, v = self.knots, self.values
        out = np.interp(p, k, v)
        left_slope = (v[1] - v[0]) / (k[1] - k[0])
        right_slope = (v[-1] - v[-2]) / (k[-1] - k[-2])
        out = np.where(p < k[0], v[0] + left_slope * (p - k[0]), out)
        return np.where(p > k[-1], v[-1] + right_slope * (p - k[-1]), out)

    def _find_p0(self) -> float:
        _check_quasi_convex(self._raw, self.search_bound, 4097, float(self.knots[np.argmin(self.values)]))
        return float(self.knots[int(np.argmin(self.values))])

    def shifted(self, dp: float = 0.0, dc: float = 0.0) -> "PiecewiseLinearHamiltonian":
        return PiecewiseLinearHamiltonian(self.knots - dp, self.values - dc, self.search_bound + abs(dp))

    def kernel_spec(self):
        return KIND_TABLE, np.concatenate([self.knots, self.values])

    def __repr__(self) -> str:
        return f"PiecewiseLinearHamiltonian({len(self.knots)} knots)"


@dataclass(frozen=True, eq=False)
class MaxAffineHamiltonian(QuasiConvexHamiltonian):
    """``p -> max_k (velocities[k] * p - costs[k])``, convex and piecewise linear."""

    velocities: np.ndarray = field(default_factory=lambda: np.array([-1.0, 1.0]))
    costs: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0]))
    search_bound: float = DEFAULT_SEARCH_BOUND
    family = "controls"

    def __post_init__(self) -> None:
        b = np.asarray(self.velocities, dtype=float).ravel()
        c = np.asarray(self.costs, dtype=float).ravel()
        if b.size == 0 or b.shape != c.shape:
            raise InvalidHamiltonian("velocities and costs must be non-empty and aligned")
        object.__setattr__(self, "velocities", b)
        object.__setattr__(self, "costs", c)

    def _raw(self, p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        return np.max(np.multiply.outer(p, self.velocities) - self.costs, axis=-1)

    def shifted(self, dp: float = 0.0, dc: float = 0.0) -> "MaxAffineHamiltonian":
        return MaxAffineHamiltonian(
            self.velocities, self.costs - self.velocities * dp + dc, self.search_bound + abs(dp)
        )

    def kernel_spec(self):
        return KIND_MAX_AFFINE, np.concatenate([self.velocities, self.costs])

    def __repr__(self) -> str:
        return f"MaxAffineHamiltonian({self.velocities.size} samples)"


@dataclass(frozen=True, eq=False)
class CallableHamiltonian(QuasiConvexHamiltonian):
    """Wraps any vectorised function of ``p``."""

    fn: Callable[[np.ndarray], np.ndarray] = np.abs
    name: str = "callable"
    search_bound: float = DEFAULT_SEARCH_BOUND

    def _raw(self, p: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(p), dtype=float) * np.ones_like(p)

    def __repr__(self) -> str:
        return f"CallableHamiltonian({self.name})"


@dataclass(frozen=True, eq=False)
class FlooredHamiltonian(QuasiConvexHamiltonian):
    """``p -> max(level, base(p))``; still quasi-convex."""

    base: QuasiConvexHamiltonian = field(default_factory=lambda: quadratic())
    level: float = 0.0

    @property
    def search_bound(self) -> float:  # type: ignore[override]
        return self.base.search_bound

    def _raw(self, p: np.ndarray) -> np.ndarray:
        return np.maximum(self.level, self.base._raw(p))

    def _find_p0(self) -> float:
        if self.level <= self.base.min_value:
            return self.base.p0
        return float(self.base.partial_inverse(self.level, -1))

    @cached_property
    def min_value(self) -> float:
        return max(float(self.level), self.base.min_value)

    def kernel_spec(self):
        return None

    def __repr__(self) -> str:
        return f"max({self.level}, {self.base!r})"


# ---------------------------------------------------------------------------
# functional interface


@dataclass(frozen=True)
class EnvelopePair:
    minus: Callable
    plus: Callable


def argmin(H: QuasiConvexHamiltonian) -> float:
    return H.p0


def envelopes(H: QuasiConvexHamiltonian) -> EnvelopePair:
    return EnvelopePair(H.minus, H.plus)


def partial_inverse(H: QuasiConvexHamiltonian, lam, sign: int):
    return H.partial_inverse(lam, sign)


def convex_surrogate(H: QuasiConvexHamiltonian, weight: float) -> QuasiConvexHamiltonian:
    """``H + weight * (p - p0)^2``: strictly convex and superlinear when H is convex."""
    p0 = H.p0
    if isinstance(H, PowerHamiltonian) and H.exponent == 2.0:
        return H
    return CallableHamiltonian(
        lambda p: H._raw(p) + weight * (p - p0) ** 2,
        name=f"{H!r} + {weight:g}(p-{p0:g})^2",
        search_bound=H.search_bound,
    )


def is_convex(H: QuasiConvexHamiltonian, samples: int = 2001) -> bool:
    grid = np.linspace(-H.search_bound, H.search_bound, samples)
    vals = H._raw(grid)
    second = vals[2:] - 2 * vals[1:-1] + vals[:-2]
    return bool(np.all(second >= -1e-9 * (1.0 + np.abs(vals[1:-1]))))


def is_strictly_convex_superlinear(H: QuasiConvexHamiltonian) -> bool:
    if isinstance(H, PowerHamiltonian):
        return H.exponent > 1.0
    grid = np.linspace(-H.search_bound, H.search_bound, 2001)
    vals = H._raw(grid)
    second = vals[2:] - 2 * vals[1:-1] + vals[:-2]
    return bool(np.all(second > 1e-12 * (1.0 + np.abs(vals[1:-1]))))


def as_float(x) -> float:
    v = float(x)
    if math.isnan(v):
        raise InvalidArgument("NaN is not a valid value")
    return v
