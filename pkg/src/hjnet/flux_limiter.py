"""Junction conditions: minimal limiter, limited flux, reduction of general
monotone junction functions, extremal limiters for a two-sided discontinuity,
and the closed-form effective Hamiltonian of a periodic lattice.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Union

import numpy as np

from .errors import InvalidArgument, SearchBoundExceeded
from .hamiltonian import QuasiConvexHamiltonian

MAX_BISECTION_STEPS = 200
CHORD_GRID = 1001


class _MinusInfinity:
    """Tag for the limiter ``-inf``; collapses to the minimal limiter when used."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "MINUS_INFINITY"

    def __reduce__(self):
        return (_MinusInfinity, ())


MINUS_INFINITY = _MinusInfinity()

LimiterValue = Union[float, _MinusInfinity]


def parse_limiter(value) -> LimiterValue:
    """Accept a real, the tag, or the strings ``"-inf"``/``"minus_infinity"``."""
    if value is MINUS_INFINITY:
        return value
    if isinstance(value, str) and value.strip().lower() in {"-inf", "-infinity", "minus_infinity"}:
        return MINUS_INFINITY
    v = float(value)
    if math.isinf(v) and v < 0:
        return MINUS_INFINITY
    if not math.isfinite(v):
        raise InvalidArgument(f"limiter must be finite or -inf, got {value!r}")
    return v


def resolve_limiter(A: LimiterValue, A0: float) -> float:
    """The real limiter actually in force: ``max(A, A0)``."""
    if A is MINUS_INFINITY:
        return A0
    if not isinstance(A, (int, float, np.floating)) or not math.isfinite(A):
        raise InvalidArgument(f"limiter must be a finite real or MINUS_INFINITY, got {A!r}")
    return max(float(A), A0)


@dataclass(frozen=True)
class JunctionFunction:
    """A continuous function of the N vertex slopes, nonincreasing in each."""

    arity: int
    evaluator: Callable[[np.ndarray], float]
    name: str = "F"

    def __call__(self, p) -> float:
        p = np.asarray(p, dtype=float)
        if p.shape != (self.arity,):
            raise InvalidArgument(f"{self.name} expects {self.arity} slopes, got shape {p.shape}")
        return float(self.evaluator(p))

    def check_monotone(self, samples: int = 200, seed: int = 0, radius: float = 5.0) -> bool:
        rng = np.random.default_rng(seed)
        for _ in range(samples):
            p = rng.uniform(-radius, radius, self.arity)
            base = self(p)
            for i in range(self.arity):
                bump = p.copy()
                bump[i] += rng.uniform(0.0, 1.0)
                if self(bump) > base + 1e-9:
                    return False
        return True

    def lipschitz_sum(self, p, h: float = 1e-6) -> float:
        """Sum of the absolute one-sided partial difference quotients at ``p``."""
        p = np.asarray(p, dtype=float)
        base = self(p)
        total = 0.0
        for i in range(self.arity):
            q = p.copy()
            q[i] += h
            total += abs(self(q) - base) / h
        return total


def a0(Hs: Sequence[QuasiConvexHamiltonian]) -> float:
    if len(Hs) == 0:
        raise InvalidArgument("need at least one Hamiltonian")
    return max(H.min_value for H in Hs)


def f_A(A: LimiterValue, p, Hs: Sequence[QuasiConvexHamiltonian]) -> float:
    p = np.asarray(p, dtype=float).ravel()
    if p.size != len(Hs):
        raise InvalidArgument("one slope per branch is required")
    if not np.all(np.isfinite(p)):
        raise InvalidArgument("slopes must be finite")
    level = resolve_limiter(A, a0(Hs))
    return max(level, max(float(H.minus(pi)) for H, pi in zip(Hs, p)))


def flux_limited_function(A: LimiterValue, Hs: Sequence[QuasiConvexHamiltonian]) -> JunctionFunction:
    hs = list(Hs)
    return JunctionFunction(len(hs), lambda p: f_A(A, p, hs), name=f"F_{A}")


def flux_limit_reduction(F: JunctionFunction, Hs: Sequence[QuasiConvexHamiltonian]) -> tuple[float, np.ndarray]:
    """Return ``(A_F, p_bar)`` with ``p_bar[i]`` the right root of ``H_i = A_F``."""
    if F.arity != len(Hs):
        raise InvalidArgument("junction function arity does not match the branch count")
    base = a0(Hs)

    def right_roots(level: float) -> np.ndarray:
        return np.array([float(H.partial_inverse(level, +1)) for H in Hs])

    p_bar0 = right_roots(base)
    f0 = F(p_bar0)
    if f0 < base:
        return base, p_bar0

    def g(level: float) -> float:
        return F(right_roots(level)) - level

    lo = base
    hi = base + 10.0 * (1.0 + abs(f0))
    for _ in range(60):
        if g(hi) <= 0:
            break
        lo, hi = hi, base + 2.0 * (hi - base)
    else:  # pragma: no cover - defensive
        raise SearchBoundExceeded("no sign change of F(pi+(A)) - A found")
    for _ in range(MAX_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if g(mid) > 0:
            lo = mid
        else:
            hi = mid
    level = 0.5 * (lo + hi)
    return level, right_roots(level)


def reduce_to_flux_limit(F: JunctionFunction, Hs: Sequence[QuasiConvexHamiltonian]) -> float:
    return flux_limit_reduction(F, Hs)[0]


def _golden_max(fn: Callable[[float], float], lo: float, hi: float, iters: int = 200) -> tuple[float, float]:
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    c = hi - inv_phi * (hi - lo)
    d = lo + inv_phi * (hi - lo)
    fc, fd = fn(c), fn(d)
    for _ in range(iters):
        if hi - lo < 1e-14 * max(1.0, abs(lo)):
            break
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - inv_phi * (hi - lo)
            fc = fn(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + inv_phi * (hi - lo)
            fd = fn(d)
    x = 0.5 * (lo + hi)
    return x, fn(x)


def chord_maximum(H1: QuasiConvexHamiltonian, H2: QuasiConvexHamiltonian) -> float:
    """Maximum of ``min(H1, H2)`` over the segment between the two minimizers."""
    a, b = sorted((H1.p0, H2.p0))

    def lower(p):
        return np.minimum(H1(p), H2(p))

    if a == b:
        return float(lower(a))
    grid = np.linspace(a, b, CHORD_GRID)
    vals = lower(grid)
    k = int(np.argmax(vals))
    best = float(vals[k])
    lo = grid[max(k - 1, 0)]
    hi = grid[min(k + 1, grid.size - 1)]
    _, refined = _golden_max(lambda p: float(lower(p)), lo, hi)
    return max(best, refined)


def ishii_limiters(H1: QuasiConvexHamiltonian, H2: QuasiConvexHamiltonian) -> tuple[float, float]:
    """``(A_minus, A_plus)`` for the real line with H1 on the left and H2 on the right."""
    base = max(H1.min_value, H2.min_value)
    upper = max(chord_maximum(H1, H2), base)
    lower = upper if H2.p0 < H1.p0 else base
    return lower, upper


def effective_hamiltonian(P, Hs: Sequence[QuasiConvexHamiltonian], A: LimiterValue) -> float:
    P = np.atleast_1d(np.asarray(P, dtype=float))
    if P.size != len(Hs):
        raise InvalidArgument("P must have one component per direction")
    top = max(float(H(pi)) for H, pi in zip(Hs, P))
    # top >= A0 already, so the collapsed limiter never changes the answer
    return max(resolve_limiter(A, a0(Hs)), top)


def check_f_check(A: LimiterValue, q1: float, q2: float,
                  H1: QuasiConvexHamiltonian, H2: QuasiConvexHamiltonian) -> float:
    """Two-sided limited flux on the real line: ``max(A, H1+(q1), H2-(q2))``."""
    level = resolve_limiter(A, max(H1.min_value, H2.min_value))
    return max(level, float(H1.plus(q1)), float(H2.minus(q2)))
