"""Independent reference computations used by the tests.

Each oracle avoids the package's own numerical routines: closed forms worked
out by hand, or brute force over dense samples.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

# A_F for F(p) = 2 - p1 - p2 with H = p^2 on both branches: the level A with
# 2 - 2 sqrt(A) = A, i.e. sqrt(A) = sqrt(3) - 1.
REDUCED_LIMITER = (math.sqrt(3.0) - 1.0) ** 2

# Ishii limiters of (p^2, (p - 2)^2): the two parabolas cross at p = 1, level 1.
ISHII_QUADRATIC_PAIR = (0.0, 1.0)


def g0_quadratic(a: float, b: float, same_branch: bool) -> float:
    """Vertex test function for H = p^2 on every branch and A = 0."""
    return (a - b) ** 2 / 4 if same_branch else (a + b) ** 2 / 4


def sharp_breakpoints_quadratic(lambdas: np.ndarray) -> np.ndarray:
    """z^{k+1,+} = sqrt(l_{k+1}) + sqrt(l_k) for H = p^2."""
    r = np.sqrt(lambdas)
    return r[1:] + r[:-1]


def chord_maximum_crossing(h1, h2, lo: float, hi: float) -> float:
    """Max of ``min(h1, h2)`` on ``[lo, hi]`` between the two minimizers.

    One function is monotone up and the other down there, so the maximum sits
    where they cross (or at an end if they do not).
    """
    gap = lambda p: float(h1(p) - h2(p))
    ends = [min(float(h1(lo)), float(h2(lo))), min(float(h1(hi)), float(h2(hi)))]
    if gap(lo) * gap(hi) < 0:
        root = brentq(gap, lo, hi, xtol=1e-14, rtol=1e-15)
        ends.append(min(float(h1(root)), float(h2(root))))
    return max(ends)


def hopf_lax_junction(u0_by_branch: dict, branch: str, x: float, T: float,
                      length: float, n: int = 20001) -> float:
    """``min u0(y)`` over points within network distance ``T`` of ``(branch, x)``."""
    best = math.inf
    y = np.linspace(0.0, length, n)
    for name, fn in u0_by_branch.items():
        dist = np.abs(y - x) if name == branch else x + y
        mask = dist <= T + 1e-12
        if np.any(mask):
            best = min(best, float(np.min(fn(y[mask]))))
    return best


def effective_quadratic(P: float, A: float) -> float:
    """max(A, P^2); pass ``-inf`` for no limiter."""
    return max(A, P * P)
