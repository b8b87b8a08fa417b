"""Pure numpy implementations of the hot loops.

These mirror ``_kernels.pyx`` operation for operation so both backends give
the same floating-point results on the table-driven Hamiltonian families.
The numpy versions also accept arbitrary Hamiltonian objects.
"""

from __future__ import annotations

import numpy as np

TAIL = 1


def numerical_hamiltonian(u, op):
    """Numerical Hamiltonian at every node plus per-Hamiltonian slope ranges."""
    out = np.empty_like(u)
    n_ham = len(op.hamiltonians)
    smin = np.full(n_ham, np.inf)
    smax = np.full(n_ham, -np.inf)

    pl = (u[op.int_node] - u[op.int_left]) * op.int_inv_dx
    pr = (u[op.int_right] - u[op.int_node]) * op.int_inv_dx
    vals = np.empty(pl.size)
    for h, sel in op.int_groups:
        H = op.hamiltonians[h]
        a, b = pl[sel], pr[sel]
        vals[sel] = np.maximum(H.plus(a), H.minus(b))
        if a.size:
            smin[h] = min(smin[h], a.min(), b.min())
            smax[h] = max(smax[h], a.max(), b.max())
    out[op.int_node] = vals

    s = (u[op.inc_nb] - u[op.inc_node]) * op.inc_inv_dx
    arg = np.where(op.inc_orient == TAIL, s, -s)
    terms = np.empty(s.size)
    for h, sel in op.inc_groups:
        H = op.hamiltonians[h]
        q = arg[sel]
        terms[sel] = np.where(op.inc_orient[sel] == TAIL, H.minus(q), H.plus(q))
        if q.size:
            smin[h] = min(smin[h], q.min())
            smax[h] = max(smax[h], q.max())
    rows = op.row_floor.copy()
    np.maximum.at(rows, op.inc_row, terms)
    out[op.row_node] = rows
    return out, smin, smax


def dp_branch(vals, h, length, velocities, costs, dt, out):
    """Semi-Lagrangian update of the non-vertex nodes of one branch.

    ``vals[k]`` sits at offset ``k * h``. Samples whose foot falls behind the
    vertex are skipped here (left at ``+inf``) and handled by the caller.
    """
    n = vals.size
    x = np.arange(1, n) * h
    x[-1] = length
    feet = x[:, None] - velocities[None, :] * dt
    ok = feet >= 0.0
    foot = np.minimum(np.where(ok, feet, 0.0), length)
    idx = np.minimum((foot / h).astype(np.int64), n - 2)
    t = (foot - idx * h) / h
    lo = vals[idx]
    interp = lo + t * (vals[idx + 1] - lo)
    cand = np.where(ok, interp + costs[None, :] * dt, np.inf)
    out[1:] = cand.min(axis=1)
    return out
