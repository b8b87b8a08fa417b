# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot loops: the numerical Hamiltonian of the explicit scheme and the
semi-Lagrangian branch sweep. Hamiltonians arrive as flat parameter tables."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, pow, floor, INFINITY

cnp.import_array()


cdef inline double h_eval(int kind, const double* prm, Py_ssize_t n, double p) noexcept nogil:
    cdef double d, v, best, slope, t
    cdef Py_ssize_t k, m, lo, hi, mid
    if kind == 0:
        d = fabs(p - prm[1])
        if prm[2] == 2.0:
            v = d * d
        elif prm[2] == 1.0:
            v = d
        else:
            v = pow(d, prm[2])
        return prm[0] * v + prm[3]
    elif kind == 1:
        m = n // 2
        best = prm[0] * p - prm[m]
        for k in range(1, m):
            v = prm[k] * p - prm[m + k]
            if v > best:
                best = v
        return best
    else:
        m = n // 2
        if p < prm[0]:
            slope = (prm[m + 1] - prm[m]) / (prm[1] - prm[0])
            return prm[m] + slope * (p - prm[0])
        if p > prm[m - 1]:
            slope = (prm[2 * m - 1] - prm[2 * m - 2]) / (prm[m - 1] - prm[m - 2])
            return prm[2 * m - 1] + slope * (p - prm[m - 1])
        lo = 0
        hi = m - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if prm[mid] <= p:
                lo = mid
            else:
                hi = mid
        if p == prm[hi]:
            return prm[m + hi]
        slope = (prm[m + lo + 1] - prm[m + lo]) / (prm[lo + 1] - prm[lo])
        return slope * (p - prm[lo]) + prm[m + lo]


cdef inline double h_minus(int kind, const double* prm, Py_ssize_t n, double p0, double hmin, double q) noexcept nogil:
    if q <= p0:
        return h_eval(kind, prm, n, q)
    return hmin


cdef inline double h_plus(int kind, const double* prm, Py_ssize_t n, double p0, double hmin, double q) noexcept nogil:
    if q >= p0:
        return h_eval(kind, prm, n, q)
    return hmin


def numerical_hamiltonian(const double[::1] u,
                          const long long[::1] int_node, const long long[::1] int_left,
                          const long long[::1] int_right, const double[::1] int_inv_dx,
                          const long long[::1] int_ham,
                          const long long[::1] inc_node, const long long[::1] inc_nb,
                          const double[::1] inc_inv_dx, const long long[::1] inc_orient,
                          const long long[::1] inc_ham, const long long[::1] inc_row,
                          const long long[::1] row_node, const double[::1] row_floor,
                          const int[::1] kind, const double[::1] p0, const double[::1] hmin,
                          const long long[::1] start, const long long[::1] length,
                          const double[::1] params):
    cdef Py_ssize_t n = u.shape[0]
    cdef Py_ssize_t n_ham = kind.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    smin_arr = np.full(n_ham, INFINITY)
    smax_arr = np.full(n_ham, -INFINITY)
    rows_arr = np.array(row_floor, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[::1] smin = smin_arr
    cdef double[::1] smax = smax_arr
    cdef double[::1] rows = rows_arr
    cdef Py_ssize_t i, h, node, r
    cdef double pl, pr, a, b, s, q, term
    cdef const double* prm
    with nogil:
        for i in range(int_node.shape[0]):
            node = int_node[i]
            h = int_ham[i]
            prm = &params[start[h]]
            pl = (u[node] - u[int_left[i]]) * int_inv_dx[i]
            pr = (u[int_right[i]] - u[node]) * int_inv_dx[i]
            a = h_plus(kind[h], prm, length[h], p0[h], hmin[h], pl)
            b = h_minus(kind[h], prm, length[h], p0[h], hmin[h], pr)
            out[node] = a if a >= b else b
            if pl < smin[h]: smin[h] = pl
            if pr < smin[h]: smin[h] = pr
            if pl > smax[h]: smax[h] = pl
            if pr > smax[h]: smax[h] = pr
        for i in range(inc_node.shape[0]):
            h = inc_ham[i]
            prm = &params[start[h]]
            s = (u[inc_nb[i]] - u[inc_node[i]]) * inc_inv_dx[i]
            if inc_orient[i] == 1:
                q = s
                term = h_minus(kind[h], prm, length[h], p0[h], hmin[h], q)
            else:
                q = -s
                term = h_plus(kind[h], prm, length[h], p0[h], hmin[h], q)
            if q < smin[h]: smin[h] = q
            if q > smax[h]: smax[h] = q
            r = inc_row[i]
            if term > rows[r]:
                rows[r] = term
        for r in range(row_node.shape[0]):
            out[row_node[r]] = rows[r]
    return out_arr, smin_arr, smax_arr


def dp_branch(const double[::1] vals, double h, double length,
              const double[::1] velocities, const double[::1] costs, double dt,
              double[::1] out):
    cdef Py_ssize_t n = vals.shape[0]
    cdef Py_ssize_t m = velocities.shape[0]
    cdef Py_ssize_t k, j, idx
    cdef double x, foot, t, lo, best, cand
    with nogil:
        for k in range(1, n):
            x = k * h
            if k == n - 1:
                x = length
            best = INFINITY
            for j in range(m):
                foot = x - velocities[j] * dt
                if foot < 0.0:
                    continue
                if foot > length:
                    foot = length
                idx = <Py_ssize_t> (foot / h)
                if idx > n - 2:
                    idx = n - 2
                t = (foot - idx * h) / h
                lo = vals[idx]
                cand = lo + t * (vals[idx + 1] - lo) + costs[j] * dt
                if cand < best:
                    best = cand
            out[k] = best
    return out
