# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled barrier Newton kernel.

Same problem, arguments, status codes and iteration rules as
``fdmec.sca._kernel_py.barrier_maximize``; see that module for the
problem statement.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport log, sqrt, isfinite, INFINITY

cnp.import_array()

cdef enum:
    CONVERGED = 0
    STOPPED = 1
    CERTIFIED_BELOW = 2
    MAX_NEWTON = 3
    NUMERICAL = 4


cdef class _Problem:
    cdef Py_ssize_t n, m, nt, nl
    cdef double nbar
    cdef long[::1] trow
    cdef double[::1] c, w, lin_b
    cdef double[:, ::1] a, l, lin_a
    # work buffers
    cdef double[::1] d, s, r, grad, gs_row
    cdef double[:, ::1] hess, gh

    def __init__(self, term_row, term_coef, term_a, row_lin, row_w, row_mask, lin_a, lin_b):
        keep = np.asarray(row_mask).astype(bool)
        rows = np.flatnonzero(keep)
        remap = -np.ones(len(keep), dtype=np.int64)
        remap[rows] = np.arange(len(rows))
        tsel = keep[term_row]
        self.trow = np.ascontiguousarray(remap[term_row[tsel]], dtype=np.int_)
        self.c = np.ascontiguousarray(term_coef[tsel], dtype=float)
        self.a = np.ascontiguousarray(term_a[tsel], dtype=float)
        self.l = np.ascontiguousarray(row_lin[rows], dtype=float)
        self.w = np.ascontiguousarray(row_w[rows], dtype=float)
        self.lin_a = np.ascontiguousarray(lin_a, dtype=float)
        self.lin_b = np.ascontiguousarray(lin_b, dtype=float)
        self.m = len(rows)
        self.nt = self.a.shape[0]
        self.nl = self.lin_b.shape[0]
        self.n = term_a.shape[1] - 1
        self.nbar = self.m + self.nl + self.n
        self.d = np.empty(self.nt)
        self.s = np.empty(self.m)
        self.r = np.empty(self.nl)
        self.grad = np.empty(self.n + 1)
        self.gs_row = np.empty(self.n + 1)
        self.hess = np.empty((self.n + 1, self.n + 1))
        self.gh = np.empty((self.m, self.n + 1))

    cdef bint slacks(self, double[::1] z, double[::1] d, double[::1] s, double[::1] r) nogil:
        cdef Py_ssize_t i, j, k, n = self.n
        cdef double acc, tau = z[n]
        for i in range(n):
            if z[i] <= 0:
                return False
        for j in range(self.nl):
            acc = self.lin_b[j]
            for i in range(n):
                acc -= self.lin_a[j, i] * z[i]
            if acc <= 0:
                return False
            r[j] = acc
        for j in range(self.m):
            acc = self.l[j, n]
            for i in range(n):
                acc += self.l[j, i] * z[i]
            s[j] = acc
        for k in range(self.nt):
            acc = self.a[k, n]
            for i in range(n):
                acc += self.a[k, i] * z[i]
            if acc <= 0:
                return False
            d[k] = acc
            s[self.trow[k]] += self.c[k] * log(acc)
        for j in range(self.m):
            s[j] -= self.w[j] * tau
            if not (s[j] > 0) or not isfinite(s[j]):
                return False
        return True

    cdef double barrier(self, double[::1] z, double tb, double[::1] s, double[::1] r) nogil:
        cdef Py_ssize_t i, n = self.n
        cdef double f = -tb * z[n]
        for i in range(self.m):
            f -= log(s[i])
        for i in range(self.nl):
            f -= log(r[i])
        for i in range(n):
            f -= log(z[i])
        return f

    cdef void newton_system(self, double[::1] z, double tb) nogil:
        cdef Py_ssize_t i, j, k, q, n = self.n, np1 = self.n + 1
        cdef double g, v
        cdef double[::1] d = self.d, s = self.s, r = self.r, grad = self.grad
        cdef double[:, ::1] gh = self.gh, hess = self.hess
        for j in range(self.m):
            for i in range(n):
                gh[j, i] = self.l[j, i]
            gh[j, n] = -self.w[j]
        for k in range(self.nt):
            g = self.c[k] / d[k]
            j = self.trow[k]
            for i in range(n):
                gh[j, i] += g * self.a[k, i]
        for i in range(np1):
            grad[i] = 0.0
            for q in range(np1):
                hess[i, q] = 0.0
        grad[n] = -tb
        # row terms: gradient -gh/s, Hessian (gh/s)(gh/s)^T
        for j in range(self.m):
            for i in range(np1):
                self.gs_row[i] = gh[j, i] / s[j]
                grad[i] -= self.gs_row[i]
            for i in range(np1):
                v = self.gs_row[i]
                if v != 0.0:
                    for q in range(np1):
                        hess[i, q] += v * self.gs_row[q]
        # curvature of each log term
        for k in range(self.nt):
            v = self.c[k] / (d[k] * d[k] * s[self.trow[k]])
            for i in range(n):
                g = self.a[k, i]
                if g != 0.0:
                    g *= v
                    for q in range(n):
                        hess[i, q] += g * self.a[k, q]
        # linear constraints
        for j in range(self.nl):
            for i in range(n):
                v = self.lin_a[j, i] / r[j]
                grad[i] += v
                if v != 0.0:
                    for q in range(n):
                        hess[i, q] += v * self.lin_a[j, q] / r[j]
        for i in range(n):
            grad[i] -= 1.0 / z[i]
            hess[i, i] += 1.0 / (z[i] * z[i])


cdef bint _cholesky_solve(double[:, ::1] hs, double[::1] b, double[::1] x,
                          double[:, ::1] low, double ridge) nogil:
    cdef Py_ssize_t i, j, k, n = hs.shape[0]
    cdef double acc
    for i in range(n):
        for j in range(i + 1):
            acc = hs[i, j]
            if i == j:
                acc += ridge
            for k in range(j):
                acc -= low[i, k] * low[j, k]
            if i == j:
                if not (acc > 0):
                    return False
                low[i, i] = sqrt(acc)
            else:
                low[i, j] = acc / low[j, j]
    for i in range(n):
        acc = b[i]
        for k in range(i):
            acc -= low[i, k] * x[k]
        x[i] = acc / low[i, i]
    for i in range(n - 1, -1, -1):
        acc = x[i]
        for k in range(i + 1, n):
            acc -= low[k, i] * x[k]
        x[i] = acc / low[i, i]
    return True


cdef object _solve_spd(double[:, ::1] hess, double[::1] rhs, double[::1] out):
    cdef Py_ssize_t i, j, n = hess.shape[0]
    cdef double[::1] diag = np.empty(n)
    cdef double[::1] bs = np.empty(n)
    cdef double[:, ::1] hs = np.empty((n, n))
    cdef double[:, ::1] low = np.empty((n, n))
    for i in range(n):
        diag[i] = sqrt(max(hess[i, i], 1e-300))
    for i in range(n):
        bs[i] = rhs[i] / diag[i]
        for j in range(n):
            hs[i, j] = hess[i, j] / (diag[i] * diag[j])
    if not _cholesky_solve(hs, bs, out, low, 0.0):
        if not _cholesky_solve(hs, bs, out, low, 1e-12):
            sol = np.linalg.lstsq(np.asarray(hs), np.asarray(bs), rcond=None)[0]
            for i in range(n):
                out[i] = sol[i]
    for i in range(n):
        out[i] /= diag[i]


def barrier_maximize(term_row, term_coef, term_a, row_lin, row_w, row_mask, lin_a, lin_b,
                     u0, tau0, double tb0=1.0, double mu=20.0, double gap_tol=1e-10,
                     double stop_tau=INFINITY, double infeasible_below=-INFINITY,
                     int max_newton=500):
    """Run the path-following method; returns ``(u, tau, status, newton_steps)``."""
    u0 = np.asarray(u0, dtype=float)
    cdef Py_ssize_t n = len(u0), np1 = n + 1, i
    cdef _Problem prob = _Problem(
        np.asarray(term_row, dtype=np.int64), np.asarray(term_coef, float),
        np.asarray(term_a, float), np.asarray(row_lin, float), np.asarray(row_w, float),
        np.asarray(row_mask), np.asarray(lin_a, float).reshape(-1, n),
        np.asarray(lin_b, float))
    cdef double[::1] z = np.empty(np1)
    cdef double[::1] cand = np.empty(np1)
    cdef double[::1] dz = np.empty(np1)
    cdef double[::1] neg = np.empty(np1)
    cdef double[::1] cd = np.empty(prob.nt)
    cdef double[::1] cs = np.empty(prob.m)
    cdef double[::1] cr = np.empty(prob.nl)
    cdef double tb = tb0, dec, f0, fc, step, gap
    cdef int steps = 0
    cdef bint ok, centered
    for i in range(n):
        z[i] = u0[i]
    z[n] = tau0

    def result(status):
        zz = np.asarray(z).copy()
        return zz[:n], float(zz[n]), status, steps

    if not prob.slacks(z, prob.d, prob.s, prob.r):
        return result(NUMERICAL)
    while True:
        centered = False
        while True:
            if steps >= max_newton:
                return result(MAX_NEWTON)
            prob.newton_system(z, tb)
            for i in range(np1):
                neg[i] = -prob.grad[i]
            _solve_spd(prob.hess, neg, dz)
            dec = 0.0
            for i in range(np1):
                dec += neg[i] * dz[i]
            if not isfinite(dec):
                return result(NUMERICAL)
            if dec <= 2e-10:
                centered = True
                break
            f0 = prob.barrier(z, tb, prob.s, prob.r)
            step = 1.0
            while True:
                for i in range(np1):
                    cand[i] = z[i] + step * dz[i]
                ok = prob.slacks(cand, cd, cs, cr)
                if ok:
                    fc = prob.barrier(cand, tb, cs, cr)
                    if fc <= f0 - 0.01 * step * dec and fc < f0:
                        break
                step *= 0.5
                if step < 1e-14:
                    ok = False
                    break
            steps += 1
            if not ok:
                break
            z[:] = cand
            prob.d[:] = cd
            prob.s[:] = cs
            prob.r[:] = cr
            if z[n] > stop_tau:
                return result(STOPPED)
            if step < 1e-6:
                break
        gap = prob.nbar / tb
        # the gap bound only holds on the central path
        if centered and z[n] + gap < infeasible_below:
            return result(CERTIFIED_BELOW)
        if gap < gap_tol:
            return result(CONVERGED)
        tb *= mu
