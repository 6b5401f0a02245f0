"""Pure-numpy barrier Newton kernel (fallback for the compiled ``_kernel``).

Solves, for variables ``u >= 0`` (n entries) and scalar ``tau``::

    maximize tau
    s.t.  h_j(u) = sum_{r in row j} c_r log(a_r . [u; 1]) + l_j . [u; 1] >= w_j tau
          A u <= b

for the rows with ``row_mask[j] != 0``.  Every ``a_r`` is nonnegative with a
positive last entry, so each ``h_j`` is concave and finite on ``u >= 0``.

The start ``u0`` must be strictly inside the linear constraints and every
masked row with ``w_j == 0`` must have ``h_j(u0) > 0``.

Optionally the first ``psd_blocks * psd_dim**2`` entries of ``u`` are
real parameters of Hermitian blocks (see :func:`hermitian_basis`); those
blocks are kept positive definite by a log-det barrier instead of the
entrywise ``u > 0`` barrier.  Only this kernel supports blocks.

Status codes: 0 converged, 1 ``stop_tau`` exceeded, 2 certified that the
optimum is below ``infeasible_below``, 3 Newton budget exhausted,
4 numerical failure.
"""

from __future__ import annotations

import numpy as np

CONVERGED, STOPPED, CERTIFIED_BELOW, MAX_NEWTON, NUMERICAL = range(5)


def hermitian_basis(m: int) -> np.ndarray:
    """Real basis of m x m Hermitian matrices, shape ``(m*m, m, m)``.

    Order: the m diagonal entries, then for each ``a < b`` the real and the
    imaginary part of entry ``(a, b)``.
    """
    out = np.zeros((m * m, m, m), dtype=complex)
    e = 0
    for a in range(m):
        out[e, a, a] = 1.0
        e += 1
    for a in range(m):
        for b in range(a + 1, m):
            out[e, a, b] = out[e, b, a] = 1.0
            out[e + 1, a, b], out[e + 1, b, a] = 1j, -1j
            e += 2
    return out


def hermitian_params(v: np.ndarray) -> np.ndarray:
    """Inverse of the basis expansion: parameters of Hermitian ``v``."""
    m = v.shape[0]
    x = [np.real(v[a, a]) for a in range(m)]
    for a in range(m):
        for b in range(a + 1, m):
            x += [np.real(v[a, b]), np.imag(v[a, b])]
    return np.array(x)


class _Problem:
    def __init__(self, term_row, term_coef, term_a, row_lin, row_w, row_mask, lin_a, lin_b,
                 psd_dim=0, psd_blocks=0):
        keep = np.asarray(row_mask, dtype=bool)
        rows = np.flatnonzero(keep)
        remap = -np.ones(len(keep), dtype=int)
        remap[rows] = np.arange(len(rows))
        tsel = keep[term_row]
        self.term_row = remap[term_row[tsel]]
        self.c = term_coef[tsel]
        self.a = term_a[tsel]
        self.l = row_lin[rows]
        self.w = row_w[rows]
        self.m = len(rows)
        self.lin_a = lin_a
        self.lin_b = lin_b
        self.n = term_a.shape[1] - 1
        self.md, self.nb = psd_dim, psd_blocks
        self.npsd = psd_dim * psd_dim * psd_blocks
        self.basis = hermitian_basis(psd_dim) if psd_blocks else None
        self.nbar = self.m + len(lin_b) + self.n - self.npsd + psd_dim * psd_blocks

    def blocks(self, u):
        """Cholesky factors of every block, or None if one is not positive definite."""
        out = []
        k2 = self.md * self.md
        for b in range(self.nb):
            v = np.tensordot(u[b * k2:(b + 1) * k2], self.basis, axes=1)
            try:
                out.append(np.linalg.cholesky(v))
            except np.linalg.LinAlgError:
                return None
        return out

    def values(self, u):
        uh = np.append(u, 1.0)
        d = self.a @ uh
        h = np.bincount(self.term_row, self.c * np.log(d), minlength=self.m) + self.l @ uh
        return d, h

    def slacks(self, z):
        u, tau = z[:-1], z[-1]
        if np.any(u[self.npsd:] <= 0):
            return None
        chol = self.blocks(u) if self.nb else []
        if chol is None:
            return None
        r = self.lin_b - self.lin_a @ u
        if np.any(r <= 0):
            return None
        d, h = self.values(u)
        if np.any(d <= 0):
            return None
        s = h - self.w * tau
        if np.any(s <= 0) or not np.all(np.isfinite(s)):
            return None
        return d, s, r, chol

    def barrier(self, z, tb, sl):
        d, s, r, chol = sl
        logdet = sum(2 * np.log(np.real(np.diag(c))).sum() for c in chol)
        return (-tb * z[-1] - np.log(s).sum() - np.log(r).sum()
                - np.log(z[self.npsd:-1]).sum() - logdet)

    def newton_system(self, z, tb, sl):
        n = self.n
        u = z[:-1]
        d, s, r, chol = sl
        ip = self.npsd
        # gradient of every row function in (u, tau)
        gt = (self.c / d)[:, None] * self.a[:, :n]
        gh = np.zeros((self.m, n + 1))
        np.add.at(gh[:, :n], self.term_row, gt)
        gh[:, :n] += self.l[:, :n]
        gh[:, n] = -self.w

        grad = -(gh / s[:, None]).sum(axis=0)
        grad[n] += -tb
        grad[:n] += (self.lin_a / r[:, None]).sum(axis=0)
        grad[ip:n] -= 1.0 / u[ip:]

        gs = gh / s[:, None]
        hess = gs.T @ gs
        wt = self.c / (d * d * s[self.term_row])
        at = self.a[:, :n]
        hess[:n, :n] += (at * wt[:, None]).T @ at
        ar = self.lin_a / r[:, None]
        hess[:n, :n] += ar.T @ ar
        idx = np.arange(ip, n)
        hess[idx, idx] += 1.0 / (u[ip:] * u[ip:])
        k2 = self.md * self.md
        for b, c in enumerate(chol):
            # -log det V: gradient -Tr(V^-1 E_e), Hessian Tr(V^-1 E_e V^-1 E_f)
            vinv = np.linalg.inv(c).conj().T @ np.linalg.inv(c)
            mats = np.einsum("ab,ebc->eac", vinv, self.basis)
            sl_ = slice(b * k2, (b + 1) * k2)
            grad[sl_] -= np.real(np.einsum("eaa->e", mats))
            hess[sl_, sl_] += np.real(np.einsum("eab,fba->ef", mats, mats))
        return grad, hess


def _solve_spd(hess, rhs):
    diag = np.sqrt(np.maximum(np.diag(hess), 1e-300))
    hs = hess / np.outer(diag, diag)
    bs = rhs / diag
    try:
        low = np.linalg.cholesky(hs)
    except np.linalg.LinAlgError:
        hs = hs + 1e-12 * np.eye(len(hs))
        try:
            low = np.linalg.cholesky(hs)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(hs, bs, rcond=None)[0] / diag
    y = np.linalg.solve(low, bs)
    return np.linalg.solve(low.T, y) / diag


def barrier_maximize(term_row, term_coef, term_a, row_lin, row_w, row_mask, lin_a, lin_b,
                     u0, tau0, tb0=1.0, mu=20.0, gap_tol=1e-10, stop_tau=np.inf,
                     infeasible_below=-np.inf, max_newton=500, psd_dim=0, psd_blocks=0):
    """Run the path-following method; returns ``(u, tau, status, newton_steps)``."""
    prob = _Problem(np.asarray(term_row, dtype=np.int64), np.asarray(term_coef, float),
                    np.asarray(term_a, float), np.asarray(row_lin, float),
                    np.asarray(row_w, float), np.asarray(row_mask),
                    np.asarray(lin_a, float).reshape(-1, len(u0)), np.asarray(lin_b, float),
                    psd_dim, psd_blocks)
    z = np.append(np.asarray(u0, dtype=float), tau0)
    sl = prob.slacks(z)
    if sl is None:
        return z[:-1], z[-1], NUMERICAL, 0
    tb = tb0
    steps = 0
    while True:
        # centering
        centered = False
        while True:
            if steps >= max_newton:
                return z[:-1], z[-1], MAX_NEWTON, steps
            grad, hess = prob.newton_system(z, tb, sl)
            dz = _solve_spd(hess, -grad)
            dec = -grad @ dz
            if not np.isfinite(dec):
                return z[:-1], z[-1], NUMERICAL, steps
            if dec <= 2e-10:
                centered = True
                break
            f0 = prob.barrier(z, tb, sl)
            step = 1.0
            while True:
                cand = z + step * dz
                csl = prob.slacks(cand)
                if csl is not None:
                    fc = prob.barrier(cand, tb, csl)
                    if fc <= f0 - 0.01 * step * dec and fc < f0:
                        break
                step *= 0.5
                if step < 1e-14:
                    csl = None
                    break
            steps += 1
            if csl is None:
                break  # no progress possible at this barrier weight
            z, sl = cand, csl
            if z[-1] > stop_tau:
                return z[:-1], z[-1], STOPPED, steps
            if step < 1e-6:
                break  # stalled: move on to the next barrier weight
        gap = prob.nbar / tb
        # the gap bound only holds on the central path
        if centered and z[-1] + gap < infeasible_below:
            return z[:-1], z[-1], CERTIFIED_BELOW, steps
        if gap < gap_tol:
            return z[:-1], z[-1], CONVERGED, steps
        tb *= mu
