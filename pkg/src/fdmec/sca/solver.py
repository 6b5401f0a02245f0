"""Solvers for :class:`SubproblemCanonical`.

Three interchangeable realizations share one contract (a point satisfying
every constraint and an objective within tolerance of the optimum):

``barrier``
    Path-following Newton method on the reduced problem in which the
    auxiliary variables are eliminated at their lower bounds and the
    objective ``min t`` is replaced by ``max c_time / t``.  Runs in the
    compiled kernel when available.
``bisection``
    Bisection on ``t``; each fixed-``t`` feasibility problem is a phase-I
    barrier solve.
``conic``
    The full problem (auxiliaries kept) handed to an exponential-cone
    solver through cvxpy.
"""

from __future__ import annotations

import functools
import os
from dataclasses import dataclass

import numpy as np

from . import _kernel_py
from .canonical import SubproblemCanonical

try:  # pragma: no cover - exercised when the extension is built
    if os.environ.get("FDMEC_PURE_PYTHON"):
        raise ImportError("pure-Python kernel requested")
    from . import _kernel as _native
except ImportError:  # pragma: no cover
    _native = None

__all__ = [
    "SubproblemInfeasible",
    "SubproblemNumericalFailure",
    "SubproblemSolution",
    "solve_convex_subproblem",
    "kernel_backend",
    "compile_subproblem",
    "SUBSOLVERS",
]

SUBSOLVERS = ("barrier", "bisection", "conic")


class SubproblemInfeasible(RuntimeError):
    pass


class SubproblemNumericalFailure(RuntimeError):
    pass


def kernel_backend() -> str:
    return "compiled" if _native is not None else "python"


def _kernel(backend: str | None, psd=None):
    if psd:
        # only the numpy kernel handles semidefinite blocks
        return functools.partial(_kernel_py.barrier_maximize, psd_dim=psd[0], psd_blocks=psd[1])
    if backend == "python" or (backend is None and _native is None):
        return _kernel_py.barrier_maximize
    if _native is None:
        raise ImportError("compiled kernel is not built")
    return _native.barrier_maximize


@dataclass
class SubproblemSolution:
    t: float
    p: np.ndarray
    q: np.ndarray
    aux: np.ndarray
    newton_steps: int = 0


@dataclass
class _Compiled:
    term_row: np.ndarray
    term_coef: np.ndarray
    term_a: np.ndarray
    row_lin: np.ndarray
    row_w: np.ndarray
    lin_a: np.ndarray
    lin_b: np.ndarray
    scale: np.ndarray
    c_time: float


def _elimination(sp: SubproblemCanonical):
    """Affine map from ``[pq; 1]`` to every auxiliary at its lower bound."""
    npow = sp.n_power
    m = np.zeros((sp.n_aux, npow + 1))
    for a in sp.aux:
        e = np.exp(-a.anchor)
        m[a.index - npow, :npow] = e * a.bound[:npow]
        m[a.index - npow, npow] = a.anchor - 1.0 + e * a.bound[-1]
    return m


def _reduce(vec: np.ndarray, sp: SubproblemCanonical, elim: np.ndarray) -> np.ndarray:
    """Rewrite an affine form over ``[v; 1]`` as one over ``[pq; 1]``."""
    npow = sp.n_power
    out = np.append(vec[:npow], vec[-1])
    if sp.n_aux:
        out = out + vec[npow:-1] @ elim
    return out


def compile_subproblem(sp: SubproblemCanonical) -> _Compiled:
    """Eliminate auxiliaries and rescale powers to ``u = pq / scale``."""
    npow = sp.n_power
    aux_rows = {id(r) for r in sp.lin_rows if r.label.startswith("lin-")}
    elim = _elimination(sp)
    scale = np.concatenate([sp.p_scale, sp.q_scale])
    sc_hat = np.append(scale, 1.0)

    term_row, term_coef, term_a = [], [], []
    row_lin = np.zeros((len(sp.log_rows), npow + 1))
    row_w = np.zeros(len(sp.log_rows))
    for j, row in enumerate(sp.log_rows):
        if sp.n_aux and np.any(row.rhs[npow:-1] < 0):
            raise ValueError(f"row {row.label}: auxiliaries must enter with nonnegative weight")
        lin = -_reduce(row.rhs, sp, elim) * sc_hat
        for coef, a in row.terms:
            if np.any(a[npow:-1] != 0):
                raise ValueError(f"row {row.label}: log argument depends on an auxiliary")
            ar = np.append(a[:npow], a[-1]) * sc_hat
            if not ar[-1] > 0:
                raise ValueError(f"row {row.label}: log argument needs a positive constant")
            lin[-1] += coef * np.log(ar[-1])
            term_row.append(j)
            term_coef.append(coef)
            term_a.append(ar / ar[-1])
        row_lin[j] = lin
        row_w[j] = 1.0 if row.timed else 0.0

    lin_a, lin_b = [], []
    for r in sp.lin_rows:
        if id(r) in aux_rows:
            continue
        if sp.n_aux and np.any(r.row[npow:-1] != 0):
            raise ValueError(f"linear row {r.label} involves auxiliaries")
        lin_a.append(r.row[:npow] * scale)
        lin_b.append(-r.row[-1])
    return _Compiled(
        np.asarray(term_row, dtype=np.int64), np.asarray(term_coef, float),
        np.asarray(term_a, float).reshape(-1, npow + 1), row_lin, row_w,
        np.asarray(lin_a, float).reshape(-1, npow), np.asarray(lin_b, float),
        scale, sp.c_time,
    )


def _row_values(cp: _Compiled, u: np.ndarray) -> np.ndarray:
    uh = np.append(u, 1.0)
    return (np.bincount(cp.term_row, cp.term_coef * np.log(cp.term_a @ uh),
                        minlength=len(cp.row_w)) + cp.row_lin @ uh)


def _interior_start(cp: _Compiled, start: np.ndarray | None, psd=None) -> np.ndarray:
    """A point strictly inside ``A u <= b, u > 0`` (blocks positive definite) close to ``start``.

    The centre is searched along the ray towards the origin, which is enough
    for budget-type constraints (``b > 0``).  Raises SubproblemInfeasible
    when no such point is found.
    """
    n = cp.term_a.shape[1] - 1
    # a strictly interior centre: equal split of every budget
    centre = np.full(n, 0.5)
    npsd = 0
    if psd:
        dim, blocks = psd
        npsd = dim * dim * blocks
        centre[:npsd] = np.tile(np.r_[np.full(dim, 0.5), np.zeros(dim * dim - dim)], blocks)
    for _ in range(60):
        if np.all(cp.lin_a @ centre < cp.lin_b):
            break
        centre *= 0.5
    else:
        raise SubproblemInfeasible("the linear constraints have no strictly interior point")
    if start is None:
        return centre
    start = np.asarray(start, float).copy()
    start[npsd:] = np.maximum(start[npsd:], 0.0)
    # semidefinite starts often sit on the boundary of the cone; nudge gently
    ladder = (1e-6, 1e-4, 1e-2, 0.1, 0.5, 1.0)
    if npsd:
        ladder = (1e-12, 1e-10, 1e-8) + ladder
    for theta in ladder:
        u = (1 - theta) * start + theta * centre
        if (np.all(u[npsd:] > 0) and np.all(cp.lin_a @ u < cp.lin_b)
                and _blocks_definite(u, psd)):
            return u
    return centre


def _blocks_definite(u, psd) -> bool:
    if not psd:
        return True
    dim, blocks = psd
    basis = _kernel_py.hermitian_basis(dim)
    k2 = dim * dim
    for b in range(blocks):
        try:
            np.linalg.cholesky(np.tensordot(u[b * k2:(b + 1) * k2], basis, axes=1))
        except np.linalg.LinAlgError:
            return False
    return True


def _phase_one(cp: _Compiled, u: np.ndarray, kernel, backend_opts, shift=None):
    """Find ``u`` with every untimed row (plus timed rows shifted by ``shift``) strictly positive."""
    row_lin = cp.row_lin.copy()
    if shift is None:
        mask = (cp.row_w == 0).astype(np.int64)
    else:
        mask = np.ones(len(cp.row_w), dtype=np.int64)
        row_lin[cp.row_w > 0, -1] -= shift
    h = np.bincount(cp.term_row, cp.term_coef * np.log(cp.term_a @ np.append(u, 1.0)),
                    minlength=len(cp.row_w)) + row_lin @ np.append(u, 1.0)
    if not mask.any():
        return u, True
    hm = h[mask > 0]
    margin = 1e-9
    if np.all(hm > margin):
        return u, True
    # rows of very different magnitude stall the Newton steps; scaling a
    # row by a positive factor leaves its sign, hence feasibility, unchanged
    f = 1.0 / np.maximum(1.0, np.abs(h))
    row_lin *= f[:, None]
    coef = cp.term_coef * f[cp.term_row]
    hm = (h * f)[mask > 0]
    w = np.ones(len(cp.row_w))
    u1, tau, status, _ = kernel(cp.term_row, coef, cp.term_a, row_lin, w, mask,
                                cp.lin_a, cp.lin_b, u, float(hm.min() - 1.0),
                                stop_tau=margin, infeasible_below=0.0, **backend_opts)
    return u1, (status == _kernel_py.STOPPED or tau > margin)


def _solve_barrier(sp, tol, start, backend):
    cp = compile_subproblem(sp)
    kernel = _kernel(backend, sp.psd)
    opts = {"gap_tol": tol, "max_newton": 800}
    u = _interior_start(cp, start, sp.psd)
    u, ok = _phase_one(cp, u, kernel, opts)
    if not ok:
        raise SubproblemInfeasible("no strictly feasible point")
    h = _row_values(cp, u)
    tau0 = float(h[cp.row_w > 0].min() - 1.0)
    mask = np.ones(len(cp.row_w), dtype=np.int64)
    u, tau, status, steps = kernel(cp.term_row, cp.term_coef, cp.term_a, cp.row_lin, cp.row_w,
                                   mask, cp.lin_a, cp.lin_b, u, tau0, **opts)
    if status not in (_kernel_py.CONVERGED,) and not np.isfinite(tau):
        raise SubproblemNumericalFailure(f"kernel status {status}")
    if status == _kernel_py.NUMERICAL and steps == 0:
        raise SubproblemNumericalFailure("kernel rejected the starting point")
    # exact objective at the returned point
    h = _row_values(cp, u)
    tau = float(h[cp.row_w > 0].min())
    if not tau > 0:
        raise SubproblemInfeasible("no positive rate is achievable")
    return _finish(sp, cp, u, tau, steps)


def _finish(sp, cp, u, tau, steps):
    pq = u * cp.scale
    aux = sp.aux_lower_bounds(pq)
    return SubproblemSolution(cp.c_time / tau, pq[: sp.n_p], pq[sp.n_p:], aux, int(steps))


def _solve_bisection(sp, tol, start, backend):
    cp = compile_subproblem(sp)
    kernel = _kernel(backend, sp.psd)
    opts = {"gap_tol": 1e-12, "max_newton": 800}
    u = _interior_start(cp, start, sp.psd)
    u, ok = _phase_one(cp, u, kernel, opts)
    if not ok:
        raise SubproblemInfeasible("no strictly feasible point")
    # bracket on s = c_time / t: lo is attained, hi is not
    lo = float(_row_values(cp, u)[cp.row_w > 0].min())
    if not lo > 0:
        lo = 0.0
    hi = max(2 * lo, 1.0)
    best = u
    while True:
        cand, feas = _phase_one(cp, best, kernel, opts, shift=hi)
        if not feas:
            break
        lo, best = hi, cand
        hi *= 2
    steps = 0
    while hi - lo > tol * max(1.0, lo):
        mid = 0.5 * (lo + hi)
        cand, feas = _phase_one(cp, best, kernel, opts, shift=mid)
        steps += 1
        if feas:
            lo, best = mid, cand
        else:
            hi = mid
    if not lo > 0:
        raise SubproblemInfeasible("no positive rate is achievable")
    tau = float(_row_values(cp, best)[cp.row_w > 0].min())
    return _finish(sp, cp, best, max(tau, lo), steps)


def _solve_conic(sp, tol, start, backend):
    import cvxpy as cvx

    if sp.psd:
        raise ValueError("the conic realization does not take semidefinite blocks")
    cp = compile_subproblem(sp)
    n = len(cp.scale)
    u = cvx.Variable(n)
    s = cvx.Variable()
    cons = [u >= 0]
    for j in range(len(cp.row_w)):
        sel = cp.term_row == j
        # any positive row factor keeps the constraint; unit size helps the solver
        f = 1.0 / max(1.0, np.abs(cp.term_coef[sel]).max(initial=0.0), np.abs(cp.row_lin[j]).max())
        lhs = cp.row_lin[j, :-1] * f @ u + cp.row_lin[j, -1] * f
        for c, a in zip(cp.term_coef[sel], cp.term_a[sel]):
            g = np.abs(a).max()
            lhs = lhs + c * f * (cvx.log((a[:-1] / g) @ u + a[-1] / g) + np.log(g))
        cons.append(lhs >= cp.row_w[j] * f * s)
    for a, b in zip(cp.lin_a, cp.lin_b):
        g = max(np.abs(a).max(), abs(b), 1e-300)
        cons.append((a / g) @ u <= b / g)
    prob = cvx.Problem(cvx.Maximize(s), cons)
    try:
        prob.solve(solver="CLARABEL", tol_gap_abs=tol, tol_gap_rel=tol, tol_feas=tol)
    except cvx.SolverError as exc:
        raise SubproblemNumericalFailure(str(exc)) from exc
    if prob.status in ("infeasible", "infeasible_inaccurate"):
        raise SubproblemInfeasible(prob.status)
    if prob.status not in ("optimal", "optimal_inaccurate") or u.value is None:
        raise SubproblemNumericalFailure(prob.status)
    uv = np.maximum(np.asarray(u.value), 0.0)
    tau = float(s.value)
    if not tau > 0:
        raise SubproblemInfeasible("no positive rate is achievable")
    return _finish(sp, cp, uv, tau, 0)


_REALIZATIONS = {
    "barrier": _solve_barrier,
    "bisection": _solve_bisection,
    "conic": _solve_conic,
}


def solve_convex_subproblem(sp: SubproblemCanonical, tol: float = 1e-8,
                            method: str = "barrier", start=None,
                            backend: str | None = None) -> SubproblemSolution:
    """Solve one inner-approximation subproblem.

    Parameters
    ----------
    sp : SubproblemCanonical
    tol : float
        Objective tolerance (absolute, on ``c_time / t``) of the realization.
    method : {"barrier", "bisection", "conic"}
    start : array, optional
        Warm start in scaled units (``pq / scale``), e.g. the previous
        iterate's powers.
    backend : {"compiled", "python"}, optional
        Kernel for the barrier-based realizations; defaults to the compiled
        kernel when it is importable.

    Raises
    ------
    SubproblemInfeasible, SubproblemNumericalFailure
    """
    try:
        solve = _REALIZATIONS[method]
    except KeyError:
        raise ValueError(f"unknown subsolver {method!r}; expected one of {SUBSOLVERS}") from None
    return solve(sp, tol, start, backend)
