"""The iterative inner-approximation loop and its initialization."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..model import ScenarioConfig
from ..precoding import CoefficientBundle
from ..rates import buffer_margin, delivery_time, access_rates, check_buffer_constraint, power_feasible
from .canonical import BUILDERS, anchors_at
from .solver import (SubproblemInfeasible, SubproblemNumericalFailure,
                     solve_convex_subproblem)

__all__ = [
    "ScaOptions",
    "SolveResult",
    "ScaInfeasible",
    "run_sca",
    "initial_powers",
    "restore_feasibility",
    "CONVERGED",
    "MAX_ITERS",
    "INFEASIBLE",
    "NUMERICAL_FAILURE",
]

CONVERGED = "Converged"
MAX_ITERS = "MaxIters"
INFEASIBLE = "Infeasible"
NUMERICAL_FAILURE = "NumericalFailure"


class ScaInfeasible(RuntimeError):
    """Every start failed to produce a feasible first subproblem."""


@dataclass(frozen=True)
class ScaOptions:
    eps: float = 1e-3
    max_iters: int = 50
    n_starts: int = 10
    subsolver: str = "barrier"
    tol: float = 1e-8
    seed: int = 0
    backend: str | None = None
    perturbation: float = 1.0
    balanced_start: bool = True


@dataclass
class SolveResult:
    t_star: float
    p_star: np.ndarray
    q_star: np.ndarray
    iterations: int
    trace: list
    status: str
    original_feasible: bool
    start_traces: list = field(default_factory=list)
    n_failed_starts: int = 0
    design: str = ""


def initial_powers(bundle: CoefficientBundle, cfg: ScenarioConfig):
    """Equal-power starting point at full budgets.

    Every EN gets ``P_EN`` (or an equal share of the pooled budget for the
    cooperative designs) and the WAP splits ``P_BS`` equally over the
    partially cached ENs.
    """
    k, kc = bundle.num_ens, bundle.num_partial
    if bundle.design_tag == "DCST":
        p = np.full(k, cfg.p_en_max)
    else:
        p = np.full(k, k * cfg.p_en_max / bundle.alpha.sum())
    q = cfg.p_bs_max / (kc * bundle.lam[:-1]) if kc else np.zeros(0)
    return p, q


def restore_feasibility(bundle: CoefficientBundle, cfg: ScenarioConfig, p, q,
                        margin: float = 1e-6, rounds: int = 200) -> np.ndarray:
    """Lower access powers until every buffer constraint holds.

    Each violated EN's own access power is reduced (bisection on a scale
    factor) until ``C_k >= (1 + margin) mu_bar_k R_k``.  Reducing one
    power only lowers interference elsewhere, so the sweep terminates.
    """
    p = np.array(p, dtype=float)
    if bundle.num_partial == 0:
        return p
    w = cfg.bandwidth

    def slack(pp):
        return buffer_margin(bundle, pp, q, w) - margin * _needed(bundle, pp, w)

    for _ in range(rounds):
        s = slack(p)
        bad = np.flatnonzero(s < 0)
        if bad.size == 0:
            return p
        i = int(bad[np.argmin(s[bad])])
        en = bundle.uc[i]
        lo, hi = 0.0, 1.0  # log-scale bisection on the factor applied to p[en]
        lo_exp, hi_exp = -60.0, 0.0
        for _ in range(60):
            mid = 0.5 * (lo_exp + hi_exp)
            trial = p.copy()
            trial[en] *= math.exp(mid)
            if slack(trial)[i] >= 0:
                lo_exp = mid
            else:
                hi_exp = mid
        p[en] *= math.exp(lo_exp)
    return p


def _needed(bundle, p, w):
    return bundle.mu_bar * access_rates(bundle, p, w)[list(bundle.uc)]


def _perturb(anchors: dict, rng: np.random.Generator, width: float) -> dict:
    return {k: v + rng.uniform(-width, width, size=v.shape) for k, v in anchors.items()}


def _evaluate(bundle, cfg, p, q):
    t = delivery_time(access_rates(bundle, p, cfg.bandwidth), cfg.file_size)
    ok = bool(np.all(check_buffer_constraint(bundle, p, q, cfg.bandwidth, tol=1e-6))
              and power_feasible(bundle, p, q, cfg.p_en_max, cfg.p_bs_max))
    return t, ok


def _run_start(builder, bundle, cfg, opts, anchors, start_pq):
    trace = []
    t_old = math.inf
    scale = None
    warm = None
    sol = None
    status = MAX_ITERS
    it = 0
    for it in range(1, opts.max_iters + 1):
        sp = builder(bundle, cfg, anchors)
        if scale is None:
            scale = np.concatenate([sp.p_scale, sp.q_scale])
            warm = start_pq / scale
        sol = solve_convex_subproblem(sp, tol=opts.tol, method=opts.subsolver, start=warm,
                                      backend=opts.backend)
        trace.append(sol.t)
        err = abs(sol.t - t_old)
        anchors = sp.anchors_of(sol.aux)
        t_old = sol.t
        warm = np.concatenate([sol.p, sol.q]) / scale
        if err <= opts.eps:
            status = CONVERGED
            break
    return sol, trace, status, it


def run_sca(builder: Callable | str, bundle: CoefficientBundle, cfg: ScenarioConfig,
            opts: ScaOptions = ScaOptions(), start_powers=None) -> SolveResult:
    """Iterate convex inner approximations until the objective settles.

    Start 0 anchors every bound at the exact log values of the (feasibility
    restored) equal-power point.  With ``opts.balanced_start`` start 1
    anchors at the max-min access powers of the design (backhaul ignored,
    then feasibility restored), which is often close to interference-limited
    optima that the equal-power point reaches only slowly.  Remaining
    starts perturb the start-0 anchors by uniform noise of
    ``opts.perturbation`` nats.  The best start wins (smallest delivery
    time, then fewest iterations).

    Raises
    ------
    ScaInfeasible
        If no start yields a feasible subproblem.
    """
    if isinstance(builder, str):
        builder = BUILDERS[builder]
    if start_powers is None:
        p0, q0 = initial_powers(bundle, cfg)
    else:
        p0, q0 = (np.asarray(x, dtype=float) for x in start_powers)
    p0 = restore_feasibility(bundle, cfg, p0, q0)
    base = anchors_at(builder, bundle, cfg, p0, q0)
    rng = np.random.default_rng(opts.seed)
    start_pq = np.concatenate([p0, q0])
    balanced = _balanced_start(builder, bundle, cfg, q0) if opts.balanced_start else None

    best = None
    traces, failures = [], 0
    for s in range(max(1, opts.n_starts)):
        if s == 0:
            anchors, pq = base, start_pq
        elif s == 1 and balanced is not None:
            anchors, pq = balanced
        else:
            anchors, pq = _perturb(base, rng, opts.perturbation), start_pq
        try:
            sol, trace, status, iters = _run_start(builder, bundle, cfg, opts, anchors, pq)
        except (SubproblemInfeasible, SubproblemNumericalFailure):
            failures += 1
            continue
        traces.append(trace)
        t_true, feasible = _evaluate(bundle, cfg, sol.p, sol.q)
        if status == CONVERGED and not feasible:
            status = NUMERICAL_FAILURE
        cand = SolveResult(t_true, sol.p, sol.q, iters, trace, status, feasible,
                           design=bundle.design_tag)
        if best is None or _better(cand, best):
            best = cand
    if best is None:
        raise ScaInfeasible(f"all {opts.n_starts} starts failed")
    best.start_traces = traces
    best.n_failed_starts = failures
    return best


def _balanced_start(builder, bundle, cfg, q0):
    """Anchors at the SINR-balanced max-min access powers, or None."""
    if bundle.design_tag not in ("DCST", "CCJT_ZF", "CCJT_MMSE"):
        return None
    from ..baseline import access_max_min_powers

    _, p = access_max_min_powers(bundle, cfg)
    if p is None:
        return None
    p = restore_feasibility(bundle, cfg, p, q0)
    return anchors_at(builder, bundle, cfg, p, q0), np.concatenate([p, q0])


def _better(a: SolveResult, b: SolveResult) -> bool:
    if a.original_feasible != b.original_feasible:
        return a.original_feasible
    if a.t_star != b.t_star:
        return a.t_star < b.t_star
    return a.iterations < b.iterations
