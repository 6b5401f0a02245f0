"""Half-duplex two-phase baseline and the brute-force grid oracle.

In half duplex the WAP first pushes the non-cached parts to the ENs and the
ENs then serve their users, so the two delivery times add.  Each phase is a
max-min rate problem solved by bisection on the common rate; feasibility of
a target is decided by the minimum-power solution of the corresponding
linear SINR system.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .model import ChannelRealization, RequestOutcome, ScenarioConfig
from .precoding import CoefficientBundle, bundle_for
from .rates import LOG2, check_buffer_constraint, delivery_time, access_rates, power_feasible

__all__ = [
    "HdResult",
    "GridInfeasible",
    "GridResult",
    "solve_hd",
    "grid_oracle",
    "max_min_rate",
    "min_power_for_sinr",
]


class GridInfeasible(RuntimeError):
    """No point of the power grid satisfies every constraint."""


@dataclass(frozen=True)
class HdResult:
    t_backhaul: float
    t_access: float
    t_total: float


@dataclass
class GridResult:
    t_best: float
    p: np.ndarray
    q: np.ndarray
    n_evaluated: int
    n_feasible: int


def min_power_for_sinr(gain, cross, noise, gamma):
    """Smallest powers meeting ``gain_k x_k / (cross_k . x + noise_k) >= gamma_k``.

    ``cross`` has a zero diagonal.  Returns None when the targets are not
    jointly achievable (spectral radius of the normalized cross-gain
    matrix at least one).
    """
    gain = np.asarray(gain, float)
    gamma = np.asarray(gamma, float)
    m = np.diag(gain / gamma) - cross
    try:
        x = np.linalg.solve(m, np.asarray(noise, float))
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(x)) or np.any(x <= 0):
        return None
    # the positive solution is the minimum one only below the Perron threshold
    norm = cross / (gain / gamma)[:, None]
    if norm.size and np.max(np.abs(np.linalg.eigvals(norm))) >= 1.0:
        return None
    return x


def max_min_rate(feasible, hi: float, rel_tol: float = 1e-9, max_iter: int = 200):
    """Bisection for the largest common rate ``r`` with ``feasible(r)`` not None.

    ``feasible`` returns a power vector or None; ``hi`` must be infeasible or
    an upper bound.  Returns ``(r, powers)``.
    """
    lo, best = 0.0, None
    while feasible(hi) is not None:
        hi *= 2.0
    for _ in range(max_iter):
        if hi - lo <= rel_tol * max(hi, 1e-300):
            break
        mid = 0.5 * (lo + hi)
        x = feasible(mid)
        if x is None:
            hi = mid
        else:
            lo, best = mid, x
    return lo, best


def _gamma(rate, bandwidth, weights):
    # SINR needed for rate ``weights * rate`` in bits/s
    return np.expm1(np.asarray(weights, float) * rate * LOG2 / bandwidth)


def _split(total, interf):
    # own-link gains and cross gains (zero diagonal) from total/interference rows
    gain = np.diag(total[:, :-1] - interf[:, :-1]).copy()
    cross = interf[:, :-1].copy()
    np.fill_diagonal(cross, 0.0)
    return gain, cross


def _backhaul_phase(bundle: CoefficientBundle, cfg: ScenarioConfig) -> float:
    kc = bundle.num_partial
    if kc == 0:
        return 0.0
    gain, cross = _split(bundle.a1, bundle.a2)
    noise = np.full(kc, bundle.sigma2)
    lam = bundle.lam[:-1]
    mu = bundle.mu_bar

    def feasible(r):
        # max-min of C_k / mu_k: every C_k >= mu_k r
        q = min_power_for_sinr(gain, cross, noise, _gamma(r, cfg.bandwidth, mu))
        if q is None or lam @ q > cfg.p_bs_max:
            return None
        return q

    hi = cfg.bandwidth * math.log2(1 + gain.max() * cfg.p_bs_max / lam.min() / bundle.sigma2)
    r, _ = max_min_rate(feasible, hi / mu.min() + 1.0)
    return math.inf if r <= 0 else cfg.file_size / r


def access_max_min_powers(bundle: CoefficientBundle, cfg: ScenarioConfig):
    """Max-min common access rate of a linear design, ignoring the backhaul.

    Returns ``(rate, p)``: the largest common rate (bit/s) and the
    minimum powers achieving it under the design's caps (``p`` is None when
    no positive rate is achievable).
    """
    k = bundle.num_ens
    if bundle.design_tag == "DCST":
        gain, cross = _split(bundle.b1, bundle.b2)
        caps = lambda p: np.all(p <= cfg.p_en_max)  # noqa: E731
    elif bundle.design_tag == "CCJT_ZF":
        gain, cross = np.ones(k), np.zeros((k, k))
        caps = lambda p: bundle.alpha @ p <= k * cfg.p_en_max  # noqa: E731
    else:
        gain, cross = _split(bundle.e1, bundle.e2)
        caps = lambda p: bundle.alpha @ p <= k * cfg.p_en_max  # noqa: E731
    noise = np.full(k, bundle.sigma2)

    def feasible(r):
        p = min_power_for_sinr(gain, cross, noise, _gamma(r, cfg.bandwidth, np.ones(k)))
        return p if p is not None and caps(p) else None

    top = gain.max() * k * cfg.p_en_max / bundle.sigma2
    return max_min_rate(feasible, cfg.bandwidth * math.log2(1 + top) + 1.0)


def _linear_access(bundle: CoefficientBundle, cfg: ScenarioConfig) -> float:
    r, _ = access_max_min_powers(bundle, cfg)
    return math.inf if r <= 0 else cfg.file_size / r


def _opt_min_power(h, sigma2, gamma, iters=500, tol=1e-12):
    """Minimum total power beamformers for SINR targets ``gamma`` (uplink-downlink duality).

    Returns ``(beams, total_power)`` or None when the targets are infeasible.
    """
    k, n = h.shape
    lam = np.ones(k)
    for _ in range(iters):
        cov = np.eye(n) + np.einsum("k,ka,kb->ab", lam, h.conj(), h) / sigma2
        inv = np.linalg.inv(cov)
        quad = np.real(np.einsum("ka,ab,kb->k", h, inv, h.conj())) / sigma2
        new = gamma / ((1 + gamma) * quad)
        if not np.all(np.isfinite(new)) or np.any(new > 1e30):
            return None
        if np.max(np.abs(new - lam) / np.maximum(lam, 1e-300)) < tol:
            lam = new
            break
        lam = new
    cov = np.eye(n) + np.einsum("k,ka,kb->ab", lam, h.conj(), h) / sigma2
    dirs = np.linalg.solve(cov, h.conj().T)
    dirs /= np.linalg.norm(dirs, axis=0)
    full = np.abs(h @ dirs) ** 2
    gain = np.diag(full).copy()
    p = min_power_for_sinr(gain, full - np.diag(gain), np.full(k, sigma2), gamma)
    if p is None:
        return None
    return dirs * np.sqrt(p), float(p.sum())


def _opt_access(bundle: CoefficientBundle, cfg: ScenarioConfig) -> float:
    h = bundle.access
    k = bundle.num_ens
    cap = k * cfg.p_en_max

    def feasible(r):
        out = _opt_min_power(h, bundle.sigma2, _gamma(r, cfg.bandwidth, np.ones(k)))
        if out is None or out[1] > cap:
            return None
        return out[0]

    top = np.max(np.sum(np.abs(h) ** 2, axis=1)) * cap / bundle.sigma2
    r, _ = max_min_rate(feasible, cfg.bandwidth * math.log2(1 + top) + 1.0, rel_tol=1e-7)
    return math.inf if r <= 0 else cfg.file_size / r


def solve_hd(ch: ChannelRealization, req: RequestOutcome, cfg: ScenarioConfig,
             design_tag: str) -> HdResult:
    """Half-duplex delivery time: backhaul phase then access phase.

    The backhaul phase maximizes ``min_k C_k / mu_bar_k`` (interference
    between backhaul streams only, no self-interference); the access phase
    is the max-min rate design of ``design_tag`` under the same power caps
    as its full-duplex counterpart.
    """
    bundle = bundle_for(ch, req, design_tag, cfg.noise_power)
    t_b = _backhaul_phase(bundle, cfg)
    if design_tag == "CCJT_OPT":
        t_a = _opt_access(bundle, cfg)
    else:
        t_a = _linear_access(bundle, cfg)
    return HdResult(t_b, t_a, t_b + t_a)


# grid oracle -----------------------------------------------------------------

def _axis_caps(bundle: CoefficientBundle, cfg: ScenarioConfig):
    k = bundle.num_ens
    if bundle.design_tag == "DCST":
        p_max = np.full(k, cfg.p_en_max)
    else:
        p_max = k * cfg.p_en_max / bundle.alpha
    q_max = cfg.p_bs_max / bundle.lam[:-1]
    return p_max, q_max


def _batch_times(bundle: CoefficientBundle, cfg: ScenarioConfig, p: np.ndarray,
                 q: np.ndarray, tol: float = 1e-6):
    """Delivery times of many points (rows); +inf where a constraint fails."""
    n, k = p.shape
    ph = np.hstack([p, np.ones((n, 1))])
    tag = bundle.design_tag
    if tag == "DCST":
        sig, tot = ph @ (bundle.b1 - bundle.b2).T, ph @ bundle.b2.T
        sinr = sig / tot
        pool_ok = np.all(p <= cfg.p_en_max * (1 + tol), axis=1)
    elif tag == "CCJT_ZF":
        sinr = p / bundle.sigma2
        pool_ok = p @ bundle.alpha <= k * cfg.p_en_max * (1 + tol)
    else:
        sinr = (ph @ (bundle.e1 - bundle.e2).T) / (ph @ bundle.e2.T)
        pool_ok = p @ bundle.alpha <= k * cfg.p_en_max * (1 + tol)
    rate = cfg.bandwidth * np.log1p(sinr) / LOG2
    with np.errstate(divide="ignore"):
        t = np.where(np.all(rate > 0, axis=1), np.max(cfg.file_size / rate, axis=1), np.inf)
    ok = pool_ok
    if bundle.num_partial:
        qh = np.hstack([q, np.ones((n, 1))])
        ok = ok & (q @ bundle.lam[:-1] <= cfg.p_bs_max * (1 + tol))
        if tag == "DCST":
            fd = ph @ bundle.d.T
        else:
            fd = bundle.eta * (p @ bundle.alpha)[:, None]
        bsinr = (qh @ (bundle.a1 - bundle.a2).T) / (qh @ bundle.a2.T + fd)
        c = cfg.bandwidth * np.log1p(bsinr) / LOG2
        need = bundle.mu_bar * rate[:, list(bundle.uc)]
        ok = ok & np.all(c >= need - tol * need, axis=1)
    return np.where(ok, t, np.inf)


def grid_oracle(ch: ChannelRealization, req: RequestOutcome, cfg: ScenarioConfig,
                mode: str, grid_n: int = 50, chunk: int = 200_000) -> GridResult:
    """Exhaustive search of the original problem over a log-spaced power grid.

    Every power axis spans ``[1e-6 P, P]`` where ``P`` is the largest value
    the variable can take on its own (``P_EN`` per EN in DCST,
    ``K P_EN / alpha_k`` in CCJT, ``P_BS / lambda_k`` on the backhaul);
    points violating a pooled budget are discarded.  ``mode`` is one of
    ``DCST``, ``CCJT_ZF``, ``CCJT_MMSE``.

    Raises
    ------
    ValueError
        If the instance is larger than K = 3, K_C = 2.
    GridInfeasible
    """
    if ch.num_ens > 3 or len(req.partially_cached) > 2:
        raise ValueError("grid oracle is limited to K <= 3 and K_C <= 2")
    if mode not in ("DCST", "CCJT_ZF", "CCJT_MMSE"):
        raise ValueError(f"grid oracle does not support {mode!r}")
    bundle = bundle_for(ch, req, mode, cfg.noise_power)
    k, kc = bundle.num_ens, bundle.num_partial
    p_max, q_max = _axis_caps(bundle, cfg)
    levels = np.logspace(-6, 0, grid_n) if grid_n > 1 else np.ones(1)
    axes = [levels * m for m in p_max] + [levels * m for m in q_max]

    best_t, best_pt, n_feas, n_eval = math.inf, None, 0, 0
    points = itertools.product(*axes)
    while True:
        block = np.array(list(itertools.islice(points, chunk)))
        if block.size == 0:
            break
        block = block.reshape(-1, k + kc)
        t = _batch_times(bundle, cfg, block[:, :k], block[:, k:])
        n_eval += len(block)
        n_feas += int(np.isfinite(t).sum())
        i = int(np.argmin(t))
        if t[i] < best_t:
            best_t, best_pt = float(t[i]), block[i].copy()
    if best_pt is None:
        raise GridInfeasible(f"none of {n_eval} grid points is feasible")
    p, q = best_pt[:k], best_pt[k:]
    # confirm with the scalar rate functions
    assert np.all(check_buffer_constraint(bundle, p, q, cfg.bandwidth))
    assert power_feasible(bundle, p, q, cfg.p_en_max, cfg.p_bs_max)
    t = delivery_time(access_rates(bundle, p, cfg.bandwidth), cfg.file_size)
    return GridResult(t, p, q, n_eval, n_feas)
