"""Cooperative transmission with general (optimal) access precoding.

The access beamformers ``v_k`` are replaced by covariance blocks
``V_k = v_k v_k^H``; every rate then depends on the blocks through the
linear forms ``h_k V_i h_k^H`` and ``Tr(V_i)``.  Dropping the rank
constraint leaves a problem with the same log-ratio structure as the
cooperative MMSE one, so the same inner-approximation loop applies, now
with positive-semidefinite variables (real parameters of Hermitian blocks,
kept definite by a log-det barrier).  Rank-one beamformers are recovered
afterwards from the principal eigenvectors and Gaussian randomization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import ChannelRealization, RequestOutcome, ScenarioConfig
from .precoding import CoefficientBundle, bundle_for, bundle_with_directions
from .rates import access_rates, check_buffer_constraint, delivery_time, power_feasible
from .sca import ScaOptions, SolveResult, run_sca, restore_feasibility
from .sca._kernel_py import hermitian_basis, hermitian_params
from .sca.canonical import SubproblemCanonical, _q_scale, _ratio_form, anchors_at
from .sca.loop import CONVERGED, NUMERICAL_FAILURE, ScaInfeasible, _run_start
from .sca.solver import SubproblemInfeasible, SubproblemNumericalFailure

__all__ = [
    "SdrSolution",
    "RankExtractionFailed",
    "SdrOptions",
    "solve_ccjt_opt",
    "extract_rank1",
    "covariance_from_beams",
    "build_ccjt_opt_subproblem",
]


class RankExtractionFailed(RuntimeError):
    """No rank-one candidate satisfied the original constraints."""


@dataclass(frozen=True)
class SdrOptions:
    sca: ScaOptions = ScaOptions()
    n_rand: int = 100
    seed: int = 0


@dataclass
class SdrSolution:
    V: list
    t_relaxed: float
    extracted_v: list
    t_extracted: float
    rank1_gap: float
    q: np.ndarray = None
    trace: list = field(default_factory=list)


def covariance_from_beams(beams) -> np.ndarray:
    """Stack ``v_k v_k^H`` for beams given as the columns of ``beams``."""
    b = np.asarray(beams, dtype=complex)
    return np.einsum("ak,bk->kab", b, b.conj())


def _rank1_gap(vs) -> float:
    gaps = []
    for v in vs:
        tr = float(np.real(np.trace(v)))
        if tr <= 0:
            gaps.append(0.0)
            continue
        gaps.append(1.0 - float(np.linalg.eigvalsh(v)[-1]) / tr)
    return max(gaps) if gaps else 0.0


def _block_coefficients(h: np.ndarray, frame: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gain and trace coefficients in the frame ``V = T W T^H``.

    ``gain[j, e] = (h_j T) E_e (h_j T)^H`` and ``trace[e] = Tr(T E_e T^H)``
    for every basis matrix ``E_e``.
    """
    basis = hermitian_basis(h.shape[1])
    ht = h @ frame
    gain = np.real(np.einsum("ja,eab,jb->je", ht, basis, ht.conj()))
    trace = np.real(np.einsum("ba,eab->e", frame.conj().T @ frame, basis))
    return gain, trace


def build_ccjt_opt_subproblem(bundle: CoefficientBundle, cfg: ScenarioConfig, anchors: dict,
                              p_scale: float | None = None,
                              frame: np.ndarray | None = None) -> SubproblemCanonical:
    """Relaxed optimal-precoding problem in canonical form.

    The access variables are the real parameters of K Hermitian blocks
    ``W_i`` (block ``i`` occupies entries ``i*K*K .. (i+1)*K*K``) with
    covariance ``V_i = T W_i T^H`` for an invertible ``frame`` T (identity
    by default).  Every gain, trace and cap is linear in them.  Anchors as
    for the MMSE problem.
    """
    k = bundle.num_ens
    k2 = k * k
    n_p = k * k2
    frame = np.eye(k) if frame is None else frame
    coef, tr_block = _block_coefficients(bundle.access, frame)
    trace = np.tile(tr_block, k)
    num = np.zeros((k, n_p + 1))
    for j in range(k):
        num[j, :n_p] = np.tile(coef[j], k)
        num[j, -1] = bundle.sigma2
    den = num.copy()
    for j in range(k):
        den[j, j * k2:(j + 1) * k2] = 0.0
    fd = np.tile(np.append(bundle.eta * trace, 0.0), (bundle.num_partial, 1))
    sp = _ratio_form(bundle, cfg, anchors, num, den, fd, trace, n_p=n_p)
    sp.psd = (k, k)
    sp.p_scale = np.full(n_p, cfg.p_en_max if p_scale is None else p_scale)
    sp.q_scale = _q_scale(bundle, cfg)
    return sp


def blocks_to_params(vs, frame: np.ndarray | None = None) -> np.ndarray:
    """Parameters of ``W_i = T^-1 V_i T^-H`` for covariances ``vs``."""
    if frame is not None:
        inv = np.linalg.inv(frame)
        vs = [inv @ v @ inv.conj().T for v in vs]
    return np.concatenate([hermitian_params(v) for v in vs])


def params_to_blocks(x: np.ndarray, k: int, frame: np.ndarray | None = None) -> np.ndarray:
    """Covariances ``V_i = T W_i T^H`` from block parameters."""
    basis = hermitian_basis(k)
    ws = [np.tensordot(x[i * k * k:(i + 1) * k * k], basis, axes=1) for i in range(k)]
    if frame is not None:
        ws = [frame @ w @ frame.conj().T for w in ws]
    return np.array(ws)


def _opt_bundle(ch, req, cfg) -> CoefficientBundle:
    return bundle_for(ch, req, "CCJT_OPT", cfg.noise_power)


def _original_time(bundle, cfg, vs) -> float:
    return delivery_time(access_rates(bundle, vs, cfg.bandwidth), cfg.file_size)


def _candidate(ch, req, cfg, beams, q):
    """Rescale beams to the pooled budget, repair buffer violations, evaluate."""
    beams = np.array(beams, dtype=complex)
    norms = np.sum(np.abs(beams) ** 2, axis=0)
    total = norms.sum()
    cap = ch.num_ens * cfg.p_en_max
    if total > cap:
        beams *= math.sqrt(cap / total)
        norms = norms * (cap / total)
    if np.any(norms <= 0):
        return None
    dirs = beams / np.sqrt(norms)
    lin = bundle_with_directions(ch, req, dirs, cfg.noise_power)
    p = norms
    if not np.all(check_buffer_constraint(lin, p, q, cfg.bandwidth)):
        p = restore_feasibility(lin, cfg, p, q)
    t = delivery_time(access_rates(lin, p, cfg.bandwidth), cfg.file_size)
    ok = (bool(np.all(check_buffer_constraint(lin, p, q, cfg.bandwidth)))
          and power_feasible(lin, p, q, cfg.p_en_max, cfg.p_bs_max))
    if not ok or not np.isfinite(t):
        return None
    return t, dirs * np.sqrt(p)


def extract_rank1(V, ch: ChannelRealization, req: RequestOutcome, cfg: ScenarioConfig,
                  n_rand: int = 100, q=None, rng=None, fallback=None):
    """Recover rank-one beamformers from relaxed covariance blocks.

    Candidates are the scaled principal eigenvectors plus ``n_rand``
    Gaussian draws ``v_k ~ CN(0, V_k)`` (each rescaled to ``Tr(V_k)``).
    Each candidate is scaled into the pooled power budget; if a buffer
    constraint is violated the offending EN's beam power is lowered until
    it holds.  ``fallback`` is an optional ``(beams, q)`` pair evaluated as
    one more candidate.

    Returns
    -------
    beams : ndarray, shape (K, K)
        Column ``k`` is ``v_k``.
    t : float
        Delivery time of the best feasible candidate.
    q : ndarray
        Backhaul powers used with the returned beams.

    Raises
    ------
    RankExtractionFailed
    """
    vs = np.asarray(V, dtype=complex)
    k = vs.shape[0]
    q = np.zeros(len(req.partially_cached)) if q is None else np.asarray(q, dtype=float)
    rng = np.random.default_rng(0) if rng is None else rng
    roots, traces, principal = [], [], np.zeros((k, k), dtype=complex)
    for i, v in enumerate(vs):
        w, u = np.linalg.eigh(0.5 * (v + v.conj().T))
        w = np.maximum(w, 0.0)
        principal[:, i] = u[:, -1] * math.sqrt(w[-1])
        roots.append(u * np.sqrt(w))
        traces.append(w.sum())

    best = None
    cands = [(principal, q)]
    for _ in range(n_rand):
        xi = (rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))) / math.sqrt(2)
        beams = np.empty((k, k), dtype=complex)
        for i in range(k):
            b = roots[i] @ xi[:, i]
            nb = np.linalg.norm(b)
            beams[:, i] = b * math.sqrt(traces[i]) / nb if nb > 0 else 0.0
        cands.append((beams, q))
    if fallback is not None:
        cands.append(fallback)
    for beams, qq in cands:
        res = _candidate(ch, req, cfg, beams, qq)
        if res is not None and (best is None or res[0] < best[0]):
            best = (res[0], res[1], qq)
    if best is None:
        raise RankExtractionFailed(f"none of {len(cands)} rank-one candidates is feasible")
    return best[1], best[0], best[2]


def solve_ccjt_opt(ch: ChannelRealization, req: RequestOutcome, cfg: ScenarioConfig,
                   opts: SdrOptions = SdrOptions(), mmse: SolveResult | None = None):
    """Relaxed optimal-precoding problem solved by inner approximation.

    The loop starts from the cooperative MMSE solution (computed here unless
    ``mmse`` is given), which is feasible for the relaxed problem; the
    anchors are the exact logs of the bounded terms at that point.

    Returns
    -------
    SdrSolution, SolveResult
        The relaxed covariances and extraction outcome, and the result
        record of the extracted (rank-one, achievable) solution.

    Raises
    ------
    ScaInfeasible
        If the first relaxed subproblem cannot be solved.
    RankExtractionFailed
    """
    if mmse is None:
        mb = bundle_for(ch, req, "CCJT_MMSE", cfg.noise_power)
        mmse = run_sca("CCJT_MMSE", mb, cfg, opts.sca)
    k = ch.num_ens
    beams0 = _mmse_dirs(ch, req, cfg) * np.sqrt(np.maximum(mmse.p_star, 0.0))
    q0 = np.asarray(mmse.q_star, float)
    bundle = _opt_bundle(ch, req, cfg)
    # Work in the frame of the unit-norm MMSE directions: there each user's
    # gain hinges on one diagonal entry, which keeps the Newton systems of
    # the high-SNR problem well conditioned.  Variables are scaled to the
    # per-EN power level of the start.
    frame = _unit_columns(_mmse_dirs(ch, req, cfg))
    level = max(float(np.sum(np.abs(beams0) ** 2)) / k, 1e-6 * cfg.p_en_max)

    def builder(b, c, anchors):
        return build_ccjt_opt_subproblem(b, c, anchors, p_scale=level, frame=frame)

    x0 = blocks_to_params(covariance_from_beams(beams0), frame)
    anchors = anchors_at(builder, bundle, cfg, x0, q0)
    try:
        sub, trace, status, iters = _run_start(builder, bundle, cfg, opts.sca, anchors,
                                               np.concatenate([x0, q0]))
    except (SubproblemInfeasible, SubproblemNumericalFailure) as exc:
        raise ScaInfeasible(f"relaxed problem: {exc}") from exc

    vs = np.array([_hermitian_psd_part(v) for v in params_to_blocks(sub.p, k, frame)])
    q = np.maximum(sub.q, 0.0)
    t_relaxed = _original_time(bundle, cfg, vs)
    rng = np.random.default_rng(opts.seed)
    beams, t_ext, q_ext = extract_rank1(vs, ch, req, cfg, opts.n_rand, q=q, rng=rng,
                                        fallback=(beams0, q0))
    v_ext = covariance_from_beams(beams)
    feasible = (bool(np.all(check_buffer_constraint(bundle, v_ext, q_ext, cfg.bandwidth)))
                and power_feasible(bundle, v_ext, q_ext, cfg.p_en_max, cfg.p_bs_max))
    sol = SdrSolution(V=list(vs), t_relaxed=t_relaxed, extracted_v=list(beams.T),
                      t_extracted=t_ext, rank1_gap=_rank1_gap(vs), q=q, trace=trace)
    if status == CONVERGED and not feasible:
        status = NUMERICAL_FAILURE
    res = SolveResult(t_ext, v_ext, q_ext, iters, trace, status, feasible,
                      start_traces=[trace], design="CCJT_OPT")
    return sol, res


def _hermitian_psd_part(v) -> np.ndarray:
    v = 0.5 * (v + v.conj().T)
    w, u = np.linalg.eigh(v)
    return (u * np.maximum(w, 0.0)) @ u.conj().T


def _unit_columns(m: np.ndarray) -> np.ndarray:
    return m / np.linalg.norm(m, axis=0)


def _mmse_dirs(ch, req, cfg) -> np.ndarray:
    from .precoding import mmse_access

    return mmse_access(ch.access, cfg.noise_power)
