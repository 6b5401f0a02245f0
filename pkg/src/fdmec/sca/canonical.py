"""Canonical convex subproblems of the inner-approximation method.

Variables are stacked as ``v = [p, q, aux]`` and every vector below acts on
``[v; 1]``.  A subproblem is::

    minimize t
    s.t.  sum_r c_r log(a_r . v) >= (c_time / t if timed) + rhs . v   (log rows)
          row . v <= 0                                                 (linear rows)

The auxiliary variables only enter through first-order bounds
``bound . v <= exp(a0) (aux - a0 + 1)`` (stored as linear rows and described
by :class:`AuxDef`) and with nonnegative weight on the right-hand side of
log rows.  At any optimum each auxiliary therefore sits on its lower bound
``a0 - 1 + exp(-a0) bound . v``, which is how the barrier solver eliminates
them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..model import ScenarioConfig
from ..precoding import CoefficientBundle

__all__ = [
    "LogRow",
    "LinRow",
    "AuxDef",
    "SubproblemCanonical",
    "build_dcst_subproblem",
    "build_ccjt_zf_subproblem",
    "build_ccjt_mmse_subproblem",
    "BUILDERS",
    "anchors_at",
    "time_coefficient",
]


@dataclass
class LogRow:
    terms: list  # [(coef, a)], a over [v; 1]
    rhs: np.ndarray
    timed: bool
    label: str


@dataclass
class LinRow:
    row: np.ndarray
    label: str


@dataclass
class AuxDef:
    name: str  # anchor family: "x", "y" or "z"
    slot: int  # position inside its family
    index: int  # variable index in v
    anchor: float
    bound: np.ndarray  # over [v; 1], zero on auxiliary slots


@dataclass
class SubproblemCanonical:
    n_p: int
    n_q: int
    n_aux: int
    c_time: float
    log_rows: list = field(default_factory=list)
    lin_rows: list = field(default_factory=list)
    aux: list = field(default_factory=list)
    p_scale: np.ndarray = None
    q_scale: np.ndarray = None
    psd: tuple = None  # (dim, blocks): leading p entries parametrize Hermitian PSD blocks

    @property
    def n_power(self) -> int:
        return self.n_p + self.n_q

    @property
    def n_vars(self) -> int:
        return self.n_p + self.n_q + self.n_aux

    @property
    def num_constraints(self) -> int:
        return len(self.log_rows) + len(self.lin_rows)

    def split(self, v: np.ndarray):
        return v[: self.n_p], v[self.n_p: self.n_power], v[self.n_power:]

    def aux_lower_bounds(self, pq: np.ndarray) -> np.ndarray:
        """Smallest auxiliary values allowed at power point ``pq``."""
        vh = np.concatenate([pq, np.zeros(self.n_aux), [1.0]])
        return np.array([a.anchor - 1.0 + np.exp(-a.anchor) * (a.bound @ vh) for a in self.aux])

    def anchors_of(self, aux_values: np.ndarray) -> dict:
        """Group auxiliary values by family, ready to seed the next subproblem."""
        out: dict = {}
        for a, val in zip(self.aux, aux_values):
            out.setdefault(a.name, {})[a.slot] = val
        return {k: np.array([d[i] for i in sorted(d)]) for k, d in out.items()}

    def evaluate(self, v: np.ndarray, t: float) -> tuple[np.ndarray, np.ndarray]:
        """Slack of every log row and of every linear row at ``(v, t)``."""
        vh = np.append(v, 1.0)
        log_slack = []
        for row in self.log_rows:
            lhs = sum(c * np.log(a @ vh) for c, a in row.terms)
            rhs = row.rhs @ vh + (self.c_time / t if row.timed else 0.0)
            log_slack.append(lhs - rhs)
        lin_slack = [-(r.row @ vh) for r in self.lin_rows]
        return np.array(log_slack), np.array(lin_slack)


def time_coefficient(cfg: ScenarioConfig) -> float:
    """``Q log(2) / W``: the delivery-time constraint reads ``log(1+SINR) >= c / t``."""
    return cfg.file_size * np.log(2.0) / cfg.bandwidth


class _Layout:
    def __init__(self, n_p, n_q, families):
        self.n_p, self.n_q = n_p, n_q
        self.offsets = {}
        pos = n_p + n_q
        for name, size in families:
            self.offsets[name] = pos
            pos += size
        self.n_aux = pos - n_p - n_q
        self.size = pos + 1

    def p(self, vec_hat) -> np.ndarray:
        """Embed a vector over ``[p; 1]``."""
        out = np.zeros(self.size)
        out[: self.n_p] = vec_hat[: self.n_p]
        out[-1] = vec_hat[self.n_p]
        return out

    def p_plain(self, vec) -> np.ndarray:
        out = np.zeros(self.size)
        out[: self.n_p] = vec
        return out

    def q(self, vec_hat) -> np.ndarray:
        out = np.zeros(self.size)
        out[self.n_p: self.n_p + self.n_q] = vec_hat[: self.n_q]
        out[-1] = vec_hat[self.n_q]
        return out

    def unit(self, family, slot) -> np.ndarray:
        out = np.zeros(self.size)
        out[self.offsets[family] + slot] = 1.0
        return out

    def const(self, value) -> np.ndarray:
        out = np.zeros(self.size)
        out[-1] = value
        return out


def _add_aux(sp: SubproblemCanonical, lay: _Layout, name: str, slot: int, anchor: float,
             bound: np.ndarray) -> None:
    idx = lay.offsets[name] + slot
    ea = np.exp(anchor)
    row = bound.copy()
    row[idx] -= ea
    row[-1] -= ea * (1.0 - anchor)
    sp.lin_rows.append(LinRow(row, f"lin-{name}{slot}"))
    sp.aux.append(AuxDef(name, slot, idx, float(anchor), bound))


def _caps(sp, lay, bundle, cfg, pooled):
    k = bundle.num_ens
    if pooled is None:
        for i in range(k):
            row = lay.p_plain(np.eye(k)[i]) - lay.const(cfg.p_en_max)
            sp.lin_rows.append(LinRow(row, f"cap-p{i}"))
    else:
        sp.lin_rows.append(LinRow(lay.p_plain(pooled) - lay.const(k * cfg.p_en_max), "cap-pooled"))
    if bundle.num_partial:
        sp.lin_rows.append(LinRow(lay.q(bundle.lam) - lay.const(cfg.p_bs_max), "cap-q"))


def _ratio_form(bundle, cfg, anchors, num, den, fd, pooled, n_p=None):
    """Shared structure of the separate-transmission, cooperative-MMSE and
    relaxed optimal-precoding problems (``n_p`` access variables)."""
    k, kc = bundle.num_ens, bundle.num_partial
    n_p = k if n_p is None else n_p
    lay = _Layout(n_p, kc, [("x", kc), ("y", k), ("z", kc)])
    sp = SubproblemCanonical(n_p, kc, lay.n_aux, time_coefficient(cfg))
    x0 = np.asarray(anchors["x"], float) if kc else np.zeros(0)
    y0 = np.asarray(anchors["y"], float)
    z0 = np.asarray(anchors["z"], float) if kc else np.zeros(0)

    for j in range(k):
        sp.log_rows.append(LogRow([(1.0, lay.p(num[j]))], lay.unit("y", j), True, f"rate{j}"))
    for i, en in enumerate(bundle.uc):
        mb = float(bundle.mu_bar[i])
        terms = [(1.0, lay.p(fd[i]) + lay.q(bundle.a1[i])), (mb, lay.p(den[en]))]
        rhs = mb * lay.unit("x", i) + lay.unit("z", i)
        sp.log_rows.append(LogRow(terms, rhs, False, f"buffer{en}"))
    for i, en in enumerate(bundle.uc):
        _add_aux(sp, lay, "x", i, x0[i], lay.p(num[en]))
    for j in range(k):
        _add_aux(sp, lay, "y", j, y0[j], lay.p(den[j]))
    for i in range(kc):
        _add_aux(sp, lay, "z", i, z0[i], lay.p(fd[i]) + lay.q(bundle.a2[i]))
    _caps(sp, lay, bundle, cfg, pooled)
    return sp


def _q_scale(bundle, cfg):
    return cfg.p_bs_max / np.maximum(bundle.lam[:-1], 1e-300)


def build_dcst_subproblem(bundle: CoefficientBundle, cfg: ScenarioConfig,
                          anchors: dict) -> SubproblemCanonical:
    """Inner approximation of the separate-transmission problem.

    ``anchors`` holds ``x`` (one per partially cached EN), ``y`` (one per
    user) and ``z`` (one per partially cached EN).
    """
    sp = _ratio_form(bundle, cfg, anchors, bundle.b1, bundle.b2, bundle.d, None)
    sp.p_scale = np.full(bundle.num_ens, cfg.p_en_max)
    sp.q_scale = _q_scale(bundle, cfg)
    return sp


def build_ccjt_mmse_subproblem(bundle: CoefficientBundle, cfg: ScenarioConfig,
                               anchors: dict) -> SubproblemCanonical:
    """Cooperative MMSE problem: same structure with E-vectors and a pooled EN budget."""
    fd = np.tile(bundle.eta * bundle.beta, (bundle.num_partial, 1))
    sp = _ratio_form(bundle, cfg, anchors, bundle.e1, bundle.e2, fd, bundle.beta[:-1])
    sp.p_scale = cfg.p_en_max / bundle.beta[:-1]
    sp.q_scale = _q_scale(bundle, cfg)
    return sp


def build_ccjt_zf_subproblem(bundle: CoefficientBundle, cfg: ScenarioConfig,
                             anchors: dict) -> SubproblemCanonical:
    """Cooperative zero-forcing problem; ``x`` anchors the access SNR, ``y`` the backhaul interference."""
    k, kc = bundle.num_ens, bundle.num_partial
    lay = _Layout(k, kc, [("x", kc), ("y", kc)])
    sp = SubproblemCanonical(k, kc, lay.n_aux, time_coefficient(cfg))
    snr = [lay.p_plain(np.eye(k)[j] / bundle.sigma2) + lay.const(1.0) for j in range(k)]
    fd = lay.p_plain(bundle.eta * bundle.alpha)
    for j in range(k):
        sp.log_rows.append(LogRow([(1.0, snr[j])], lay.const(0.0), True, f"rate{j}"))
    for i, en in enumerate(bundle.uc):
        mb = float(bundle.mu_bar[i])
        rhs = mb * lay.unit("x", i) + lay.unit("y", i)
        sp.log_rows.append(LogRow([(1.0, lay.q(bundle.a1[i]) + fd)], rhs, False, f"buffer{en}"))
    if kc:
        x0 = np.asarray(anchors["x"], float)
        y0 = np.asarray(anchors["y"], float)
        for i, en in enumerate(bundle.uc):
            _add_aux(sp, lay, "x", i, x0[i], snr[en])
        for i in range(kc):
            _add_aux(sp, lay, "y", i, y0[i], fd + lay.q(bundle.a2[i]))
    _caps(sp, lay, bundle, cfg, bundle.alpha)
    sp.p_scale = cfg.p_en_max / bundle.alpha
    sp.q_scale = _q_scale(bundle, cfg)
    return sp


BUILDERS = {
    "DCST": build_dcst_subproblem,
    "CCJT_ZF": build_ccjt_zf_subproblem,
    "CCJT_MMSE": build_ccjt_mmse_subproblem,
}


def anchors_at(builder, bundle: CoefficientBundle, cfg: ScenarioConfig, p, q) -> dict:
    """Anchors equal to the exact log of every bounded expression at ``(p, q)``."""
    kc, k = bundle.num_partial, bundle.num_ens
    dummy = {"x": np.zeros(kc), "y": np.zeros(k), "z": np.zeros(kc)}
    sp = builder(bundle, cfg, dummy)
    vh = np.concatenate([p, q, np.zeros(sp.n_aux), [1.0]])
    vals = np.array([np.log(a.bound @ vh) for a in sp.aux])
    return sp.anchors_of(vals)
