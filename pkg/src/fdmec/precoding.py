"""Backhaul/access precoders and the coefficient vectors of every power problem.

Precoder directions are closed-form per channel realization and stay fixed
while powers are optimized.  Effective gains use the row-channel
convention: the gain of precoder column ``w`` at receiver row ``g`` is
``|g @ w|**2``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import ChannelRealization, RequestOutcome

__all__ = [
    "DESIGNS",
    "NearSingular",
    "DimensionMismatch",
    "PrecoderSet",
    "CoefficientBundle",
    "mmse_backhaul",
    "zf_access",
    "mmse_access",
    "build_precoders",
    "build_bundle",
    "bundle_for",
    "ZF_CONDITION_LIMIT",
]

DESIGNS = ("DCST", "CCJT_ZF", "CCJT_MMSE", "CCJT_OPT")
ZF_CONDITION_LIMIT = 1e12


class NearSingular(np.linalg.LinAlgError):
    """The access channel is too ill-conditioned for zero forcing."""


class DimensionMismatch(ValueError):
    pass


def mmse_backhaul(g_c: np.ndarray, sigma2: float) -> np.ndarray:
    """Regularized inverse ``G^H (G G^H + sigma2 I)^-1``; column k serves EN k."""
    g_c = np.atleast_2d(g_c)
    gram = g_c @ g_c.conj().T + sigma2 * np.eye(g_c.shape[0])
    return np.linalg.solve(gram.T, g_c.conj()).T


def zf_access(h: np.ndarray) -> np.ndarray:
    """Zero-forcing precoder ``H^H (H H^H)^-1``.

    Raises
    ------
    NearSingular
        If the condition number of ``h`` exceeds ``ZF_CONDITION_LIMIT``.
    """
    cond = np.linalg.cond(h)
    if not np.isfinite(cond) or cond > ZF_CONDITION_LIMIT:
        raise NearSingular(f"access channel condition number {cond:.3g} too large for ZF")
    return np.linalg.solve((h @ h.conj().T).T, h.conj()).T


def mmse_access(h: np.ndarray, sigma2: float) -> np.ndarray:
    """Regularized zero forcing ``H^H (H H^H + sigma2 I)^-1``."""
    gram = h @ h.conj().T + sigma2 * np.eye(h.shape[0])
    return np.linalg.solve(gram.T, h.conj()).T


@dataclass(frozen=True)
class PrecoderSet:
    backhaul_dirs: np.ndarray
    access_dirs: Optional[np.ndarray]
    design_tag: str


def build_precoders(ch: ChannelRealization, req: RequestOutcome, design_tag: str,
                    sigma2: float) -> PrecoderSet:
    if design_tag not in DESIGNS:
        raise ValueError(f"unknown design {design_tag!r}")
    uc = list(req.partially_cached)
    n = ch.backhaul.shape[1]
    w = mmse_backhaul(ch.backhaul[uc], sigma2) if uc else np.zeros((n, 0), complex)
    if design_tag == "CCJT_ZF":
        access = zf_access(ch.access)
    elif design_tag == "CCJT_MMSE":
        access = mmse_access(ch.access, sigma2)
    else:
        access = None
    return PrecoderSet(w, access, design_tag)


@dataclass(frozen=True)
class CoefficientBundle:
    """Nonnegative coefficient vectors parameterizing the power problems.

    Row ``i`` of ``a1``/``a2``/``d`` belongs to EN ``uc[i]``.  Vectors act on
    ``[q; 1]`` (length K_C + 1) or ``[p; 1]`` (length K + 1); the trailing
    slot carries the noise power (or zero).
    """

    design_tag: str
    sigma2: float
    eta: float
    uc: tuple[int, ...]
    mu_bar: np.ndarray
    a1: np.ndarray
    a2: np.ndarray
    lam: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    d: np.ndarray
    alpha: Optional[np.ndarray] = None
    beta: Optional[np.ndarray] = None
    e1: Optional[np.ndarray] = None
    e2: Optional[np.ndarray] = None
    access: Optional[np.ndarray] = None

    @property
    def num_ens(self) -> int:
        return self.b1.shape[0]

    @property
    def num_partial(self) -> int:
        return len(self.uc)


def _with_noise(gains: np.ndarray, tail: float) -> np.ndarray:
    return np.hstack([gains, np.full((gains.shape[0], 1), tail)])


def _interference(full: np.ndarray) -> np.ndarray:
    out = full.copy()
    idx = np.arange(out.shape[0])
    out[idx, idx] = 0.0
    return out


def build_bundle(ch: ChannelRealization, req: RequestOutcome, pre: PrecoderSet,
                 sigma2: float) -> CoefficientBundle:
    """Assemble the coefficient vectors for ``pre.design_tag``."""
    k = ch.num_ens
    uc = tuple(req.partially_cached)
    kc = len(uc)
    if pre.backhaul_dirs.shape[1] != kc:
        raise DimensionMismatch(
            f"{pre.backhaul_dirs.shape[1]} backhaul precoders for {kc} partially cached ENs")
    if len(req.uncached_fractions) != kc:
        raise DimensionMismatch("uncached_fractions must match the partially cached set")

    g_c = ch.backhaul[list(uc)]
    bh = np.abs(g_c @ pre.backhaul_dirs) ** 2 if kc else np.zeros((0, 0))
    a1 = _with_noise(bh, sigma2)
    a2 = _with_noise(_interference(bh), sigma2)
    lam = np.append(np.sum(np.abs(pre.backhaul_dirs) ** 2, axis=0), 0.0)

    hh = np.abs(ch.access) ** 2
    b1 = _with_noise(hh, sigma2)
    b2 = _with_noise(_interference(hh), sigma2)

    ff = np.abs(ch.inter_en) ** 2
    d = np.zeros((kc, k + 1))
    for i, en in enumerate(uc):
        d[i, :k] = ff[en]
        d[i, en] = ch.eta

    alpha = beta = e1 = e2 = access = None
    if pre.design_tag in ("CCJT_ZF", "CCJT_MMSE"):
        if pre.access_dirs is None or pre.access_dirs.shape != (k, k):
            raise DimensionMismatch("linear CCJT designs need a K x K access precoder")
        norms = np.sum(np.abs(pre.access_dirs) ** 2, axis=0)
        alpha = norms
        beta = np.append(norms, 0.0)
        eff = np.abs(ch.access @ pre.access_dirs) ** 2
        e1 = _with_noise(eff, sigma2)
        e2 = _with_noise(_interference(eff), sigma2)
    elif pre.design_tag == "CCJT_OPT":
        access = ch.access

    return CoefficientBundle(
        design_tag=pre.design_tag, sigma2=sigma2, eta=float(ch.eta), uc=uc,
        mu_bar=np.asarray(req.uncached_fractions, dtype=float),
        a1=a1, a2=a2, lam=lam, b1=b1, b2=b2, d=d,
        alpha=alpha, beta=beta, e1=e1, e2=e2, access=access,
    )


def bundle_for(ch: ChannelRealization, req: RequestOutcome, design_tag: str,
               sigma2: float) -> CoefficientBundle:
    """Shortcut: closed-form precoders, then the bundle."""
    return build_bundle(ch, req, build_precoders(ch, req, design_tag, sigma2), sigma2)


def bundle_with_directions(ch: ChannelRealization, req: RequestOutcome,
                           directions: np.ndarray, sigma2: float) -> CoefficientBundle:
    """Linear CCJT bundle for arbitrary fixed access directions (columns)."""
    w = build_precoders(ch, req, "DCST", sigma2).backhaul_dirs
    return build_bundle(ch, req, PrecoderSet(w, directions, "CCJT_MMSE"), sigma2)
