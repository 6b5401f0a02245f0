"""Achievable rates, delivery time and feasibility of the buffer constraint.

Every rate is in bits/s.  Rates are evaluated from the coefficient bundle
as ``W log2(1 + signal / (interference + noise))``; the ``log1p`` form
avoids cancellation between the two vector products at high SNR.

For the optimal CCJT design the access "powers" are the K covariance
blocks ``V[i]`` (an array of shape ``(K, K, K)``) instead of a vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .precoding import CoefficientBundle

__all__ = [
    "PowerProfile",
    "LinkRates",
    "transmit_power",
    "backhaul_rates",
    "access_rates",
    "link_rates",
    "rate_backhaul_dcst",
    "rate_access_dcst",
    "rate_backhaul_ccjt",
    "rate_access_ccjt",
    "delivery_time",
    "effective_delivery_time",
    "check_buffer_constraint",
    "buffer_margin",
    "power_feasible",
]

LOG2 = np.log(2.0)


@dataclass(frozen=True)
class PowerProfile:
    access: np.ndarray
    backhaul: np.ndarray


@dataclass(frozen=True)
class LinkRates:
    backhaul: np.ndarray  # one entry per partially cached EN
    access: np.ndarray    # one entry per user


def _hat(v) -> np.ndarray:
    return np.append(np.asarray(v, dtype=float), 1.0)


def _bits(sinr, bandwidth: float) -> np.ndarray:
    return bandwidth * np.log1p(sinr) / LOG2


def transmit_power(bundle: CoefficientBundle, p) -> float:
    """Total EN transmit power entering the cooperative self-interference term."""
    tag = bundle.design_tag
    if tag == "DCST":
        return float(np.sum(p))
    if tag == "CCJT_OPT":
        return float(np.real(np.einsum("kii->", np.asarray(p))))
    return float(bundle.alpha @ np.asarray(p, dtype=float))


def _backhaul_sinr(bundle: CoefficientBundle, q, fd_interference) -> np.ndarray:
    if bundle.num_partial == 0:
        return np.zeros(0)
    qh = _hat(q)
    signal = (bundle.a1 - bundle.a2) @ qh
    return signal / (bundle.a2 @ qh + fd_interference)


def backhaul_rates(bundle: CoefficientBundle, p, q, bandwidth: float) -> np.ndarray:
    if bundle.num_partial == 0:
        return np.zeros(0)
    if bundle.design_tag == "DCST":
        fd = bundle.d @ _hat(p)
    else:
        fd = bundle.eta * transmit_power(bundle, p)
    return _bits(_backhaul_sinr(bundle, q, fd), bandwidth)


def access_rates(bundle: CoefficientBundle, p, bandwidth: float) -> np.ndarray:
    tag = bundle.design_tag
    if tag == "DCST":
        ph = _hat(p)
        sinr = ((bundle.b1 - bundle.b2) @ ph) / (bundle.b2 @ ph)
    elif tag == "CCJT_ZF":
        sinr = np.asarray(p, dtype=float) / bundle.sigma2
    elif tag == "CCJT_MMSE":
        ph = _hat(p)
        sinr = ((bundle.e1 - bundle.e2) @ ph) / (bundle.e2 @ ph)
    else:
        v = np.asarray(p)
        h = bundle.access
        # gains[k, i] = Tr(h_k^H h_k V_i) = h_k V_i h_k^H
        gains = np.real(np.einsum("ka,iab,kb->ki", h, v, h.conj()))
        desired = np.diag(gains).copy()
        sinr = desired / (gains.sum(axis=1) - desired + bundle.sigma2)
    return _bits(np.maximum(sinr, 0.0), bandwidth)


def link_rates(bundle: CoefficientBundle, p, q, bandwidth: float) -> LinkRates:
    return LinkRates(backhaul_rates(bundle, p, q, bandwidth),
                     access_rates(bundle, p, bandwidth))


def _position(bundle: CoefficientBundle, k: int) -> int:
    try:
        return bundle.uc.index(k)
    except ValueError:
        raise ValueError(f"EN {k} is not partially cached") from None


def rate_backhaul_dcst(bundle: CoefficientBundle, p, q, k: int, bandwidth: float) -> float:
    """Backhaul rate of EN ``k`` under separate access transmission."""
    i = _position(bundle, k)
    ph, qh = _hat(p), _hat(q)
    fd = bundle.d[i] @ ph
    sinr = (bundle.a1[i] - bundle.a2[i]) @ qh / (bundle.a2[i] @ qh + fd)
    return float(_bits(sinr, bandwidth))


def rate_access_dcst(bundle: CoefficientBundle, p, k: int, bandwidth: float) -> float:
    ph = _hat(p)
    sinr = (bundle.b1[k] - bundle.b2[k]) @ ph / (bundle.b2[k] @ ph)
    return float(_bits(sinr, bandwidth))


def rate_backhaul_ccjt(bundle: CoefficientBundle, x_power_total: float, q, k: int,
                       bandwidth: float) -> float:
    """Backhaul rate of EN ``k`` when the ENs cancel each other's known signals.

    ``x_power_total`` is the summed EN transmit power, whose residual
    ``eta * x_power_total`` survives cancellation.
    """
    i = _position(bundle, k)
    qh = _hat(q)
    sinr = (bundle.a1[i] - bundle.a2[i]) @ qh / (bundle.a2[i] @ qh + bundle.eta * x_power_total)
    return float(_bits(sinr, bandwidth))


def rate_access_ccjt(bundle: CoefficientBundle, p, k: int, bandwidth: float) -> float:
    """Access rate of user ``k`` for the bundle's cooperative design."""
    return float(access_rates(bundle, p, bandwidth)[k])


def delivery_time(rates, file_size: float) -> float:
    """Largest per-user delivery time ``max_k Q / R_k``; +inf if any rate is zero."""
    rates = np.asarray(rates, dtype=float)
    if rates.size == 0:
        return 0.0
    if np.any(~(rates > 0)):
        return float("inf")
    return float(np.max(file_size / rates))


def effective_delivery_time(bundle: CoefficientBundle, p, q, bandwidth: float,
                            file_size: float) -> float:
    """Delivery time when the backhaul may be the bottleneck.

    A user whose EN's buffer would run dry is served at ``C_k / mu_bar_k``
    instead of ``R_k``.  Equals :func:`delivery_time` on feasible points.
    """
    lr = link_rates(bundle, p, q, bandwidth)
    rate = lr.access.copy()
    if bundle.num_partial:
        idx = list(bundle.uc)
        rate[idx] = np.minimum(rate[idx], lr.backhaul / bundle.mu_bar)
    return delivery_time(rate, file_size)


def buffer_margin(bundle: CoefficientBundle, p, q, bandwidth: float) -> np.ndarray:
    """``C_k - mu_bar_k R_k`` for every partially cached EN."""
    lr = link_rates(bundle, p, q, bandwidth)
    return lr.backhaul - bundle.mu_bar * lr.access[list(bundle.uc)]


def check_buffer_constraint(bundle: CoefficientBundle, p, q, bandwidth: float,
                            tol: float = 1e-6) -> np.ndarray:
    """Per partially-cached EN: does ``C_k >= mu_bar_k R_k`` hold (relative tol)?"""
    lr = link_rates(bundle, p, q, bandwidth)
    need = bundle.mu_bar * lr.access[list(bundle.uc)]
    return lr.backhaul >= need - tol * need


def power_feasible(bundle: CoefficientBundle, p, q, p_en_max: float, p_bs_max: float,
                   tol: float = 1e-6) -> bool:
    """Power caps of the bundle's design, with relative tolerance."""
    q = np.asarray(q, dtype=float)
    if np.any(q < -tol * p_bs_max):
        return False
    if bundle.lam[:-1] @ q > p_bs_max * (1 + tol):
        return False
    k = bundle.num_ens
    if bundle.design_tag == "DCST":
        p = np.asarray(p, dtype=float)
        return bool(np.all(p >= -tol * p_en_max) and np.all(p <= p_en_max * (1 + tol)))
    total = transmit_power(bundle, p)
    if bundle.design_tag == "CCJT_OPT":
        eig_min = min(np.linalg.eigvalsh(v).min() for v in np.asarray(p))
        if eig_min < -tol * p_en_max:
            return False
    elif np.any(np.asarray(p) < -tol * p_en_max):
        return False
    return total <= k * p_en_max * (1 + tol)
