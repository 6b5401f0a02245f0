"""Content popularity, cache placement and per-round request draws."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import RequestOutcome, ScenarioConfig

__all__ = [
    "CachePolicy",
    "zipf_pmf",
    "place_most_popular",
    "place_fractional",
    "make_policy",
    "draw_requests",
    "PLACEMENTS",
]

PLACEMENTS = ("most-popular", "fractional")


@dataclass(frozen=True)
class CachePolicy:
    """Cached portion ``mu[n]`` of file ``n + 1`` at every EN."""

    mu: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        if mu.ndim != 1 or np.any(mu < 0) or np.any(mu > 1):
            raise ValueError("cache portions must be a vector with entries in [0, 1]")
        object.__setattr__(self, "mu", mu)

    @property
    def memory(self) -> float:
        return float(self.mu.sum())


def zipf_pmf(num_files: int, xi: float) -> np.ndarray:
    """Zipf request probabilities ``n**-xi / sum_m m**-xi`` for n = 1..F."""
    if num_files < 1:
        raise ValueError("num_files must be positive")
    w = np.arange(1, num_files + 1, dtype=float) ** (-float(xi))
    return w / w.sum()


def place_most_popular(num_files: int, memory: float) -> CachePolicy:
    """Cache the floor(M) most popular files whole, plus frac(M) of the next one."""
    memory = min(max(float(memory), 0.0), float(num_files))
    mu = np.zeros(num_files)
    whole = int(math.floor(memory))
    mu[:whole] = 1.0
    if whole < num_files:
        mu[whole] = memory - whole
    return CachePolicy(mu)


def place_fractional(num_files: int, memory: float) -> CachePolicy:
    """Cache the same portion M/F of every file."""
    return CachePolicy(np.full(num_files, min(max(float(memory), 0.0), num_files) / num_files))


def make_policy(cfg: ScenarioConfig, placement: str) -> CachePolicy:
    if placement == "most-popular":
        return place_most_popular(cfg.library_size, cfg.cache_size)
    if placement == "fractional":
        return place_fractional(cfg.library_size, cfg.cache_size)
    raise ValueError(f"unknown placement {placement!r}; expected one of {PLACEMENTS}")


def requests_from_demands(demands, policy: CachePolicy) -> RequestOutcome:
    """Derive the partially-cached set for a fixed demand vector."""
    demands = np.asarray(demands, dtype=int)
    if demands.size and (demands.min() < 1 or demands.max() > len(policy.mu)):
        raise ValueError(f"demands must lie in 1..{len(policy.mu)}")
    cached = policy.mu[demands - 1]
    partial = np.flatnonzero(cached < 1.0)
    return RequestOutcome(
        demands=demands,
        partially_cached=tuple(int(k) for k in partial),
        uncached_fractions=1.0 - cached[partial],
    )


def draw_requests(cfg: ScenarioConfig, policy: CachePolicy,
                  rng: np.random.Generator) -> RequestOutcome:
    """Draw one independent Zipf demand per EN."""
    pmf = zipf_pmf(cfg.library_size, cfg.zipf_xi)
    demands = rng.choice(cfg.library_size, size=cfg.num_ens, p=pmf) + 1
    return requests_from_demands(demands, policy)
