"""Scenario configuration, channel generation and the shared domain types.

All quantities stored on these objects are in linear units (watts, linear
gains, bits, Hz).  dB/dBm inputs are converted once, when a configuration
is loaded.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "ChannelRealization",
    "RequestOutcome",
    "db_to_linear",
    "linear_to_db",
    "dbm_to_watts",
    "generate_channels",
    "load_config",
    "config_from_dict",
]


class ConfigError(ValueError):
    """Raised when a scenario configuration violates its invariants."""


def db_to_linear(x_db: float) -> float:
    """Convert a value in dB to a linear ratio."""
    return 10.0 ** (x_db / 10.0)


def linear_to_db(x: float) -> float:
    """Convert a positive linear ratio to dB."""
    if not x > 0:
        raise ValueError(f"linear_to_db needs a positive input, got {x!r}")
    return 10.0 * math.log10(x)


def dbm_to_watts(x_dbm: float) -> float:
    return db_to_linear(x_dbm) * 1e-3


@dataclass(frozen=True)
class ScenarioConfig:
    """Physical and system parameters of one full-duplex edge-caching network.

    Defaults describe the reference scenario:
    4 WAP antennas, 4 edge nodes, a 100-file library, 100 Mb files, 10 MHz,
    -100 dBm noise, path losses of -60/-50/-56 dB and -70 dB residual
    self-interference.
    """

    num_wap_antennas: int = 4
    num_ens: int = 4
    library_size: int = 100
    cache_size: float = 40.0
    file_size: float = 100e6
    bandwidth: float = 10e6
    noise_power: float = 1e-13
    p_bs_max: float = 10.0
    p_en_max: float = 5.0
    pathloss_backhaul: float = 1e-6
    pathloss_access_direct: float = 1e-5
    pathloss_cross: float = 10.0 ** -5.6
    si_efficiency_mean: float = 1e-7
    si_model: str = "deterministic"
    si_gamma_shape: float = 1.0
    zipf_xi: float = 0.8
    rng_seed: int = 0

    def __post_init__(self):
        n, k = self.num_wap_antennas, self.num_ens
        if n < 1 or k < 1:
            raise ConfigError("num_wap_antennas and num_ens must be positive")
        if k > n:
            raise ConfigError(f"need num_ens <= num_wap_antennas, got K={k} > N={n}")
        if self.library_size < 1:
            raise ConfigError("library_size must be positive")
        if not 0 <= self.cache_size <= self.library_size:
            raise ConfigError("cache_size must lie in [0, library_size]")
        for name in ("file_size", "bandwidth", "noise_power", "p_bs_max", "p_en_max",
                     "pathloss_backhaul", "pathloss_access_direct"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be strictly positive")
        # a zero cross gain is allowed: it switches off inter-EN and
        # off-diagonal access links
        if self.pathloss_cross < 0:
            raise ConfigError("pathloss_cross must be nonnegative")
        if not 0 < self.si_efficiency_mean < 1:
            raise ConfigError("si_efficiency_mean must lie in (0, 1)")
        if self.si_model not in ("deterministic", "gamma"):
            raise ConfigError(f"unknown si_model {self.si_model!r}")
        if not self.si_gamma_shape > 0:
            raise ConfigError("si_gamma_shape must be positive")
        if self.zipf_xi < 0:
            raise ConfigError("zipf_xi must be nonnegative")

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class ChannelRealization:
    """One fading draw.

    ``backhaul[k]`` is the WAP -> EN k row vector, ``access[k, l]`` the
    EN l -> user k coefficient and ``inter_en[k, l]`` the EN l -> EN k
    coefficient.  The diagonal of ``inter_en`` (pre-cancellation
    self-channel) is generated but never used; the residual after
    cancellation is captured by ``eta``.
    """

    backhaul: np.ndarray
    access: np.ndarray
    inter_en: np.ndarray
    eta: float

    @property
    def num_ens(self) -> int:
        return self.access.shape[0]


@dataclass(frozen=True)
class RequestOutcome:
    """Demands of one request round and the derived partially-cached set.

    ``demands`` are 1-based file indices.  ``partially_cached`` lists, in
    increasing order, the ENs whose requested file is not fully cached,
    and ``uncached_fractions`` the matching non-cached portions.
    """

    demands: np.ndarray
    partially_cached: tuple[int, ...] = ()
    uncached_fractions: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def num_partial(self) -> int:
        return len(self.partially_cached)


def _cn(rng: np.random.Generator, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)


def generate_channels(cfg: ScenarioConfig, rng: np.random.Generator) -> ChannelRealization:
    """Draw one Rayleigh realization of every link, path loss included."""
    k, n = cfg.num_ens, cfg.num_wap_antennas
    g = _cn(rng, (k, n)) * math.sqrt(cfg.pathloss_backhaul)
    h = _cn(rng, (k, k))
    h_scale = np.full((k, k), math.sqrt(cfg.pathloss_cross))
    np.fill_diagonal(h_scale, math.sqrt(cfg.pathloss_access_direct))
    h = h * h_scale
    f = _cn(rng, (k, k)) * math.sqrt(cfg.pathloss_cross)
    if cfg.si_model == "deterministic":
        eta = cfg.si_efficiency_mean
    else:
        shape = cfg.si_gamma_shape
        eta = float(rng.gamma(shape, cfg.si_efficiency_mean / shape))
    return ChannelRealization(backhaul=g, access=h, inter_en=f, eta=eta)


_DB_ALIASES = {
    "sigma2_dbm": ("noise_power", "dbm"),
    "eta_bar_db": ("si_efficiency_mean", "db"),
    "g1_db": ("pathloss_backhaul", "db"),
    "g2_db": ("pathloss_access_direct", "db"),
    "ge_db": ("pathloss_cross", "db"),
}


def config_from_dict(doc: Mapping[str, Any]) -> ScenarioConfig:
    """Build a config from a JSON-style mapping.

    Field names match :class:`ScenarioConfig`.  Any field may instead be
    given with a ``_db`` or ``_dbm`` suffix, and the short aliases
    ``sigma2_dbm``, ``eta_bar_db``, ``g1_db``, ``g2_db``, ``ge_db`` are
    recognised.  ``si_model`` may be a string or
    ``{"kind": "gamma", "shape": 2.0}``.
    """
    names = {f.name for f in dataclasses.fields(ScenarioConfig)}
    kwargs: dict[str, Any] = {}
    for key, value in doc.items():
        if key in names:
            target, unit = key, None
        elif key in _DB_ALIASES:
            target, unit = _DB_ALIASES[key]
        elif key.endswith("_dbm") and key[:-4] in names:
            target, unit = key[:-4], "dbm"
        elif key.endswith("_db") and key[:-3] in names:
            target, unit = key[:-3], "db"
        else:
            raise ConfigError(f"unknown configuration field {key!r}")
        if target in kwargs:
            raise ConfigError(f"field {target!r} given more than once")
        if unit == "db":
            value = db_to_linear(float(value))
        elif unit == "dbm":
            value = dbm_to_watts(float(value))
        kwargs[target] = value

    model = kwargs.get("si_model")
    if isinstance(model, Mapping):
        kind = str(model.get("kind", "deterministic")).lower()
        if "shape" in model:
            kwargs["si_gamma_shape"] = float(model["shape"])
        kwargs["si_model"] = kind
    elif isinstance(model, str):
        kwargs["si_model"] = model.lower()
    for name in ("num_wap_antennas", "num_ens", "library_size", "rng_seed"):
        if name in kwargs:
            kwargs[name] = int(kwargs[name])
    return ScenarioConfig(**kwargs)


def load_config(path: str | Path) -> ScenarioConfig:
    with open(path) as fh:
        return config_from_dict(json.load(fh))
