import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from fdmec.model import (ConfigError, ScenarioConfig, config_from_dict, db_to_linear,
                         dbm_to_watts, generate_channels, linear_to_db, load_config)


def test_db_conversions():
    assert db_to_linear(0.0) == 1.0
    assert math.isclose(db_to_linear(-70.0), 1e-7, rel_tol=1e-12)
    assert math.isclose(dbm_to_watts(-100.0), 1e-13, rel_tol=1e-12)


@given(st.floats(-200, 200))
def test_db_round_trip(x):
    assert math.isclose(linear_to_db(db_to_linear(x)), x, abs_tol=1e-9)


def test_linear_to_db_rejects_nonpositive():
    with pytest.raises(ValueError):
        linear_to_db(0.0)


def test_defaults_match_simulation_setup(cfg):
    assert (cfg.num_wap_antennas, cfg.num_ens, cfg.library_size) == (4, 4, 100)
    assert math.isclose(cfg.noise_power, 1e-13)
    assert math.isclose(cfg.si_efficiency_mean, 1e-7)
    assert math.isclose(cfg.pathloss_cross, db_to_linear(-56.0))


@pytest.mark.parametrize("bad", [
    dict(num_ens=5),
    dict(cache_size=101.0),
    dict(cache_size=-1.0),
    dict(noise_power=0.0),
    dict(si_efficiency_mean=1.5),
    dict(si_model="lognormal"),
    dict(zipf_xi=-0.1),
])
def test_invalid_configs_rejected(bad):
    with pytest.raises(ConfigError):
        ScenarioConfig(**bad)


def test_diagonal_access_when_cross_gain_zero():
    cfg = ScenarioConfig(pathloss_access_direct=1.0, pathloss_cross=0.0)
    ch = generate_channels(cfg, np.random.default_rng(3))
    off = ch.access - np.diag(np.diag(ch.access))
    assert np.all(off == 0)


def test_deterministic_eta(cfg):
    ch = generate_channels(cfg, np.random.default_rng(0))
    assert ch.eta == 1e-7


def test_gamma_eta_mean():
    cfg = ScenarioConfig(si_model="gamma", si_gamma_shape=2.0)
    rng = np.random.default_rng(1)
    etas = [generate_channels(cfg, rng).eta for _ in range(4000)]
    assert abs(np.mean(etas) / 1e-7 - 1) < 0.05


def test_backhaul_second_moment_matches_pathloss(cfg):
    rng = np.random.default_rng(7)
    draws = np.array([generate_channels(cfg, rng).backhaul[0, 0] for _ in range(100_000)])
    assert abs(np.mean(np.abs(draws) ** 2) / cfg.pathloss_backhaul - 1) < 0.02


def test_shapes(cfg):
    ch = generate_channels(cfg, np.random.default_rng(0))
    assert ch.backhaul.shape == (4, 4)
    assert ch.access.shape == (4, 4)
    assert ch.inter_en.shape == (4, 4)


def test_config_from_dict_units(tmp_path):
    doc = {"sigma2_dbm": -100, "eta_bar_db": -70, "p_bs_max": 3.16, "si_model": {"kind": "gamma", "shape": 2}}
    cfg = config_from_dict(doc)
    assert math.isclose(cfg.noise_power, 1e-13)
    assert math.isclose(cfg.si_efficiency_mean, 1e-7)
    assert cfg.si_model == "gamma" and cfg.si_gamma_shape == 2
    path = tmp_path / "c.json"
    path.write_text(json.dumps(doc))
    assert load_config(path) == cfg


def test_config_from_dict_unknown_key():
    with pytest.raises(ConfigError):
        config_from_dict({"warp_factor": 9})
