import numpy as np
import pytest

from fdmec.caching import CachePolicy, draw_requests, make_policy, requests_from_demands
from fdmec.model import ScenarioConfig, generate_channels


@pytest.fixture
def cfg():
    return ScenarioConfig()


def instance(cfg, seed, placement="most-popular"):
    rng = np.random.default_rng(seed)
    ch = generate_channels(cfg, rng)
    req = draw_requests(cfg, make_policy(cfg, placement), rng)
    return ch, req


def instance_with_partial(cfg, seed, partial, uncached=0.5):
    """Channel of ``seed`` with demands leaving exactly the ENs in ``partial`` partially cached."""
    ch = generate_channels(cfg, np.random.default_rng(seed))
    mu = np.ones(cfg.library_size)
    mu[0] = 1.0 - uncached
    demands = [1 if k in partial else 2 for k in range(cfg.num_ens)]
    return ch, requests_from_demands(demands, CachePolicy(mu))
