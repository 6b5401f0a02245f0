import math

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from fdmec.baseline import grid_oracle, solve_hd
from fdmec.harness import trial_inputs
from fdmec.model import ScenarioConfig
from fdmec.precoding import bundle_for
from fdmec.rates import access_rates, check_buffer_constraint, delivery_time, power_feasible
from fdmec.sca import (BUILDERS, CONVERGED, ScaOptions, SubproblemInfeasible, anchors_at,
                       build_ccjt_mmse_subproblem, build_ccjt_zf_subproblem,
                       build_dcst_subproblem, initial_powers, kernel_backend,
                       restore_feasibility, run_sca, solve_convex_subproblem)
from fdmec.sca.canonical import LinRow, LogRow, SubproblemCanonical

from conftest import instance, instance_with_partial

FAST = ScaOptions(n_starts=2)


def _single_row(c, s2, cap):
    rows = [LogRow([(1.0, np.array([1.0, s2]))], np.zeros(2), True, "rate")]
    return SubproblemCanonical(1, 0, 0, c, rows, [LinRow(np.array([1.0, -cap]), "cap")], [],
                               np.array([cap]), np.zeros(0))


@pytest.mark.parametrize("method", ["barrier", "bisection", "conic"])
def test_single_constraint_closed_form(method):
    sp = _single_row(0.7, 1e-3, 5.0)
    sol = solve_convex_subproblem(sp, tol=1e-8, method=method)
    assert math.isclose(sol.t, 0.7 / math.log(5.0 + 1e-3), rel_tol=1e-7)
    assert math.isclose(sol.p[0], 5.0, rel_tol=1e-6)


@pytest.mark.parametrize("method", ["barrier", "bisection", "conic"])
def test_infeasible_linear_pair(method):
    sp = _single_row(0.7, 1e-3, 5.0)
    sp.lin_rows = [LinRow(np.array([1.0, -1.0]), "le1"), LinRow(np.array([-1.0, 2.0]), "ge2")]
    with pytest.raises(SubproblemInfeasible):
        solve_convex_subproblem(sp, method=method)


def _start_subproblem(tag, cfg, ch, req):
    b = bundle_for(ch, req, tag, cfg.noise_power)
    p, q = initial_powers(b, cfg)
    p = restore_feasibility(b, cfg, p, q)
    return b, BUILDERS[tag](b, cfg, anchors_at(BUILDERS[tag], b, cfg, p, q)), p, q


def test_scalar_dcst_constraint_count():
    cfg = ScenarioConfig(num_ens=1, num_wap_antennas=1)
    ch, req = instance_with_partial(cfg, 0, {0})
    _, sp, _, _ = _start_subproblem("DCST", cfg, ch, req)
    caps = [r for r in sp.lin_rows if r.label.startswith("cap")]
    assert sp.num_constraints - len(caps) == 5
    assert len(caps) == 2


def test_no_partial_set_is_pure_access(cfg):
    ch, req = instance_with_partial(cfg, 0, set())
    _, sp, _, _ = _start_subproblem("DCST", cfg, ch, req)
    assert sp.n_q == 0
    assert all(r.label.startswith("rate") for r in sp.log_rows)
    assert {a.name for a in sp.aux} == {"y"}


@pytest.mark.parametrize("tag", ["DCST", "CCJT_ZF", "CCJT_MMSE"])
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_initial_anchor_point_is_feasible(tag, seed, cfg):
    ch, req = instance_with_partial(cfg, seed, {0, 2})
    b, sp, p, q = _start_subproblem(tag, cfg, ch, req)
    pq = np.concatenate([p, q])
    v = np.concatenate([pq, sp.aux_lower_bounds(pq)])
    t0 = delivery_time(access_rates(b, p, cfg.bandwidth), cfg.file_size)
    log_slack, lin_slack = sp.evaluate(v, t0 * (1 + 1e-9))
    assert np.all(log_slack >= -1e-9)
    assert np.all(lin_slack >= -1e-9 * cfg.p_bs_max)


def test_zf_eta_zero_decouples_buffer_rows():
    cfg = ScenarioConfig()
    ch, req = instance_with_partial(cfg, 0, {1, 3})
    ch = type(ch)(ch.backhaul, ch.access, ch.inter_en, 0.0)
    _, sp, _, _ = _start_subproblem("CCJT_ZF", cfg, ch, req)
    for row in sp.log_rows:
        if row.label.startswith("buffer"):
            for _, a in row.terms:
                assert np.all(a[:sp.n_p] == 0)


def test_mmse_builder_matches_dcst_with_substituted_vectors(cfg):
    ch, req = instance_with_partial(cfg, 4, {0, 3})
    b = bundle_for(ch, req, "CCJT_MMSE", cfg.noise_power)
    swapped = type(b)(**{**b.__dict__, "design_tag": "DCST", "b1": b.e1, "b2": b.e2,
                         "d": np.tile(b.eta * b.beta, (b.num_partial, 1))})
    anchors = {"x": np.array([1.0, 2.0]), "y": np.array([0.5, 0.1, -0.2, 0.3]), "z": np.array([-1.0, 0.0])}
    sm = build_ccjt_mmse_subproblem(b, cfg, anchors)
    sd = build_dcst_subproblem(swapped, cfg, anchors)
    assert len(sm.log_rows) == len(sd.log_rows)
    for rm, rd in zip(sm.log_rows, sd.log_rows):
        assert rm.timed == rd.timed
        np.testing.assert_array_equal(rm.rhs, rd.rhs)
        for (cm, am), (cd, ad) in zip(rm.terms, rd.terms):
            assert cm == cd
            np.testing.assert_array_equal(am, ad)
    for am, ad in zip(sm.aux, sd.aux):
        np.testing.assert_array_equal(am.bound, ad.bound)
    # only the EN budgets differ: pooled versus per EN
    caps_m = [r for r in sm.lin_rows if r.label.startswith("cap-p")]
    caps_d = [r for r in sd.lin_rows if r.label.startswith("cap-p")]
    assert len(caps_m) == 1 and len(caps_d) == 4


def test_eps_infinite_single_solve(cfg):
    ch, req = instance(cfg, 0)
    b = bundle_for(ch, req, "CCJT_MMSE", cfg.noise_power)
    res = run_sca("CCJT_MMSE", b, cfg, ScaOptions(eps=math.inf, n_starts=1))
    assert res.iterations == 1 and len(res.trace) == 1 and res.status == CONVERGED


@pytest.mark.parametrize("tag", ["DCST", "CCJT_ZF", "CCJT_MMSE"])
@pytest.mark.parametrize("seed", range(4))
def test_access_only_matches_bisection_oracle(tag, seed, cfg):
    ch, req = instance_with_partial(cfg, seed, set())
    b = bundle_for(ch, req, tag, cfg.noise_power)
    res = run_sca(tag, b, cfg, ScaOptions(n_starts=3, max_iters=200))
    oracle = solve_hd(ch, req, cfg, tag).t_access
    assert res.t_star <= oracle * (1 + 1e-5)
    assert res.t_star >= oracle * (1 - 1e-6)


def test_symmetric_zf_equal_powers():
    cfg = ScenarioConfig(num_ens=2, num_wap_antennas=2)
    ch, req = instance_with_partial(cfg, 0, set())
    h = np.array([[1.0, 0.2], [0.2, 1.0]], complex) * 3e-3
    ch = type(ch)(ch.backhaul, h, ch.inter_en, ch.eta)
    b = bundle_for(ch, req, "CCJT_ZF", cfg.noise_power)
    res = run_sca("CCJT_ZF", b, cfg, FAST)
    assert math.isclose(res.p_star[0], res.p_star[1], rel_tol=1e-6)
    p = 2 * cfg.p_en_max / b.alpha.sum()
    closed = cfg.file_size / (cfg.bandwidth * math.log2(1 + p / cfg.noise_power))
    assert math.isclose(res.t_star, closed, rel_tol=1e-6)


@pytest.mark.parametrize("tag", ["DCST", "CCJT_ZF", "CCJT_MMSE"])
@pytest.mark.parametrize("seed", range(6))
def test_converged_results_are_feasible_and_monotone(tag, seed, cfg):
    ch, req = instance(cfg, seed)
    b = bundle_for(ch, req, tag, cfg.noise_power)
    res = run_sca(tag, b, cfg, FAST)
    for trace in res.start_traces:
        assert np.all(np.diff(trace) <= 1e-6)
    if res.status == CONVERGED:
        assert res.original_feasible
        assert check_buffer_constraint(b, res.p_star, res.q_star, cfg.bandwidth, tol=1e-6).all()
        assert power_feasible(b, res.p_star, res.q_star, cfg.p_en_max, cfg.p_bs_max)
    t = delivery_time(access_rates(b, res.p_star, cfg.bandwidth), cfg.file_size)
    assert math.isclose(res.t_star, t, rel_tol=1e-6)


@settings(max_examples=15, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(seed=st.integers(0, 100_000), tag=st.sampled_from(["DCST", "CCJT_ZF", "CCJT_MMSE"]),
       cache=st.sampled_from([0.0, 20.0, 50.0]), eta_db=st.sampled_from([-90.0, -70.0, -50.0]))
def test_descent_property(seed, tag, cache, eta_db):
    cfg = ScenarioConfig(cache_size=cache, si_efficiency_mean=10 ** (eta_db / 10))
    ch, req = instance(cfg, seed)
    b = bundle_for(ch, req, tag, cfg.noise_power)
    res = run_sca(tag, b, cfg, ScaOptions(n_starts=2, max_iters=20))
    for trace in res.start_traces:
        assert np.all(np.diff(trace) <= 1e-6)


@pytest.mark.parametrize("method", ["bisection", "conic"])
def test_subsolvers_agree_on_sca_subproblem(method, cfg):
    ch, req = instance_with_partial(cfg, 2, {1})
    _, sp, _, _ = _start_subproblem("CCJT_MMSE", cfg, ch, req)
    ref = solve_convex_subproblem(sp, tol=1e-9, method="barrier")
    other = solve_convex_subproblem(sp, tol=1e-9, method=method)
    assert math.isclose(ref.t, other.t, rel_tol=1e-4)


@pytest.mark.skipif(kernel_backend() != "compiled", reason="compiled kernel not built")
@pytest.mark.parametrize("tag", ["DCST", "CCJT_ZF", "CCJT_MMSE"])
def test_compiled_and_python_kernels_agree(tag, cfg):
    for seed in range(3):
        ch, req = instance(cfg, seed)
        b = bundle_for(ch, req, tag, cfg.noise_power)
        a = run_sca(tag, b, cfg, ScaOptions(n_starts=2, backend="compiled"))
        c = run_sca(tag, b, cfg, ScaOptions(n_starts=2, backend="python"))
        assert math.isclose(a.t_star, c.t_star, rel_tol=1e-8)
        assert a.iterations == c.iterations


def test_small_dcst_against_grid_oracle():
    cfg = ScenarioConfig(num_ens=2, num_wap_antennas=2)
    hits = 0
    for seed in range(5):
        ch, req = instance_with_partial(cfg, seed, {0})
        grid = grid_oracle(ch, req, cfg, "DCST", 50)
        res = run_sca("DCST", bundle_for(ch, req, "DCST", cfg.noise_power), cfg)
        hits += res.t_star <= 1.05 * grid.t_best
    assert hits == 5


def test_restore_feasibility_repairs_buffer(cfg):
    ch, req = instance_with_partial(cfg, 1, {0, 1, 2, 3}, uncached=1.0)
    b = bundle_for(ch, req, "DCST", cfg.noise_power)
    p, q = initial_powers(b, cfg)
    p2 = restore_feasibility(b, cfg, p, q)
    assert check_buffer_constraint(b, p2, q, cfg.bandwidth).all()
    assert np.all(p2 <= p)


@pytest.mark.parametrize("tag", ["DCST", "CCJT_ZF", "CCJT_MMSE"])
def test_tangent_bounds_tight_at_convergence(tag, cfg):
    ch, req = instance_with_partial(cfg, 6, {0, 2})
    b, sp, p, q = _start_subproblem(tag, cfg, ch, req)
    builder = BUILDERS[tag]
    scale = np.concatenate([sp.p_scale, sp.q_scale])
    warm, t_old = np.concatenate([p, q]) / scale, math.inf
    for _ in range(400):
        sol = solve_convex_subproblem(sp, start=warm)
        if abs(sol.t - t_old) <= 1e-10:
            break
        t_old, warm = sol.t, np.concatenate([sol.p, sol.q]) / scale
        sp = builder(b, cfg, sp.anchors_of(sol.aux))
    vh = np.concatenate([sol.p, sol.q, np.zeros(sp.n_aux), [1.0]])
    # tangent upper bound of log at the anchor against the exact log
    gaps = [x - math.log(a.bound @ vh) for a, x in zip(sp.aux, sol.aux)]
    assert min(gaps) >= -1e-9
    assert max(gaps) <= 1e-4


def test_balanced_start_reaches_access_floor():
    # every EN partially cached with a small uncached share: the buffer rows
    # are slack at the optimum, so the access-only max-min time is attained
    cfg = ScenarioConfig(cache_size=80.0)
    ch, req = trial_inputs(cfg, 0, 1, "fractional")
    b = bundle_for(ch, req, "DCST", cfg.noise_power)
    floor = solve_hd(ch, req, cfg, "DCST").t_access
    res = run_sca("DCST", b, cfg, ScaOptions(n_starts=2))
    assert res.t_star == pytest.approx(floor, rel=1e-6)
    assert res.t_star >= floor * (1 - 1e-9)
