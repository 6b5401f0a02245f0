"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Experiments shared between criteria are computed once per session.  Run
alone with ``pytest tests/test_acceptance.py -v``; expect several minutes
on one core.
"""

import functools
import math
import time

import numpy as np
import pytest

from fdmec.baseline import GridInfeasible, grid_oracle, solve_hd
from fdmec.harness import ExperimentSpec, run_experiment, trial_inputs
from fdmec.model import ScenarioConfig
from fdmec.precoding import bundle_for
from fdmec.rates import check_buffer_constraint, power_feasible
from fdmec.sca import ScaOptions, run_sca
from fdmec.sca.loop import CONVERGED
from fdmec.sdr import SdrOptions, solve_ccjt_opt

pytestmark = pytest.mark.slow

LINEAR = ("DCST", "CCJT_ZF", "CCJT_MMSE")
BASE = ScenarioConfig()  # N = K = 4, M = 0.4F, P_BS = 10 W, P_EN = 5 W, eta = -70 dB


@pytest.fixture
def report(capsys):
    def emit(number, ok, detail):
        with capsys.disabled():
            print(f"\nCRITERION {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
    return emit


def _verified(bundle, cfg, p, q):
    return (bool(np.all(check_buffer_constraint(bundle, p, q, cfg.bandwidth, tol=1e-6)))
            and power_feasible(bundle, p, q, cfg.p_en_max, cfg.p_bs_max))


@functools.lru_cache(maxsize=None)
def descent_runs(n=500):
    """Full SCA on n random instances for every linear design."""
    out = []
    for tid in range(n):
        ch, req = trial_inputs(BASE, tid, 1, "most-popular")
        for tag in LINEAR:
            b = bundle_for(ch, req, tag, BASE.noise_power)
            start = time.perf_counter()
            res = run_sca(tag, b, BASE)
            wall = time.perf_counter() - start
            out.append({"tag": tag, "traces": res.start_traces, "status": res.status,
                        "verified": _verified(b, BASE, res.p_star, res.q_star), "wall": wall})
    return out


@functools.lru_cache(maxsize=None)
def design_runs(n=100):
    """ZF, MMSE and the relaxed optimal design on the same n trials."""
    out = []
    for tid in range(n):
        ch, req = trial_inputs(BASE, tid, 10, "most-popular")
        row = {}
        for tag in ("CCJT_ZF", "CCJT_MMSE"):
            b = bundle_for(ch, req, tag, BASE.noise_power)
            start = time.perf_counter()
            res = run_sca(tag, b, BASE)
            row[tag] = (res, time.perf_counter() - start)
        start = time.perf_counter()
        _, res = solve_ccjt_opt(ch, req, BASE, SdrOptions(), mmse=row["CCJT_MMSE"][0])
        # the MMSE solve is reused, so it is added to the cost of the joint design
        row["CCJT_OPT"] = (res, time.perf_counter() - start + row["CCJT_MMSE"][1])
        ob = bundle_for(ch, req, "CCJT_OPT", BASE.noise_power)
        row["opt_verified"] = _verified(ob, BASE, res.p_star, res.q_star)
        out.append(row)
    return out


@functools.lru_cache(maxsize=None)
def experiment(cfg, spec):
    return run_experiment(cfg, spec)


def _times(records, design, value=None, mode=None):
    out = {}
    for r in records:
        if r.design != design or (mode and r.mode != mode):
            continue
        if value is not None and r.sweep_value != value:
            continue
        out[r.trial_id] = r.t_seconds
    return out


def _paired_means(a, b):
    ids = [i for i in a if i in b and math.isfinite(a[i]) and math.isfinite(b[i])]
    return float(np.mean([a[i] for i in ids])), float(np.mean([b[i] for i in ids])), len(ids)


def test_criterion_01_monotone_descent(report):
    start = time.perf_counter()
    runs = descent_runs()
    elapsed = time.perf_counter() - start
    worst, n_traces = -math.inf, 0
    for r in runs:
        for trace in r["traces"]:
            n_traces += 1
            if len(trace) > 1:
                worst = max(worst, float(np.max(np.diff(trace))))
    ok = worst <= 1e-6 and elapsed < 300
    report(1, ok, f"{len(runs) // 3} instances x 3 designs, {n_traces} traces, "
                  f"largest increase {worst:.3g} s, {elapsed:.0f} s")
    assert ok


def test_criterion_02_original_feasibility(report):
    runs = descent_runs()
    conv = [r for r in runs if r["status"] == CONVERGED]
    bad = sum(not r["verified"] for r in conv)
    opt = [row for row in design_runs() if row["CCJT_OPT"][0].status == CONVERGED]
    bad_opt = sum(not row["opt_verified"] for row in opt)
    ok = bad == 0 and bad_opt == 0
    report(2, ok, f"{len(conv)} converged SCA results ({bad} violate), "
                  f"{len(opt)} converged SDR results ({bad_opt} violate)")
    assert ok


def test_criterion_03_grid_oracle(report):
    cfg = ScenarioConfig(num_ens=2, num_wap_antennas=2)
    start = time.perf_counter()
    instances, tid = [], 0
    while len(instances) < 30:
        ch, req = trial_inputs(cfg, tid, 1, "most-popular")
        tid += 1
        if req.num_partial == 1:
            instances.append((ch, req))
    lines, ok = [], True
    for tag in LINEAR:
        hits, n = 0, 0
        for ch, req in instances:
            try:
                grid = grid_oracle(ch, req, cfg, tag, 50)
            except GridInfeasible:
                continue
            n += 1
            t = run_sca(tag, bundle_for(ch, req, tag, cfg.noise_power), cfg).t_star
            # dropping the buffer constraints leaves the access-only max-min problem
            floor = solve_hd(ch, req, cfg, tag).t_access
            hits += floor * (1 - 1e-6) <= t <= 1.05 * grid.t_best
        ok &= n == len(instances) and hits >= 0.9 * n
        lines.append(f"{tag} {hits}/{n}")
    elapsed = time.perf_counter() - start
    ok &= elapsed < 600
    report(3, ok, f"within 5% of the grid and above the relaxation floor: {', '.join(lines)}; "
                  f"{elapsed:.0f} s")
    assert ok


def _main_spec(**kw):
    base = dict(modes=("DCST", "CCJT"), designs=("MMSE",), include_static=False,
                realizations=20, draws=50, scale=1.0)
    base.update(kw)
    return ExperimentSpec(**base)


def test_criterion_04_ccjt_vs_dcst(report):
    start = time.perf_counter()
    records, _ = experiment(BASE, _main_spec())
    elapsed = time.perf_counter() - start
    mmse, dcst, n = _paired_means(_times(records, "MMSE"), _times(records, "DIST"))
    red = 1 - mmse / dcst
    ok = 0.70 <= red <= 0.92 and n >= 1000 and elapsed < 1800
    report(4, ok, f"reduction {100 * red:.1f} % (target 70-92 %), CCJT-MMSE {mmse:.3f} s vs "
                  f"DCST {dcst:.3f} s over {n} paired trials, {elapsed:.0f} s")
    assert ok


def test_criterion_05_design_ordering(report):
    rows = design_runs()
    t = {tag: np.array([row[tag][0].t_star for row in rows])
         for tag in ("CCJT_ZF", "CCJT_MMSE", "CCJT_OPT")}
    med = {k: float(np.median(v)) for k, v in t.items()}
    ok = (med["CCJT_OPT"] <= med["CCJT_MMSE"] <= med["CCJT_ZF"]
          and med["CCJT_MMSE"] - med["CCJT_OPT"] <= med["CCJT_ZF"] - med["CCJT_OPT"])
    report(5, ok, f"medians over {len(rows)} trials: OPT {med['CCJT_OPT']:.6f} s, "
                  f"MMSE {med['CCJT_MMSE']:.6f} s, ZF {med['CCJT_ZF']:.6f} s")
    assert ok


def test_criterion_06_relative_caching_gain(report):
    cfg = BASE.replace(p_bs_max=3.16)
    spec = _main_spec(axis="cache", values=(50.0,), include_hd=False)
    _, summary = experiment(cfg, spec)
    ccjt = summary.rcg[(50.0, "CCJT", "MMSE")]
    dcst = summary.rcg[(50.0, "DCST", "DIST")]
    n = summary.cells[(50.0, "CCJT", "MMSE")].n
    ok = 0.40 <= ccjt <= 0.70 and 0.03 <= dcst <= 0.20 and n >= 1000
    report(6, ok, f"RCG CCJT {100 * ccjt:.1f} % (target 40-70 %), DCST {100 * dcst:.1f} % "
                  f"(target 3-20 %) over {n} paired trials")
    assert ok


def test_criterion_07_full_vs_half_duplex(report):
    cfg = BASE.replace(p_bs_max=5.0)
    records, _ = experiment(cfg, _main_spec(modes=("CCJT",)))
    fd, hd, n = _paired_means(_times(records, "MMSE"), _times(records, "HD-MMSE"))
    red = 1 - fd / hd
    ok = fd < hd and 0.10 <= red <= 0.40
    report(7, ok, f"FD {fd:.4f} s vs HD {hd:.4f} s, reduction {100 * red:.1f} % "
                  f"(target 10-40 %) over {n} trials")
    assert ok


def test_criterion_08_si_crossover(report):
    spec = _main_spec(modes=("CCJT",), axis="eta", values=(-90.0, -70.0, -50.0, -30.0),
                      realizations=10)
    records, _ = experiment(BASE, spec)
    parts, means = [], {}
    for v in spec.values:
        fd, hd, n = _paired_means(_times(records, "MMSE", v), _times(records, "HD-MMSE", v))
        means[v] = (fd, hd, n)
        parts.append(f"{v:g} dB FD {fd:.3g} / HD {hd:.3g} (n={n})")
    ok = (means[-90.0][0] < means[-90.0][1] and means[-30.0][1] < means[-30.0][0]
          and all(m[2] >= 500 for m in means.values()))
    report(8, ok, "; ".join(parts))
    assert ok


def _placement_records(placement):
    spec = _main_spec(axis="cache", values=(20.0, 40.0, 60.0, 80.0), placement=placement,
                      include_hd=False, include_static=placement == "most-popular",
                      realizations=4)
    return experiment(BASE, spec)[0]


def test_criterion_09_placement(report):
    pop, frac = _placement_records("most-popular"), _placement_records("fractional")
    ok, parts = True, []
    for mode, design in (("DCST", "DIST"), ("CCJT", "MMSE")):
        for m in (20.0, 40.0, 60.0, 80.0):
            a, b, n = _paired_means(_times(pop, design, m, mode), _times(frac, design, m, mode))
            ok &= a <= b
            parts.append(f"{mode} M={m:g}: {a:.4g} vs {b:.4g}")
    report(9, ok, "most-popular vs fractional mean t: " + "; ".join(parts))
    assert ok


def test_criterion_10_static_gap(report):
    records = _placement_records("most-popular")
    viol, total, parts, ok = 0, 0, [], True
    for mode, design in (("DCST", "DIST"), ("CCJT", "MMSE")):
        gaps = {}
        for m in (20.0, 40.0, 60.0, 80.0):
            opt = _times(records, design, m, mode)
            static = _times(records, "STATIC-" + design, m, mode)
            for i, t in opt.items():
                total += 1
                viol += not t <= static[i] * (1 + 1e-9)
            a, b, _ = _paired_means(static, opt)
            gaps[m] = a - b
        ok &= gaps[20.0] > gaps[80.0]
        parts.append(f"{mode} mean gap {gaps[20.0]:.3g} s at M=20 vs {gaps[80.0]:.3g} s at M=80")
    ok &= viol == 0
    report(10, ok, f"{viol}/{total} trials worse than static; " + "; ".join(parts))
    assert ok


def test_criterion_11_runtime(report):
    lin = [r["wall"] for r in descent_runs() if r["tag"] != "DCST"]
    opt = [row["CCJT_OPT"][1] for row in design_runs()]
    ok = max(lin) < 1.5 and max(opt) < 15.0
    report(11, ok, f"ZF/MMSE solve max {max(lin):.3f} s (median {np.median(lin):.3f} s), "
                   f"OPT max {max(opt):.3f} s (median {np.median(opt):.3f} s)")
    assert ok
