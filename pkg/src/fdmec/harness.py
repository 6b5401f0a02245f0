"""Monte Carlo experiments: paired trials, sweeps, summaries and result files.

A trial is one (channel realization, request draw) pair.  Every design of
every mode in a trial sees the same channel and the same demands, and the
same trial seeds are reused at every sweep point, so differences between
cells are paired.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .baseline import solve_hd
from .caching import draw_requests, make_policy
from .model import ChannelRealization, RequestOutcome, ScenarioConfig, db_to_linear, generate_channels
from .precoding import NearSingular, bundle_for
from .rates import effective_delivery_time
from .sca import ScaInfeasible, ScaOptions, run_sca
from .sca.loop import INFEASIBLE, NUMERICAL_FAILURE

__all__ = [
    "CSV_COLUMNS",
    "DESIGN_TAGS",
    "ExperimentSpec",
    "TrialRecord",
    "CellStats",
    "SweepSummary",
    "run_experiment",
    "static_power_reference",
    "summarize",
    "emit_results",
    "read_records",
    "trial_inputs",
    "worker_count",
]

CSV_COLUMNS = ("trial_id", "seed", "mode", "design", "placement", "sweep_axis", "sweep_value",
               "t_seconds", "iterations", "status", "wall_time_s")

# (mode, design) -> coefficient-bundle tag
DESIGN_TAGS = {
    ("DCST", "DIST"): "DCST",
    ("CCJT", "ZF"): "CCJT_ZF",
    ("CCJT", "MMSE"): "CCJT_MMSE",
    ("CCJT", "OPT"): "CCJT_OPT",
}
AXES = ("cache", "pbs", "eta")
SOLVED = "Solved"
WORKERS_ENV = "FDMEC_WORKERS"


@dataclass(frozen=True)
class TrialRecord:
    trial_id: int
    seed: int
    mode: str
    design: str
    placement: str
    sweep_axis: str
    sweep_value: float
    t_seconds: float
    iterations: int
    status: str
    wall_time_s: float = 0.0


@dataclass(frozen=True)
class ExperimentSpec:
    """What to run.

    ``designs`` lists the CCJT precoders (``ZF``, ``MMSE``, ``OPT``); DCST
    has the single design ``DIST``.  ``axis`` is ``None`` for a single
    point or one of ``cache`` (M in files), ``pbs`` (watts) or ``eta``
    (dB).  A cache sweep always includes M = 0 so that caching gains are
    defined.
    """

    axis: str | None = None
    values: tuple = ()
    modes: tuple = ("DCST", "CCJT")
    designs: tuple = ("ZF", "MMSE")
    placement: str = "most-popular"
    include_hd: bool = True
    include_static: bool = True
    scale: float = 0.1
    realizations: int = 200
    draws: int = 50
    sca: ScaOptions = field(default_factory=ScaOptions)

    def __post_init__(self):
        if self.axis is not None and self.axis not in AXES:
            raise ValueError(f"unknown sweep axis {self.axis!r}; expected one of {AXES}")
        if self.axis is not None and not self.values:
            raise ValueError("a sweep needs at least one value")
        for m in self.modes:
            if m not in ("DCST", "CCJT"):
                raise ValueError(f"unknown mode {m!r}")
        for d in self.designs:
            if ("CCJT", d) not in DESIGN_TAGS:
                raise ValueError(f"unknown CCJT design {d!r}")

    @property
    def num_realizations(self) -> int:
        return max(1, int(round(self.realizations * self.scale)))

    @property
    def num_trials(self) -> int:
        return self.num_realizations * self.draws

    def points(self) -> list:
        if self.axis is None:
            return [None]
        vals = [float(v) for v in self.values]
        if self.axis == "cache" and 0.0 not in vals:
            vals = [0.0] + vals
        return sorted(set(vals)) if self.axis == "cache" else vals


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def apply_axis(cfg: ScenarioConfig, axis: str | None, value) -> ScenarioConfig:
    if axis is None:
        return cfg
    if axis == "cache":
        return cfg.replace(cache_size=float(value))
    if axis == "pbs":
        return cfg.replace(p_bs_max=float(value))
    return cfg.replace(si_efficiency_mean=db_to_linear(float(value)))


def trial_inputs(cfg: ScenarioConfig, trial_id: int, draws: int, placement: str):
    """Channel and requests of one trial, reproducible from the config seed.

    The channel depends only on ``(rng_seed, realization)`` and the demands
    only on ``(rng_seed, realization, draw)``, never on the sweep value.
    """
    real, draw = divmod(trial_id, draws)
    ch = generate_channels(cfg, np.random.default_rng([cfg.rng_seed, real]))
    req = draw_requests(cfg, make_policy(cfg, placement),
                        np.random.default_rng([cfg.rng_seed, real, draw + 1]))
    return ch, req


def static_power_reference(ch: ChannelRealization, req: RequestOutcome, cfg: ScenarioConfig,
                           design_tag: str) -> float:
    """Delivery time with all budgets spent in equal shares, no optimization.

    The WAP uses equal ``q_k`` with ``lambda . q = P_BS``; the ENs transmit
    at ``P_EN`` (DCST) or at the equal ``p_k`` that meets the pooled budget.
    When a buffer constraint fails at that point the user is served at the
    backhaul-limited rate, as in :func:`fdmec.rates.effective_delivery_time`.
    """
    if design_tag == "CCJT_OPT":
        raise ValueError("the static reference is defined for linear designs only")
    bundle = bundle_for(ch, req, design_tag, cfg.noise_power)
    k = bundle.num_ens
    if design_tag == "DCST":
        p = np.full(k, cfg.p_en_max)
    else:
        p = np.full(k, k * cfg.p_en_max / bundle.alpha.sum())
    lam = bundle.lam[:-1]
    q = np.full(len(lam), cfg.p_bs_max / lam.sum()) if len(lam) else np.zeros(0)
    return effective_delivery_time(bundle, p, q, cfg.bandwidth, cfg.file_size)


def _cells(spec: ExperimentSpec):
    for mode in spec.modes:
        designs = ("DIST",) if mode == "DCST" else tuple(spec.designs)
        for d in designs:
            yield mode, d, DESIGN_TAGS[(mode, d)], "FD"
            if spec.include_hd:
                yield mode, f"HD-{d}", DESIGN_TAGS[(mode, d)], "HD"
            if spec.include_static and d != "OPT":
                yield mode, f"STATIC-{d}", DESIGN_TAGS[(mode, d)], "STATIC"


def _solve_cell(ch, req, cfg, tag, kind, opts, cache):
    if kind == "HD":
        return solve_hd(ch, req, cfg, tag).t_total, 0, SOLVED
    if kind == "STATIC":
        return static_power_reference(ch, req, cfg, tag), 0, SOLVED
    if tag == "CCJT_OPT":
        from .sdr import SdrOptions, solve_ccjt_opt
        _, res = solve_ccjt_opt(ch, req, cfg, SdrOptions(sca=opts), mmse=cache.get("CCJT_MMSE"))
    else:
        res = run_sca(tag, bundle_for(ch, req, tag, cfg.noise_power), cfg, opts)
        cache[tag] = res
    return res.t_star, res.iterations, res.status


def _run_trial(args) -> list[TrialRecord]:
    cfg, spec, axis_value, trial_id = args
    ch, req = trial_inputs(cfg, trial_id, spec.draws, spec.placement)
    out, cache = [], {}
    for mode, design, tag, kind in _cells(spec):
        start = time.perf_counter()
        try:
            t, iters, status = _solve_cell(ch, req, cfg, tag, kind, spec.sca, cache)
        except ScaInfeasible:
            t, iters, status = math.inf, 0, INFEASIBLE
        except (NearSingular, np.linalg.LinAlgError, FloatingPointError):
            t, iters, status = math.inf, 0, NUMERICAL_FAILURE
        out.append(TrialRecord(trial_id, cfg.rng_seed, mode, design, spec.placement,
                               spec.axis or "", float("nan") if axis_value is None else axis_value,
                               float(t), int(iters), status, time.perf_counter() - start))
    return out


def run_experiment(cfg: ScenarioConfig, spec: ExperimentSpec, workers: int | None = None):
    """Run every sweep point of ``spec``; returns ``(records, summary)``.

    Failed trials are recorded with their status and ``t = inf``; they never
    abort the sweep.  ``workers`` defaults to the ``FDMEC_WORKERS``
    environment variable (1 if unset).
    """
    workers = worker_count() if workers is None else max(1, int(workers))
    jobs = [(apply_axis(cfg, spec.axis, v), spec, v, tid)
            for v in spec.points() for tid in range(spec.num_trials)]
    if workers == 1:
        chunks = map(_run_trial, jobs)
        records = [r for chunk in chunks for r in chunk]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = [r for chunk in pool.map(_run_trial, jobs, chunksize=8) for r in chunk]
    return records, summarize(records)


# summaries -----------------------------------------------------------------

@dataclass
class CellStats:
    mean: float
    median: float
    n: int
    n_inf: int


@dataclass
class SweepSummary:
    """Per-cell statistics keyed by ``(sweep_value, mode, design)``.

    ``acg``/``rcg`` map the same keys (cache sweeps only, M > 0) to the
    absolute and relative caching gains against M = 0 on paired trials.
    """

    axis: str
    values: list
    cells: dict = field(default_factory=dict)
    acg: dict = field(default_factory=dict)
    rcg: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        def key(k):
            v, mode, design = k
            return f"{self.axis or 'point'}={_fmt(v)}|{mode}|{design}"

        return {
            "axis": self.axis,
            "values": [_fmt(v) for v in self.values],
            "cells": {key(k): {**asdict(s), "mean": _fmt(s.mean), "median": _fmt(s.median)}
                      for k, s in self.cells.items()},
            "acg": {key(k): _fmt(v) for k, v in self.acg.items()},
            "rcg": {key(k): _fmt(v) for k, v in self.rcg.items()},
        }


def _fmt(x):
    if isinstance(x, float) and (math.isinf(x) or math.isnan(x)):
        return repr(x)
    return x


def _value_key(v: float):
    return None if isinstance(v, float) and math.isnan(v) else v


def summarize(records: Iterable[TrialRecord]) -> SweepSummary:
    """Aggregate records; means skip infinite times, medians keep them."""
    records = list(records)
    axis = records[0].sweep_axis if records else ""
    groups: dict = {}
    for r in records:
        groups.setdefault((_value_key(r.sweep_value), r.mode, r.design), {})[r.trial_id] = r.t_seconds
    cells = {}
    for key, ts in groups.items():
        arr = np.array(list(ts.values()), dtype=float)
        finite = arr[np.isfinite(arr)]
        cells[key] = CellStats(float(finite.mean()) if finite.size else math.inf,
                               float(np.median(arr)), int(arr.size), int(arr.size - finite.size))
    values = sorted({k[0] for k in groups if k[0] is not None})
    summary = SweepSummary(axis, values, cells)
    if axis == "cache" and 0.0 in values:
        for (v, mode, design), ts in groups.items():
            ref = groups.get((0.0, mode, design))
            if v == 0.0 or ref is None:
                continue
            common = [i for i in ts if i in ref and math.isfinite(ts[i]) and math.isfinite(ref[i])]
            if not common:
                continue
            t_c = float(np.mean([ts[i] for i in common]))
            t_0 = float(np.mean([ref[i] for i in common]))
            summary.acg[(v, mode, design)] = t_0 - t_c
            summary.rcg[(v, mode, design)] = 1.0 - t_c / t_0
    return summary


# persistence ---------------------------------------------------------------

def _cell_text(name: str, value, include_timing: bool) -> str:
    if name == "wall_time_s" and not include_timing:
        return "0"
    if isinstance(value, float):
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


def emit_results(records: Sequence[TrialRecord], summary: SweepSummary, out_dir,
                 stem: str = "results", include_timing: bool = False) -> dict:
    """Write the trial CSV, the summary JSON and the long-format curve CSV.

    Wall times are written as ``0`` unless ``include_timing`` is set, so
    that equal inputs give byte-identical files.  Returns the written paths.
    """
    out = Path(out_dir)
    paths = {"trials": out / f"{stem}_trials.csv", "summary": out / f"{stem}_summary.json",
             "curves": out / f"{stem}_curves.csv"}
    try:
        out.mkdir(parents=True, exist_ok=True)
        with open(paths["trials"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_COLUMNS)
            for r in records:
                w.writerow([_cell_text(c, getattr(r, c), include_timing) for c in CSV_COLUMNS])
        with open(paths["summary"], "w") as fh:
            json.dump(summary.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        with open(paths["curves"], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("axis", "value", "mode", "design", "metric", "y"))
            for (v, mode, design), s in sorted(summary.cells.items(), key=_sort_key):
                for metric in ("mean", "median"):
                    w.writerow((summary.axis, _cell_text("", v, True) if v is not None else "",
                                mode, design, metric, _cell_text("", getattr(s, metric), True)))
            for name, table in (("acg", summary.acg), ("rcg", summary.rcg)):
                for (v, mode, design), y in sorted(table.items(), key=_sort_key):
                    w.writerow((summary.axis, repr(v), mode, design, name, repr(y)))
    except OSError as exc:
        raise OSError(f"cannot write results under {out}: {exc}") from exc
    return paths


def _sort_key(item):
    (v, mode, design), _ = item
    return (-math.inf if v is None else v, mode, design)


def read_records(path) -> list[TrialRecord]:
    """Parse a trial CSV written by :func:`emit_results`."""
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(TrialRecord(
                trial_id=int(row["trial_id"]), seed=int(row["seed"]), mode=row["mode"],
                design=row["design"], placement=row["placement"], sweep_axis=row["sweep_axis"],
                sweep_value=float(row["sweep_value"]) if row["sweep_value"] else float("nan"),
                t_seconds=float(row["t_seconds"]), iterations=int(row["iterations"]),
                status=row["status"], wall_time_s=float(row["wall_time_s"])))
    return out
