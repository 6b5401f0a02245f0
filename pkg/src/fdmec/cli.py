"""Command line entry point (``fdmec`` / ``python3 -m fdmec``)."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from .baseline import GridInfeasible, grid_oracle, solve_hd
from .harness import (DESIGN_TAGS, ExperimentSpec, emit_results, run_experiment,
                      trial_inputs)
from .model import ConfigError, ScenarioConfig, load_config
from .precoding import bundle_for
from .sca import ScaInfeasible, ScaOptions, run_sca


def _designs(text: str) -> tuple:
    out = tuple(d.strip().upper() for d in text.split(",") if d.strip())
    for d in out:
        if ("CCJT", d) not in DESIGN_TAGS:
            raise argparse.ArgumentTypeError(f"unknown design {d!r}; use zf, mmse, opt")
    return out


def _modes(text: str) -> tuple:
    out = tuple(m.strip().upper() for m in text.split(",") if m.strip())
    for m in out:
        if m not in ("DCST", "CCJT"):
            raise argparse.ArgumentTypeError(f"unknown mode {m!r}")
    return out


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="scenario JSON (defaults otherwise)")
    p.add_argument("--seed", type=int, help="override the config rng_seed")
    p.add_argument("--placement", choices=("most-popular", "fractional"), default="most-popular")
    p.add_argument("--eps", type=float, default=1e-3, help="SCA stopping threshold (s)")
    p.add_argument("--max-iters", type=int, default=50)
    p.add_argument("--starts", type=int, default=10)
    p.add_argument("--subsolver", choices=("barrier", "bisection", "conic"), default="barrier")


def _experiment_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--modes", type=_modes, default=("DCST", "CCJT"))
    p.add_argument("--designs", type=_designs, default=("ZF", "MMSE"),
                   help="comma-separated CCJT designs among zf, mmse, opt")
    p.add_argument("--scale", type=float, default=0.1,
                   help="fraction of 200 channel realizations (50 requests each)")
    p.add_argument("--draws", type=int, default=50, help="request draws per realization")
    p.add_argument("--no-hd", action="store_true")
    p.add_argument("--no-static", action="store_true")
    p.add_argument("--timing", action="store_true", help="write wall times to the CSV")
    p.add_argument("--out", type=Path, default=Path("results"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fdmec", description="Delivery-time optimization for full-duplex edge caching.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="Monte Carlo run at a single configuration")
    _common(run)
    _experiment_args(run)

    sweep = sub.add_parser("sweep", help="sweep cache size, WAP power or SI efficiency")
    _common(sweep)
    _experiment_args(sweep)
    sweep.add_argument("--axis", choices=("cache", "pbs", "eta"), required=True,
                       help="cache: M in files; pbs: watts; eta: dB")
    sweep.add_argument("--values", type=float, nargs="+", required=True)

    oracle = sub.add_parser("oracle", help="compare SCA with the brute-force grid on one instance")
    _common(oracle)
    oracle.add_argument("--mode", choices=("DCST", "CCJT_ZF", "CCJT_MMSE"), default="DCST")
    oracle.add_argument("--grid-n", type=int, default=50)
    oracle.add_argument("--trial", type=int, default=0)

    hd = sub.add_parser("compare-hd", help="full duplex against the half-duplex baseline")
    _common(hd)
    hd.add_argument("--design", choices=("DCST", "CCJT_ZF", "CCJT_MMSE", "CCJT_OPT"),
                    default="CCJT_MMSE")
    hd.add_argument("--trials", type=int, default=20)
    return parser


def _config(args) -> ScenarioConfig:
    cfg = load_config(args.config) if args.config else ScenarioConfig()
    if args.seed is not None:
        cfg = cfg.replace(rng_seed=args.seed)
    return cfg


def _options(args) -> ScaOptions:
    return ScaOptions(eps=args.eps, max_iters=args.max_iters, n_starts=args.starts,
                      subsolver=args.subsolver)


def _print_summary(summary) -> None:
    for (v, mode, design), s in sorted(summary.cells.items(),
                                       key=lambda kv: (kv[0][0] or 0.0, kv[0][1], kv[0][2])):
        label = "" if v is None else f"{summary.axis}={v:g} "
        extra = f" (inf: {s.n_inf})" if s.n_inf else ""
        print(f"{label}{mode:4s} {design:12s} mean {s.mean:10.4f} s  median {s.median:10.4f} s"
              f"  n={s.n}{extra}")
    for (v, mode, design), r in sorted(summary.rcg.items()):
        print(f"M={v:g} {mode:4s} {design:12s} ACG {summary.acg[(v, mode, design)]:.4f} s"
              f"  RCG {100 * r:.1f} %")


def _cmd_experiment(args, axis=None, values=()) -> int:
    cfg = _config(args)
    spec = ExperimentSpec(axis=axis, values=tuple(values), modes=args.modes,
                          designs=args.designs, placement=args.placement,
                          include_hd=not args.no_hd, include_static=not args.no_static,
                          scale=args.scale, draws=args.draws, sca=_options(args))
    records, summary = run_experiment(cfg, spec)
    stem = "run" if axis is None else f"sweep_{axis}"
    paths = emit_results(records, summary, args.out, stem=stem, include_timing=args.timing)
    _print_summary(summary)
    print("wrote " + ", ".join(str(p) for p in paths.values()))
    return 0


def _cmd_oracle(args) -> int:
    cfg = _config(args)
    if cfg.num_ens > 3:
        cfg = cfg.replace(num_ens=2, num_wap_antennas=max(2, min(cfg.num_wap_antennas, 4)))
    ch, req = trial_inputs(cfg, args.trial, 1, args.placement)
    try:
        grid = grid_oracle(ch, req, cfg, args.mode, args.grid_n)
    except GridInfeasible as exc:
        print(f"grid infeasible: {exc}")
        return 1
    res = run_sca(args.mode, bundle_for(ch, req, args.mode, cfg.noise_power), cfg, _options(args))
    gap = res.t_star / grid.t_best - 1.0
    print(json.dumps({"K": cfg.num_ens, "K_C": req.num_partial, "grid_n": args.grid_n,
                      "t_grid": grid.t_best, "t_sca": res.t_star, "relative_gap": gap,
                      "sca_status": res.status}, indent=2))
    return 0


def _cmd_compare_hd(args) -> int:
    cfg = _config(args)
    fd, hd = [], []
    for tid in range(args.trials):
        ch, req = trial_inputs(cfg, tid, 50, args.placement)
        try:
            if args.design == "CCJT_OPT":
                from .sdr import SdrOptions, solve_ccjt_opt
                t = solve_ccjt_opt(ch, req, cfg, SdrOptions(sca=_options(args)))[1].t_star
            else:
                bundle = bundle_for(ch, req, args.design, cfg.noise_power)
                t = run_sca(args.design, bundle, cfg, _options(args)).t_star
        except ScaInfeasible:
            t = math.inf
        fd.append(t)
        hd.append(solve_hd(ch, req, cfg, args.design).t_total)
    fd, hd = np.array(fd), np.array(hd)
    ok = np.isfinite(fd) & np.isfinite(hd)
    print(f"{args.design}: FD mean {fd[ok].mean():.4f} s, HD mean {hd[ok].mean():.4f} s, "
          f"reduction {100 * (1 - fd[ok].mean() / hd[ok].mean()):.1f} % over {ok.sum()} trials")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_experiment(args)
        if args.command == "sweep":
            return _cmd_experiment(args, args.axis, args.values)
        if args.command == "oracle":
            return _cmd_oracle(args)
        return _cmd_compare_hd(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
