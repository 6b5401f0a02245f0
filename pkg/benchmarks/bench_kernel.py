"""Time the compiled barrier kernel against the pure-Python one.

Runs complete SCA solves on random instances at the default scenario with
each backend and reports the median wall time per solve and the largest
difference in the returned delivery times.

    python3 benchmarks/bench_kernel.py --instances 20
"""

import argparse
import statistics
import time

from fdmec.harness import trial_inputs
from fdmec.model import ScenarioConfig
from fdmec.precoding import bundle_for
from fdmec.sca import ScaOptions, kernel_backend, run_sca


def _time(tag, cases, cfg, backend, starts):
    times, values = [], []
    for ch, req in cases:
        bundle = bundle_for(ch, req, tag, cfg.noise_power)
        start = time.perf_counter()
        res = run_sca(tag, bundle, cfg, ScaOptions(n_starts=starts, backend=backend))
        times.append(time.perf_counter() - start)
        values.append(res.t_star)
    return times, values


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=20)
    ap.add_argument("--starts", type=int, default=10)
    ap.add_argument("--designs", default="DCST,CCJT_ZF,CCJT_MMSE")
    args = ap.parse_args(argv)

    if kernel_backend() != "compiled":
        raise SystemExit("compiled kernel not built; run `python3 setup.py build_ext --inplace`")
    cfg = ScenarioConfig()
    cases = [trial_inputs(cfg, i, 50, "most-popular") for i in range(args.instances)]
    print(f"{'design':10s} {'compiled [s]':>13s} {'python [s]':>11s} {'speedup':>8s} {'max |dt| [s]':>13s}")
    for tag in args.designs.split(","):
        tc, vc = _time(tag, cases, cfg, "compiled", args.starts)
        tp, vp = _time(tag, cases, cfg, "python", args.starts)
        mc, mp = statistics.median(tc), statistics.median(tp)
        diff = max(abs(a - b) for a, b in zip(vc, vp))
        print(f"{tag:10s} {mc:13.4f} {mp:11.4f} {mp / mc:8.1f} {diff:13.2e}")


if __name__ == "__main__":
    main()
