"""Command-line front end: ``estimate``, ``bounds``, ``compare`` and ``replay``."""
from __future__ import annotations

import argparse
import csv
import json
import math
import os
import re
import sys
import time

import numpy as np

from . import __version__
from .baseline import active_slope, run_baseline, to_minplus_grid
from .maxplus import EmptyEstimateError, onoff_bounds
from .probing import ProbingConfig, run_estimation, write_manifest
from .sim import NetworkScenario, ScenarioError

EXIT_EMPTY = 1
EXIT_INPUT = 2

_RATE = re.compile(r"^\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*([a-zA-Z/]*)\s*$")
_UNITS = {"": None, "pps": None, "pkt/s": None, "bps": 1.0, "kbps": 1e3, "mbps": 1e6, "gbps": 1e9}


class InputError(Exception):
    pass


def parse_rate(text: str, packet_size_bytes: int) -> float:
    """Rate in packets per second from ``"40"``, ``"40pps"`` or ``"4Mbps"``."""
    m = _RATE.match(str(text))
    if not m or m.group(2).lower() not in _UNITS:
        raise InputError(f"cannot parse rate {text!r}; use e.g. 40, 40pps or 4Mbps")
    value = float(m.group(1))
    bits = _UNITS[m.group(2).lower()]
    return value if bits is None else value * bits / (8.0 * packet_size_bytes)


def load_scenario(path: str) -> NetworkScenario:
    if not os.path.exists(path):
        raise InputError(f"scenario file not found: {path}")
    with open(path) as fh:
        text = fh.read()
    try:
        return NetworkScenario.from_json(text)
    except ScenarioError as exc:
        raise InputError(f"{path}: {exc}") from exc


def _config(args, scenario: NetworkScenario) -> ProbingConfig:
    eps_w = args.eps if args.eps_w is None else args.eps_w
    return ProbingConfig(
        r_acc=parse_rate(args.racc, scenario.packet_size_bytes),
        eps_w=eps_w,
        loss_eps=args.eps,
        iterations=args.iterations,
        mode=args.mode.replace("-", "_"),
        train_length=args.train,
        n_max=args.n_max,
        seed=args.seed,
        jobs=args.jobs,
    )


def _write_curve_csv(path: str, curve, grid) -> None:
    with open(path, "w", newline="") as fh:
        curve.write_csv(fh, grid)


def cmd_estimate(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    config = _config(args, scenario)
    os.makedirs(args.out, exist_ok=True)
    try:
        res = run_estimation(scenario, config)
    except EmptyEstimateError as exc:
        print(f"error: empty estimate: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    outputs = []
    doc = res.curve.to_dict()
    low, high = res.bound_curves()
    doc["ci_curves"] = {"low": low.to_dict() if low else None, "high": high.to_dict() if high else None}
    doc["units"] = {"rate": "packets/second", "intercept_s": "seconds", "n": "packets"}
    path = os.path.join(args.out, "curve.json")
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    outputs.append(path)
    n_hi = res.curve.domain_limit if res.curve.domain_limit is not None else max(
        s.train_length_used for s in res.sample_sets.values()) - 1
    path = os.path.join(args.out, "curve.csv")
    _write_curve_csv(path, res.curve, range(n_hi + 1))
    outputs.append(path)
    outputs += res.write_delay_csvs(args.out)
    man = res.manifest(" ".join(args.argv), outputs)
    man["argv"] = args.argv
    man["seed_set"] = [config.seed if config.seed is not None else scenario.seed]
    write_manifest(os.path.join(args.out, "manifest.json"), man)
    print(f"limiting rate {res.curve.limiting_rate:g} pkt/s, {len(res.selection.rates)} rates, "
          f"epsilon_total {res.curve.epsilon_total:g}")
    return 0


def cmd_bounds(args) -> int:
    if not 0 < args.p <= 1:
        raise InputError("--p must lie in (0, 1]")
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "bounds.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n_packets", "lower_slots", "upper_slots"])
        for n in range(args.n_max + 1):
            lo, hi = onoff_bounds(args.p, args.eps, n)
            w.writerow([n, lo, hi])
    write_manifest(os.path.join(args.out, "manifest.json"), {
        "tool": "stochbw", "version": __version__, "command": " ".join(args.argv),
        "argv": args.argv, "outputs": [path]})
    return 0


def cmd_compare(args) -> int:
    t0 = time.perf_counter()
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = scenario.with_seed(args.seed)
    config = _config(args, scenario)
    os.makedirs(args.out, exist_ok=True)
    try:
        res = run_estimation(scenario, config)
    except EmptyEstimateError as exc:
        print(f"error: empty estimate: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    size = scenario.packet_size_bytes
    step = parse_rate(args.step, size) if args.step else 0.16 * scenario.capacity_pps
    max_rate = parse_rate(args.max_rate, size) if args.max_rate else 1.2 * scenario.capacity_pps
    base = run_baseline(scenario, step, max_rate, args.baseline_train, args.baseline_iterations,
                        args.seed)
    curve = res.curve
    stop = curve.evaluate(curve.domain_limit) if curve.domain_limit is not None else (
        args.t_max if args.t_max else curve.evaluate(args.baseline_train - 1))
    grid = np.linspace(0.0, stop * (1 - 1e-9), args.grid)
    lo_c, hi_c = res.bound_curves()
    stoch = to_minplus_grid(curve, grid)
    s_lo = to_minplus_grid(hi_c, grid) if hi_c else np.full_like(grid, np.nan)
    s_hi = to_minplus_grid(lo_c, grid) if lo_c else np.full_like(grid, np.nan)
    band = base.band(grid)
    path = os.path.join(args.out, "compare.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t_s", "stochastic_packets", "stochastic_ci_low_packets",
                    "stochastic_ci_high_packets", "deterministic_mean_packets",
                    "deterministic_ci_low_packets", "deterministic_ci_high_packets",
                    "deterministic_variance_packets2"])
        for row in zip(grid, stoch, s_lo, s_hi, band.mean, band.low, band.high, band.variance):
            w.writerow([repr(float(v)) for v in row])
    slopes = base.slopes_at(float(grid[-1]))
    abw = scenario.ground_truth_abw
    summary = {
        "ground_truth_abw_pps": abw,
        "stochastic_limiting_rate_pps": curve.limiting_rate,
        "deterministic_median_slope_pps": float(np.median(slopes)),
        "deterministic_overestimates": bool(np.median(slopes) > abw),
        "deterministic_variance_at_tmax": float(band.variance[-1]),
        "stochastic_ci_width_at_tmax": float(s_hi[-1] - s_lo[-1]),
    }
    w = summary["stochastic_ci_width_at_tmax"]
    summary["variance_to_ci_width"] = summary["deterministic_variance_at_tmax"] / w if w > 0 else math.inf
    write_manifest(os.path.join(args.out, "manifest.json"), {
        "tool": "stochbw", "version": __version__, "command": " ".join(args.argv),
        "argv": args.argv, "scenario": scenario.to_dict(), "outputs": [path],
        "summary": summary, "wall_clock_s": time.perf_counter() - t0})
    for k, v in summary.items():
        print(f"{k}: {v}")
    return 0


def cmd_replay(args) -> int:
    if not os.path.exists(args.manifest):
        raise InputError(f"manifest not found: {args.manifest}")
    with open(args.manifest) as fh:
        try:
            argv = json.load(fh)["argv"]
        except (json.JSONDecodeError, KeyError) as exc:
            raise InputError(f"{args.manifest}: not a replayable manifest ({exc})") from exc
    if "--out" in argv:
        argv = list(argv)
        argv[argv.index("--out") + 1] = args.out
    else:
        argv = list(argv) + ["--out", args.out]
    return main(argv)


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    p.add_argument("--eps", type=float, default=0.05,
                   help="violation probability; also the loss-ratio threshold")
    p.add_argument("--eps-w", type=float, default=None,
                   help="per-rate percentile violation probability (default: --eps)")
    p.add_argument("--racc", default="40", help="rate resolution, e.g. 40, 40pps or 4Mbps")
    p.add_argument("--iterations", type=int, default=251, help="trains per rate")
    p.add_argument("--train", type=int, default=200, help="train length in fixed-short mode")
    p.add_argument("--n-max", type=int, default=2**16, help="longest adaptive train")
    p.add_argument("--mode", choices=("adaptive", "fixed-short"), default="adaptive")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.add_argument("--out", default=".", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="stochbw", description=__doc__)
    ap.add_argument("--version", action="version", version=f"stochbw {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="estimate an epsilon-effective service curve")
    _common(p)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("bounds", help="negative-binomial bounds of the On-Off server")
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--n-max", type=int, default=100)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("compare", help="stochastic estimate against the deterministic baseline")
    _common(p)
    p.add_argument("--step", default=None, help="baseline rate step (default 0.16 C)")
    p.add_argument("--max-rate", default=None, help="baseline maximum rate (default 1.2 C)")
    p.add_argument("--baseline-train", type=int, default=800)
    p.add_argument("--baseline-iterations", type=int, default=200)
    p.add_argument("--grid", type=int, default=100, help="number of t-grid points")
    p.add_argument("--t-max", type=float, default=None, help="end of the t-grid in seconds")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_replay)
    return ap


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    args = build_parser().parse_args(argv)
    args.argv = argv
    try:
        return args.func(args)
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
