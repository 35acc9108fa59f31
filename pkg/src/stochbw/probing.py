"""Probing engine: rate selection, train-length control and curve assembly.

Every train gets its own seed derived from ``(rate, train length, iteration)``,
so results do not depend on execution order or on the number of workers.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import __version__
from .maxplus import EmptyEstimateError, ServiceCurveEstimate, TimestampSeries, f_transform
from .sim import NetworkScenario, ProbeSpec, draw_start_time, run_probe
from .sim.traffic import seed_sequence
from .stats.percentiles import PercentileEstimate, percentile_with_ci
from .stats.tail import InsufficientTailError, DegenerateFitError, pot_estimate
from .stats.unitroot import MIN_LENGTH, ers_statistic

MODES = ("adaptive", "fixed_short")


class RateGuardError(RuntimeError):
    """Binary increase passed the configured maximum rate."""


@dataclass(frozen=True)
class ProbingConfig:
    """Probing parameters; rates in packets per second, delays in seconds.

    ``eps_w`` is the violation probability of each delay percentile. Trains
    whose loss ratio reaches ``loss_eps`` (``eps_w`` when unset) yield an
    infinite delay sample. In ``fixed_short`` mode every train has
    ``train_length`` packets and ``iterations`` must be odd.
    """

    r_acc: float
    eps_w: float = 0.05
    confidence: float = 0.95
    iterations: int = 251
    n_min: int = 100
    n_max: int = 2**16
    mode: str = "adaptive"
    train_length: int = 200
    loss_eps: float | None = None
    use_pot: bool = True
    pot_threshold: float = 0.9
    pot_resamples: int = 200
    max_rate: float | None = None
    seed: int | None = None
    jobs: int = 1

    def __post_init__(self):
        if not (self.r_acc > 0 and math.isfinite(self.r_acc)):
            raise ValueError("r_acc must be positive")
        if not 0 < self.eps_w < 1:
            raise ValueError("eps_w must lie in (0, 1)")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not MIN_LENGTH * 2 <= self.n_min <= self.n_max:
            raise ValueError(f"need {2 * MIN_LENGTH} <= n_min <= n_max")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.mode == "fixed_short":
            if self.iterations % 2 == 0:
                raise ValueError("fixed_short mode needs an odd number of iterations")
            if self.train_length < 2 * MIN_LENGTH:
                raise ValueError(f"train_length must be >= {2 * MIN_LENGTH}")
        if self.jobs < 1:
            raise ValueError("jobs must be >= 1")

    @property
    def loss_threshold(self) -> float:
        return self.eps_w if self.loss_eps is None else self.loss_eps

    @property
    def rate_guard(self) -> float:
        return self.max_rate if self.max_rate is not None else self.r_acc * 2.0**20


@dataclass(frozen=True)
class DelaySampleSet:
    """Last-packet delays of the ``I`` trains sent at one rate.

    ``history`` lists ``(train_length, stationary_share, trend_share)`` for
    every train length tried. ``truncated`` marks that doubling stopped at
    ``n_max`` rather than on a failed trend test.
    """

    rate: float
    samples: np.ndarray
    train_length_used: int
    stationary_share: float
    trend_share: float
    history: tuple = ()
    truncated: bool = False
    feasible: bool = True
    loss_ratio: float = 0.0

    @property
    def count(self) -> int:
        return int(self.samples.shape[0])

    @property
    def finite_share(self) -> float:
        return float(np.mean(np.isfinite(self.samples)))

    def summary(self) -> dict:
        finite = self.samples[np.isfinite(self.samples)]
        return {
            "rate_pps": self.rate,
            "iterations": self.count,
            "train_length": self.train_length_used,
            "stationary_share": self.stationary_share,
            "trend_share": self.trend_share,
            "finite_share": self.finite_share,
            "mean_loss_ratio": self.loss_ratio,
            "feasible": self.feasible,
            "truncated": self.truncated,
            "history": [list(h) for h in self.history],
            "median_delay_s": float(np.median(finite)) if finite.size else None,
        }


# -- loss policy and per-train work -----------------------------------------------


def apply_loss_policy(series: TimestampSeries, eps: float) -> TimestampSeries:
    """Mark the last departure lost when the train lost a share ``eps`` or more."""
    if series.packet_count == 0 or series.loss_ratio < eps:
        return series
    dep = series.departures.copy()
    dep[-1] = math.inf
    return series.with_departures(dep)


@dataclass(frozen=True)
class TrainOutcome:
    last_delay: float
    stationary: bool
    trend: bool
    loss_ratio: float


def train_seed(base: int, rate: float, length: int, iteration: int) -> np.random.SeedSequence:
    return seed_sequence(base, int(round(rate * 1e6)), length, iteration)


def measure_train(scenario: NetworkScenario, rate: float, length: int, iteration: int,
                  base_seed: int, loss_eps: float) -> TrainOutcome:
    ss = train_seed(base_seed, rate, length, iteration)
    start = draw_start_time(scenario, np.random.default_rng(seed_sequence(ss, 1)))
    series = run_probe(scenario, ProbeSpec(length, rate, start, iteration), seed_sequence(ss, 0))
    delays = series.delays
    finite = delays[np.isfinite(delays)]
    stationary = trend = False
    if finite.shape[0] >= 2 * MIN_LENGTH:
        full = ers_statistic(finite)
        half = ers_statistic(finite[: finite.shape[0] // 2])
        stationary = full.stationary
        trend = full.statistic < half.statistic
    last = float(apply_loss_policy(series, loss_eps).delays[-1])
    return TrainOutcome(last, bool(stationary), bool(trend), series.loss_ratio)


def _measure_many(args) -> list[TrainOutcome]:
    scenario, rate, length, iters, base, loss_eps = args
    return [measure_train(scenario, rate, length, i, base, loss_eps) for i in iters]


def run_trains(scenario: NetworkScenario, rate: float, length: int,
               config: ProbingConfig, pool: ProcessPoolExecutor | None = None) -> list[TrainOutcome]:
    base = scenario.seed if config.seed is None else config.seed
    iters = range(config.iterations)
    if pool is None or config.jobs == 1:
        return _measure_many((scenario, rate, length, iters, base, config.loss_threshold))
    chunks = [list(iters[k::config.jobs]) for k in range(config.jobs)]
    parts = pool.map(_measure_many, [(scenario, rate, length, c, base, config.loss_threshold)
                                     for c in chunks])
    out: list[TrainOutcome | None] = [None] * config.iterations
    for c, res in zip(chunks, parts):
        for i, o in zip(c, res):
            out[i] = o
    return out


def _sample_set(rate, outcomes, length, history, feasible, truncated=False) -> DelaySampleSet:
    last = np.array([o.last_delay for o in outcomes])
    if not feasible:
        last = np.full(last.shape, math.inf)
    last.setflags(write=False)
    _, stat, trend = history[-1]
    return DelaySampleSet(rate, last, length, stat, trend, tuple(history), truncated, feasible,
                          float(np.mean([o.loss_ratio for o in outcomes])))


# -- measurement procedures ----------------------------------------------------------


def adaptive_train_measure(scenario: NetworkScenario, rate: float, config: ProbingConfig,
                           pool: ProcessPoolExecutor | None = None) -> DelaySampleSet:
    """Double the train length until the trains look stationary or the trend test fails."""
    if not rate > 0:
        raise ValueError("rate must be positive")
    length = config.n_min
    history = []
    while True:
        outs = run_trains(scenario, rate, length, config, pool)
        stat = float(np.mean([o.stationary for o in outs]))
        trend = float(np.mean([o.trend for o in outs]))
        history.append((length, stat, trend))
        if 1.0 - stat <= config.eps_w:
            return _sample_set(rate, outs, length, history, True)
        if sum(o.trend for o in outs) * 2 <= len(outs):
            return _sample_set(rate, outs, length, history, False)
        if length * 2 > config.n_max:
            return _sample_set(rate, outs, length, history, False, truncated=True)
        length *= 2


def fixed_train_measure(scenario: NetworkScenario, rate: float, config: ProbingConfig,
                        pool: ProcessPoolExecutor | None = None) -> DelaySampleSet:
    """Short trains of fixed length; a majority of (ERS or trend) passes makes the rate feasible."""
    length = config.train_length
    outs = run_trains(scenario, rate, length, config, pool)
    passes = [o.stationary or o.trend for o in outs]
    stat = float(np.mean([o.stationary for o in outs]))
    trend = float(np.mean([o.trend for o in outs]))
    feasible = sum(passes) * 2 > len(outs)
    return _sample_set(rate, outs, length, [(length, stat, trend)], feasible)


def estimate_delay_percentile(sample_set: DelaySampleSet, config: ProbingConfig,
                              use_pot: bool | None = None,
                              rng: np.random.Generator | None = None) -> PercentileEstimate:
    """``1 - eps_w`` percentile of the sample set, by POT when ``eps_w < 10 / I``."""
    use_pot = config.use_pot if use_pot is None else use_pot
    level = 1.0 - config.eps_w
    x = sample_set.samples
    direct = percentile_with_ci(x, level, config.confidence)
    if not use_pot or config.eps_w >= 10.0 / x.shape[0] or not direct.is_finite:
        return direct
    if rng is None:
        rng = np.random.default_rng(train_seed(config.seed or 0, sample_set.rate, 0, 0))
    try:
        est, _ = pot_estimate(x, config.eps_w, config.pot_threshold, config.confidence,
                              config.pot_resamples, rng)
    except (InsufficientTailError, DegenerateFitError, ValueError):
        return direct
    return est


# -- rate selection ------------------------------------------------------------------


@dataclass(frozen=True)
class RateSelection:
    rates: tuple[float, ...]
    passed: tuple[bool, ...]
    bracket: tuple[float, float]

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.bracket[0] + self.bracket[1])

    @property
    def largest_passing(self) -> float:
        ok = [r for r, p in zip(self.rates, self.passed) if p]
        return max(ok) if ok else 0.0


def select_rates(config: ProbingConfig, finite_delay_test: Callable[[float], bool]) -> RateSelection:
    """Binary increase from ``r_acc`` followed by binary search down to width ``r_acc``."""
    rates, passed = [], []

    def probe(r):
        ok = bool(finite_delay_test(r))
        rates.append(r)
        passed.append(ok)
        return ok

    r = config.r_acc
    if not probe(r):
        return RateSelection(tuple(rates), tuple(passed), (0.0, r))
    while True:
        nxt = 2.0 * r
        if nxt > config.rate_guard:
            raise RateGuardError(f"rate {nxt} exceeds the guard {config.rate_guard}")
        if not probe(nxt):
            lo, hi = r, nxt
            break
        r = nxt
    while hi - lo > config.r_acc * (1 + 1e-9):
        mid = 0.5 * (lo + hi)
        if probe(mid):
            lo = mid
        else:
            hi = mid
    return RateSelection(tuple(rates), tuple(passed), (lo, hi))


def expected_rate_count(r_tilde: float, r_acc: float) -> int:
    return 2 * int(math.floor(math.log2(r_tilde / r_acc))) + 2


# -- full pipeline -------------------------------------------------------------------


@dataclass
class EstimationResult:
    curve: ServiceCurveEstimate
    selection: RateSelection
    sample_sets: dict[float, DelaySampleSet]
    percentiles: dict[float, PercentileEstimate]
    config: ProbingConfig
    scenario: NetworkScenario
    wall_clock_s: float = 0.0
    extra: dict = field(default_factory=dict)

    def bound_curves(self) -> tuple[ServiceCurveEstimate | None, ServiceCurveEstimate | None]:
        """Curves built from the lower and upper CI ends of every percentile."""
        out = []
        for attr in ("ci_low", "ci_high"):
            m = {r: getattr(p, attr) for r, p in self.percentiles.items()}
            try:
                out.append(f_transform(m, self.config.eps_w, self.curve.domain_limit))
            except EmptyEstimateError:
                out.append(None)
        return out[0], out[1]

    def manifest(self, command: str = "", outputs: Sequence[str] = ()) -> dict:
        return {
            "tool": "stochbw",
            "version": __version__,
            "command": command,
            "scenario": self.scenario.to_dict(),
            "config": asdict(self.config),
            "rates_probed_pps": list(self.selection.rates),
            "rate_passed": list(self.selection.passed),
            "bracket_pps": list(self.selection.bracket),
            "per_rate": [
                {**self.sample_sets[r].summary(),
                 "percentile_s": _json_float(self.percentiles[r].value),
                 "ci_low_s": _json_float(self.percentiles[r].ci_low),
                 "ci_high_s": _json_float(self.percentiles[r].ci_high),
                 "percentile_method": self.percentiles[r].method}
                for r in self.selection.rates
            ],
            "curve": self.curve.to_dict(),
            "outputs": list(outputs),
            "wall_clock_s": self.wall_clock_s,
        }

    def write_delay_csvs(self, out_dir: str) -> list[str]:
        paths = []
        for r, s in self.sample_sets.items():
            path = os.path.join(out_dir, f"delays_rate_{r:g}.csv")
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["iteration", "rate_pps", "train_length", "delay_s"])
                for i, d in enumerate(s.samples):
                    w.writerow([i, repr(r), s.train_length_used, "inf" if math.isinf(d) else repr(float(d))])
            paths.append(path)
        return paths


def _json_float(x: float):
    return x if math.isfinite(x) else None


def run_estimation(scenario: NetworkScenario, config: ProbingConfig) -> EstimationResult:
    """Rate selection plus one percentile per probed rate, assembled into a curve."""
    t0 = time.perf_counter()
    measure = adaptive_train_measure if config.mode == "adaptive" else fixed_train_measure
    sets: dict[float, DelaySampleSet] = {}
    pcts: dict[float, PercentileEstimate] = {}
    pool = ProcessPoolExecutor(config.jobs) if config.jobs > 1 else None
    try:
        def test(rate: float) -> bool:
            s = measure(scenario, rate, config, pool)
            sets[rate] = s
            pcts[rate] = estimate_delay_percentile(s, config)
            return s.feasible and pcts[rate].is_finite

        selection = select_rates(config, test)
    finally:
        if pool is not None:
            pool.shutdown()
    domain = config.train_length - 1 if config.mode == "fixed_short" else None
    curve = f_transform({r: p.value for r, p in pcts.items()}, config.eps_w, domain)
    return EstimationResult(curve, selection, sets, pcts, config, scenario,
                            time.perf_counter() - t0)


def estimate_service_curve(scenario: NetworkScenario, config: ProbingConfig) -> ServiceCurveEstimate:
    return run_estimation(scenario, config).curve


def estimate_limiting_rate(scenario: NetworkScenario, config: ProbingConfig) -> tuple[float, tuple[float, float]]:
    """Limiting-rate heuristic from short trains; returns the bracket midpoint and bracket."""
    if config.mode != "fixed_short":
        raise ValueError("estimate_limiting_rate needs a fixed_short config")
    pool = ProcessPoolExecutor(config.jobs) if config.jobs > 1 else None
    try:
        sel = select_rates(config, lambda r: fixed_train_measure(scenario, r, config, pool).feasible)
    finally:
        if pool is not None:
            pool.shutdown()
    return sel.midpoint, sel.bracket


def write_manifest(path: str, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
