"""Deterministic rate-scanning baseline: maximum backlog per rate plus Legendre transform."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .maxplus import MinPlusCurve, ServiceCurveEstimate, TimestampSeries, legendre_transform, pseudo_inverse
from .sim import NetworkScenario, ProbeSpec, draw_start_time, run_probe
from .sim.traffic import seed_sequence


class LossUnsupportedError(ValueError):
    """The deterministic method has no notion of lost packets."""


@dataclass(frozen=True)
class BacklogScan:
    """Maximum backlog ``B_max(r)`` in packets for each rate of one scan."""

    rates: tuple[float, ...]
    bmax: tuple[float, ...]
    train_length: int

    def __post_init__(self):
        if len(self.rates) != len(self.bmax) or not self.rates:
            raise ValueError("need one backlog per rate and at least one rate")

    def as_map(self) -> dict[float, float]:
        return dict(zip(self.rates, self.bmax))


def scan_rates(step: float, max_rate: float) -> tuple[float, ...]:
    """Arithmetic grid ``step, 2 step, ...`` up to ``max_rate``."""
    if not 0 < step <= max_rate:
        raise ValueError("need 0 < step <= max_rate")
    k = int(math.floor(max_rate / step + 1e-9))
    return tuple(step * (i + 1) for i in range(k))


def backlog_at_departures(series: TimestampSeries, rate: float) -> np.ndarray:
    """Backlog just before each departure: fluid arrivals minus earlier departures.

    The fluid arrival curve ``r (t - T_A(0))`` is capped at the train
    length. While the train is still arriving this equals ``r W(n)``.
    """
    if np.any(series.lost):
        raise LossUnsupportedError("the deterministic baseline cannot handle lost packets")
    n = np.arange(series.packet_count)
    fluid = np.minimum(series.packet_count, rate * (series.departures - series.arrivals[0]))
    return fluid - n


def measure_bmax(scenario: NetworkScenario, rate: float, train_length: int, seed=None) -> float:
    """``B_max(r)`` in packets from one constant-rate train."""
    if not rate > 0:
        raise ValueError("rate must be positive")
    ss = seed_sequence(scenario.seed if seed is None else seed)
    start = draw_start_time(scenario, np.random.default_rng(seed_sequence(ss, 1)))
    series = run_probe(scenario, ProbeSpec(train_length, rate, start), seed_sequence(ss, 0))
    return float(max(0.0, np.max(backlog_at_departures(series, rate))))


def backlog_scan(scenario: NetworkScenario, rates, train_length: int = 800,
                 iteration: int = 0, base_seed: int | None = None) -> BacklogScan:
    base = scenario.seed if base_seed is None else base_seed
    b = tuple(measure_bmax(scenario, r, train_length,
                           seed_sequence(base, 7, iteration, int(round(r * 1e6))))
              for r in rates)
    return BacklogScan(tuple(float(r) for r in rates), b, train_length)


def deterministic_curve(scan: BacklogScan) -> MinPlusCurve:
    """``S(t) = sup_r {r t - B_max(r)}`` clamped at zero."""
    return legendre_transform(scan.as_map())


def active_slope(curve: MinPlusCurve, t: float) -> float:
    """Slope of the segment in force at time ``t`` (packets per second)."""
    slopes = np.append(curve.segment_slopes(), curve.final_slope)
    k = int(np.searchsorted(curve.times, t, side="right")) - 1
    return float(slopes[k])


@dataclass(frozen=True)
class CurveBand:
    t: np.ndarray
    mean: np.ndarray
    low: np.ndarray
    high: np.ndarray
    variance: np.ndarray


def aggregate_curves(curves, t_grid, confidence: float = 0.95) -> CurveBand:
    """Mean and normal-approximation confidence band per grid point."""
    t = np.asarray(t_grid, dtype=float)
    vals = np.array([c.evaluate(t) for c in curves])
    k = vals.shape[0]
    mean = vals.mean(axis=0)
    var = vals.var(axis=0, ddof=1) if k > 1 else np.zeros_like(mean)
    half = stats.norm.ppf(0.5 + confidence / 2) * np.sqrt(var / k)
    return CurveBand(t, mean, mean - half, mean + half, var)


@dataclass(frozen=True)
class BaselineResult:
    scans: tuple[BacklogScan, ...]
    curves: tuple[MinPlusCurve, ...]

    def band(self, t_grid, confidence: float = 0.95) -> CurveBand:
        return aggregate_curves(self.curves, t_grid, confidence)

    def slopes_at(self, t: float) -> np.ndarray:
        return np.array([active_slope(c, t) for c in self.curves])


def run_baseline(scenario: NetworkScenario, step: float, max_rate: float,
                 train_length: int = 800, iterations: int = 200,
                 base_seed: int | None = None) -> BaselineResult:
    rates = scan_rates(step, max_rate)
    scans = tuple(backlog_scan(scenario, rates, train_length, i, base_seed)
                  for i in range(iterations))
    return BaselineResult(scans, tuple(deterministic_curve(s) for s in scans))


def to_minplus_grid(curve: ServiceCurveEstimate, t_grid) -> np.ndarray:
    """Packetized min-plus view ``floor(S(t))`` of a max-plus estimate on a grid."""
    return np.array([pseudo_inverse(curve, float(t)) for t in t_grid], dtype=float)
