"""Seeded packet-level simulator with known ground truth."""
from __future__ import annotations

import numpy as np

from ..maxplus import BivariateService, TimestampSeries
from .link import NS, LinkTrace, probe_arrivals_ns, simulate_link
from .onoff import onoff_service_table_ns, run_onoff_probe
from .scenario import (BernoulliOnOff, ConstantRate, NetworkScenario, PeriodicBursts,
                       ProbeSpec, ScenarioError, ScheduledLink)
from .traffic import fragment, generate_cross_burst_sizes, seed_sequence, solve_scale


class UnsupportedServerError(ValueError):
    """The server is not max-plus linear, so no bivariate service exists."""


def run_probe(scenario: NetworkScenario, probe: ProbeSpec, seed=None) -> TimestampSeries:
    """Send one constant-rate train through the scenario.

    ``seed`` (int or ``SeedSequence``) fixes the random service and cross
    traffic; by default it derives from ``scenario.seed`` and
    ``probe.iteration_id``. Dropped packets depart at ``inf``.
    """
    if isinstance(scenario.server_model, BernoulliOnOff):
        return run_onoff_probe(scenario, probe, seed)
    return simulate_link(scenario, probe, seed).probe_series()


def draw_start_time(scenario: NetworkScenario, rng: np.random.Generator) -> float:
    """Random probe start after the warm-up, uniform over one burst interval or slot."""
    m = scenario.server_model
    if isinstance(m, BernoulliOnOff):
        period = m.slot_duration_s
    elif scenario.cross_traffic is not None:
        period = scenario.cross_traffic.burst_interval_s
    else:
        return 0.0
    return scenario.warmup_s + float(rng.uniform(0.0, period))


def instrument_bivariate_service(scenario: NetworkScenario, horizon: int,
                                 probe: ProbeSpec | None = None, seed=None) -> BivariateService:
    """Sample ``T_S(nu, n)`` for ``0 <= nu <= n < horizon`` along one sample path.

    The path is the one :func:`run_probe` sees for the same ``probe`` and
    ``seed``. For the On-Off server the table is exact. For a priority link
    ``T_S(nu, n)`` replays the path with packets ``nu..`` released together
    at ``T_A(nu)``. FIFO is rejected.
    """
    m = scenario.server_model
    if probe is None:
        # one packet per slot (On-Off) or per transmission time, starting after warm-up
        rate = 1.0 / m.slot_duration_s if isinstance(m, BernoulliOnOff) else scenario.capacity_pps
        probe = ProbeSpec(horizon, rate, scenario.warmup_s)
    if probe.train_length != horizon:
        raise ValueError("probe.train_length must equal horizon")
    if seed is None:
        seed = seed_sequence(scenario.seed, probe.iteration_id)
    seed = seed_sequence(seed)
    arr = probe_arrivals_ns(probe)
    if isinstance(m, BernoulliOnOff):
        table_ns = onoff_service_table_ns(scenario, arr, seed)
    elif isinstance(m, ConstantRate) or m.scheduler == "priority":
        table_ns = np.full((horizon, horizon), -1, np.int64)
        for nu in range(horizon):
            batch = np.full(horizon - nu, arr[nu])
            trace = simulate_link(scenario, probe, seed, probe_arrivals=batch)
            dep = trace.depart_ns[trace.probe_mask]
            table_ns[nu, nu:] = dep - arr[nu]
        prop = getattr(m, "propagation_delay_s", 0.0)
        return BivariateService(np.where(table_ns >= 0, table_ns / NS + prop, np.nan))
    else:
        raise UnsupportedServerError(
            f"{m.scheduler} scheduling is not max-plus linear; no bivariate service")
    return BivariateService(np.where(table_ns >= 0, table_ns / NS, np.nan))


__all__ = [
    "BernoulliOnOff", "ConstantRate", "LinkTrace", "NetworkScenario", "PeriodicBursts",
    "ProbeSpec", "ScenarioError", "ScheduledLink", "UnsupportedServerError",
    "draw_start_time", "fragment", "generate_cross_burst_sizes", "instrument_bivariate_service",
    "run_probe", "simulate_link", "solve_scale",
]
