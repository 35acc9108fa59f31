"""Slotted Bernoulli On-Off server.

Slot ``k`` spans ``[k d, (k + 1) d)``. A packet waiting at the start of a
slot is sent in that slot with probability ``p`` and leaves at the slot end.
Success slots are drawn up front as a cumulative sum of geometric gaps, so
the same seed yields the same slot sequence for probes and instruments.
"""
from __future__ import annotations

import math

import numba
import numpy as np

from ..maxplus import TimestampSeries
from .link import NS, probe_arrivals_ns
from .scenario import BernoulliOnOff, NetworkScenario, ProbeSpec
from .traffic import CHUNK, chunk_rng, seed_sequence


@numba.njit(cache=True)
def _onoff_departures(arrival, succ, slot):
    n = arrival.shape[0]
    dep = np.empty(n, np.int64)
    j = 0
    ready = 0
    for k in range(n):
        t = max(arrival[k], ready)
        c = (t + slot - 1) // slot
        while j < succ.shape[0] and succ[j] < c:
            j += 1
        if j >= succ.shape[0]:
            return dep, False
        dep[k] = (succ[j] + 1) * slot
        ready = dep[k]
        j += 1
    return dep, True


def success_slots(p: float, seed, count: int) -> np.ndarray:
    """Indices of the first ``count`` slots in which the server is on."""
    chunks = [chunk_rng(seed, j).geometric(p, CHUNK) for j in range(-(-count // CHUNK))]
    gaps = np.concatenate(chunks)[:count].astype(np.int64)
    return np.cumsum(gaps) - 1


def _slot_ns(model: BernoulliOnOff) -> int:
    return int(round(model.slot_duration_s * NS))


def _needed(model: BernoulliOnOff, last_arrival_ns: int, n: int, slot: int) -> int:
    return int(math.ceil(last_arrival_ns / slot * model.p)) + n + 64


def onoff_departures_ns(scenario: NetworkScenario, arrival_ns: np.ndarray, seed) -> np.ndarray:
    model = scenario.server_model
    slot = _slot_ns(model)
    count = _needed(model, int(arrival_ns[-1]), arrival_ns.shape[0], slot)
    while True:
        succ = success_slots(model.p, seed, count)
        dep, ok = _onoff_departures(arrival_ns, succ, slot)
        if ok:
            return dep
        count *= 2


def run_onoff_probe(scenario: NetworkScenario, probe: ProbeSpec, seed=None) -> TimestampSeries:
    if seed is None:
        seed = seed_sequence(scenario.seed, probe.iteration_id)
    arr = probe_arrivals_ns(probe)
    dep = onoff_departures_ns(scenario, arr, seed_sequence(seed))
    return TimestampSeries(arr / NS, dep / NS)


def onoff_service_table_ns(scenario: NetworkScenario, arrival_ns: np.ndarray, seed) -> np.ndarray:
    """``T_S(nu, n)`` in nanoseconds; entries with ``nu > n`` are ``-1``."""
    model = scenario.server_model
    slot = _slot_ns(model)
    n = arrival_ns.shape[0]
    first = -(-arrival_ns // slot)
    count = _needed(model, int(arrival_ns[-1]), n, slot)
    while True:
        succ = success_slots(model.p, seed, count)
        j0 = np.searchsorted(succ, first, side="left")
        if j0[-1] + n < succ.shape[0]:
            break
        count *= 2
    steps = np.arange(n)[None, :] - np.arange(n)[:, None]
    idx = j0[:, None] + np.maximum(steps, 0)
    table = (succ[idx] + 1) * slot - arrival_ns[:, None]
    return np.where(steps >= 0, table, -1)
