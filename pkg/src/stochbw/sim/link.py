"""Single bottleneck link shared by a probe flow and one cross-traffic flow.

Times are integer nanoseconds inside the kernel. Packets of both flows are
merged into one arrival stream sorted by time; at equal times cross traffic
comes first, which doubles as the deterministic insertion order for FIFO.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from ..maxplus import LOST, TimestampSeries
from .scenario import ConstantRate, NetworkScenario, ProbeSpec, ScheduledLink
from .traffic import burst_sizes, fragment, seed_sequence, solve_scale

NS = 1_000_000_000
PROBE, CROSS = 0, 1
SCHED_CODE = {"fifo": 0, "priority": 1, "fair": 2}
DRR_QUANTUM = 1500


@numba.njit(cache=True)
def _serve(arrival, flow, service, size, sched, buffer, quantum):
    n = arrival.shape[0]
    start = np.full(n, -1, np.int64)
    depart = np.full(n, -1, np.int64)
    dropped = np.zeros(n, np.bool_)
    queue = np.empty((2, n), np.int64)
    head = np.zeros(2, np.int64)
    tail = np.zeros(2, np.int64)
    deficit = np.zeros(2, np.int64)
    fresh = np.zeros(2, np.bool_)
    turn = 0
    in_system = 0
    busy = False
    current = -1
    t_end = 0
    i = 0
    while True:
        if busy and (i >= n or t_end <= arrival[i]):
            t = t_end
            depart[current] = t
            in_system -= 1
            busy = False
        elif i < n:
            t = arrival[i]
        else:
            break
        while i < n and arrival[i] == t:
            if in_system >= buffer:
                dropped[i] = True
            else:
                f = flow[i]
                queue[f, tail[f]] = i
                tail[f] += 1
                in_system += 1
            i += 1
        if busy:
            continue
        pick = -1
        if sched == 0:
            if head[0] < tail[0] and head[1] < tail[1]:
                a = queue[0, head[0]]
                b = queue[1, head[1]]
                pick = 0 if a < b else 1
            elif head[0] < tail[0]:
                pick = 0
            elif head[1] < tail[1]:
                pick = 1
        elif sched == 1:
            if head[1] < tail[1]:
                pick = 1
            elif head[0] < tail[0]:
                pick = 0
        else:
            if head[0] < tail[0] or head[1] < tail[1]:
                while True:
                    f = turn
                    if head[f] == tail[f]:
                        deficit[f] = 0
                        fresh[f] = False
                        turn = 1 - f
                        continue
                    if not fresh[f]:
                        deficit[f] += quantum
                        fresh[f] = True
                    p = queue[f, head[f]]
                    if size[p] <= deficit[f]:
                        deficit[f] -= size[p]
                        pick = f
                        if head[f] + 1 == tail[f]:
                            deficit[f] = 0
                            fresh[f] = False
                            turn = 1 - f
                        break
                    fresh[f] = False
                    turn = 1 - f
        if pick >= 0:
            current = queue[pick, head[pick]]
            head[pick] += 1
            start[current] = t
            t_end = t + service[current]
            busy = True
    return start, depart, dropped


@dataclass(frozen=True)
class LinkTrace:
    """Per-packet record of one simulated train, both flows merged."""

    arrival_ns: np.ndarray
    start_ns: np.ndarray
    depart_ns: np.ndarray
    dropped: np.ndarray
    flow: np.ndarray
    size_bytes: np.ndarray
    service_ns: np.ndarray
    propagation_s: float
    probe_rate: float
    scheduler: str

    @property
    def probe_mask(self) -> np.ndarray:
        return self.flow == PROBE

    def probe_series(self) -> TimestampSeries:
        m = self.probe_mask
        arr = self.arrival_ns[m] / NS
        dep = np.where(self.dropped[m], LOST, self.depart_ns[m] / NS + self.propagation_s)
        return TimestampSeries(arr, dep)

    def write_csv(self, fh) -> None:
        s = self.probe_series()
        fh.write("index,T_A,T_D,dropped\n")
        for n in range(s.packet_count):
            lost = math.isinf(s.departures[n])
            fh.write(f"{n},{s.arrivals[n]!r},{'inf' if lost else repr(float(s.departures[n]))},"
                     f"{int(lost)}\n")


def _service_ns(size_bytes: np.ndarray, capacity_bps: float) -> np.ndarray:
    return np.rint(size_bytes * 8.0 * NS / capacity_bps).astype(np.int64)


def probe_arrivals_ns(probe: ProbeSpec) -> np.ndarray:
    n = np.arange(probe.train_length)
    return np.rint((probe.start_time + n / probe.rate) * NS).astype(np.int64)


def _cross_packets(scenario: NetworkScenario, seed, horizon_ns: int, scale: float):
    cross = scenario.cross_traffic
    period_ns = max(1, int(round(cross.burst_interval_s * NS)))
    count = horizon_ns // period_ns + 1
    sizes = burst_sizes(cross, seed, count, scale)
    pkt, owner = fragment(sizes, cross.fragment_bytes)
    return owner.astype(np.int64) * period_ns, pkt


def simulate_link(scenario: NetworkScenario, probe: ProbeSpec, seed=None,
                  probe_arrivals: np.ndarray | None = None) -> LinkTrace:
    """Run one train through the link and return the full trace.

    The cross-traffic horizon grows until every probe packet has left, so
    bursts beyond it cannot change the outcome.
    """
    model = scenario.server_model
    if isinstance(model, ConstantRate):
        model = ScheduledLink(model.capacity_bps, "fifo")
    if not isinstance(model, ScheduledLink):
        raise TypeError("simulate_link needs a constant_rate or scheduled_link server")
    if seed is None:
        seed = seed_sequence(scenario.seed, probe.iteration_id)
    seed = seed_sequence(seed)
    p_arr = probe_arrivals_ns(probe) if probe_arrivals is None else np.asarray(probe_arrivals, np.int64)
    p_size = np.full(p_arr.shape[0], scenario.packet_size_bytes, np.int64)
    cross = scenario.cross_traffic
    scale = None
    if cross is not None:
        scale = solve_scale(cross.burst_law, cross.mean_burst_bytes, cross.pareto_shape,
                            cross.truncation_bytes)
    pkt_ns = scenario.packet_bits * NS / model.capacity_bps
    pad = int(max(4 * p_arr.shape[0] * pkt_ns, 20 * (cross.burst_interval_s * NS if cross else 0), NS // 100))
    horizon = int(p_arr[-1]) + pad
    while True:
        if cross is not None:
            c_arr, c_size = _cross_packets(scenario, seed, horizon, scale)
        else:
            c_arr = c_size = np.empty(0, np.int64)
        arrival = np.concatenate((c_arr, p_arr))
        flow = np.concatenate((np.full(c_arr.shape[0], CROSS, np.int8), np.full(p_arr.shape[0], PROBE, np.int8)))
        size = np.concatenate((c_size, p_size))
        order = np.lexsort((-flow, arrival))  # cross first on ties, stable otherwise
        arrival, flow, size = arrival[order], flow[order], size[order]
        service = _service_ns(size, model.capacity_bps)
        start, depart, dropped = _serve(arrival, flow, service, size, SCHED_CODE[model.scheduler],
                                        model.buffer_packets, DRR_QUANTUM)
        probe_dep = depart[(flow == PROBE) & ~dropped]
        if cross is None or probe_dep.shape[0] == 0 or probe_dep.max() <= horizon:
            break
        horizon = int(p_arr[-1]) + 2 * (horizon - int(p_arr[-1]))
    return LinkTrace(arrival, start, depart, dropped, flow, size, service,
                     model.propagation_delay_s, probe.rate, model.scheduler)


def run_link_probe(scenario: NetworkScenario, probe: ProbeSpec, seed=None) -> TimestampSeries:
    return simulate_link(scenario, probe, seed).probe_series()
