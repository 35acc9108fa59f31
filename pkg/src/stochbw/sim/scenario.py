"""Scenario description for the packet-level simulator and its JSON form."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Mapping, Union

SCHEDULERS = ("fifo", "priority", "fair")
BURST_LAWS = ("exponential", "pareto", "constant")


class ScenarioError(ValueError):
    """Invalid scenario; the message names the offending field."""


@dataclass(frozen=True)
class BernoulliOnOff:
    """Slotted server forwarding one packet per slot with probability ``p``."""

    p: float
    slot_duration_s: float = 1.0

    def __post_init__(self):
        if not 0 < self.p <= 1:
            raise ScenarioError("server_model.p: must lie in (0, 1]")
        if not self.slot_duration_s > 0:
            raise ScenarioError("server_model.slot_duration_s: must be > 0")


@dataclass(frozen=True)
class ConstantRate:
    capacity_bps: float

    def __post_init__(self):
        if not self.capacity_bps > 0:
            raise ScenarioError("server_model.capacity: must be > 0")


@dataclass(frozen=True)
class ScheduledLink:
    """Bottleneck link shared by the probe flow and one cross-traffic flow.

    ``priority`` serves cross traffic first (non-preemptive), ``fair`` is
    deficit round robin between the two flows. ``buffer_packets`` bounds the
    packets in the system, the one in service included.
    """

    capacity_bps: float
    scheduler: str = "priority"
    buffer_packets: int = 10**6
    propagation_delay_s: float = 0.0

    def __post_init__(self):
        if not self.capacity_bps > 0:
            raise ScenarioError("server_model.capacity: must be > 0")
        if self.scheduler not in SCHEDULERS:
            raise ScenarioError(f"server_model.scheduler: must be one of {SCHEDULERS}")
        if self.buffer_packets < 1:
            raise ScenarioError("server_model.buffer_packets: must be >= 1")
        if self.propagation_delay_s < 0:
            raise ScenarioError("server_model.propagation_delay_s: must be >= 0")


@dataclass(frozen=True)
class PeriodicBursts:
    """Equally spaced bursts with i.i.d. sizes capped at ``truncation_bytes``."""

    rate_bps: float
    burst_law: str = "exponential"
    mean_burst_bytes: float = 1500.0
    pareto_shape: float = 1.5
    truncation_bytes: int = 65536
    fragment_bytes: int = 1500

    def __post_init__(self):
        if not self.rate_bps > 0:
            raise ScenarioError("cross_traffic.rate: must be > 0")
        if self.burst_law not in BURST_LAWS:
            raise ScenarioError(f"cross_traffic.burst_law: must be one of {BURST_LAWS}")
        if not 0 < self.mean_burst_bytes < self.truncation_bytes:
            raise ScenarioError("cross_traffic.mean_burst_bytes: must lie in (0, truncation_bytes)")
        if self.burst_law == "pareto" and not self.pareto_shape > 1:
            raise ScenarioError("cross_traffic.pareto_shape: must be > 1")
        if self.fragment_bytes < 1:
            raise ScenarioError("cross_traffic.fragment_bytes: must be >= 1")

    @property
    def burst_interval_s(self) -> float:
        return self.mean_burst_bytes * 8.0 / self.rate_bps


ServerModel = Union[BernoulliOnOff, ConstantRate, ScheduledLink]


@dataclass(frozen=True)
class NetworkScenario:
    server_model: ServerModel
    cross_traffic: PeriodicBursts | None = None
    packet_size_bytes: int = 1500
    seed: int = 0
    #: cross traffic runs this many burst intervals before a probe may start
    warmup_intervals: float = 10.0

    def __post_init__(self):
        if self.packet_size_bytes < 1:
            raise ScenarioError("packet_size_bytes: must be >= 1")
        if self.cross_traffic is not None and not isinstance(self.server_model, ScheduledLink):
            raise ScenarioError("cross_traffic: only supported with a scheduled_link server")
        if self.warmup_intervals < 0:
            raise ScenarioError("warmup_intervals: must be >= 0")
        if self.cross_traffic is not None and self.cross_traffic.rate_bps > self.server_model.capacity_bps:
            raise ScenarioError("cross_traffic.rate: exceeds the link capacity (C - lambda < 0)")

    # -- convenience constructors ------------------------------------------------
    @classmethod
    def onoff(cls, p: float, slot_duration_s: float = 1.0, seed: int = 0) -> "NetworkScenario":
        return cls(BernoulliOnOff(p, slot_duration_s), seed=seed)

    @classmethod
    def constant_rate(cls, capacity_pps: float, packet_size_bytes: int = 1500,
                      seed: int = 0) -> "NetworkScenario":
        return cls(ConstantRate(capacity_pps * packet_size_bytes * 8.0),
                   packet_size_bytes=packet_size_bytes, seed=seed)

    @classmethod
    def dumbbell(cls, capacity_pps: float = 1000.0, cross_pps: float = 500.0,
                 burst_law: str = "exponential", scheduler: str = "priority",
                 buffer_packets: int = 10**6, propagation_delay_s: float = 0.0,
                 packet_size_bytes: int = 1500, seed: int = 0, **burst_kw) -> "NetworkScenario":
        """Single bottleneck with capacity and cross rate in probe packets per second."""
        bits = packet_size_bytes * 8.0
        link = ScheduledLink(capacity_pps * bits, scheduler, buffer_packets, propagation_delay_s)
        cross = PeriodicBursts(cross_pps * bits, burst_law, **burst_kw)
        return cls(link, cross, packet_size_bytes, seed)

    # -- derived quantities --------------------------------------------------------
    @property
    def scheduler(self) -> str | None:
        return getattr(self.server_model, "scheduler", None)

    @property
    def packet_bits(self) -> float:
        return self.packet_size_bytes * 8.0

    @property
    def capacity_pps(self) -> float:
        m = self.server_model
        if isinstance(m, BernoulliOnOff):
            return m.p / m.slot_duration_s
        return m.capacity_bps / self.packet_bits

    @property
    def cross_rate_pps(self) -> float:
        if self.cross_traffic is None:
            return 0.0
        return self.cross_traffic.rate_bps / self.packet_bits

    @property
    def ground_truth_abw(self) -> float:
        """Average available bandwidth ``C - lambda`` in probe packets per second."""
        return self.capacity_pps - self.cross_rate_pps

    @property
    def warmup_s(self) -> float:
        if self.cross_traffic is None:
            return 0.0
        return self.warmup_intervals * self.cross_traffic.burst_interval_s

    def with_seed(self, seed: int) -> "NetworkScenario":
        return NetworkScenario(self.server_model, self.cross_traffic, self.packet_size_bytes,
                               seed, self.warmup_intervals)

    # -- JSON ----------------------------------------------------------------------
    def to_dict(self) -> dict:
        m = self.server_model
        kind = {BernoulliOnOff: "bernoulli_onoff", ConstantRate: "constant_rate",
                ScheduledLink: "scheduled_link"}[type(m)]
        doc = {
            "server_model": {"type": kind, **asdict(m)},
            "cross_traffic": None if self.cross_traffic is None
            else {"type": "periodic_bursts", **asdict(self.cross_traffic)},
            "packet_size_bytes": self.packet_size_bytes,
            "seed": self.seed,
            "warmup_intervals": self.warmup_intervals,
        }
        return doc

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "NetworkScenario":
        if not isinstance(doc, Mapping):
            raise ScenarioError("scenario: expected a JSON object")
        size = _get(doc, "packet_size_bytes", int, 1500, "")
        bits = size * 8.0
        sm = doc.get("server_model")
        if not isinstance(sm, Mapping):
            raise ScenarioError("server_model: required object")
        kind = sm.get("type")
        if kind == "bernoulli_onoff":
            server = BernoulliOnOff(_get(sm, "p", float, None, "server_model."),
                                    _get(sm, "slot_duration_s", float, 1.0, "server_model."))
        elif kind == "constant_rate":
            server = ConstantRate(_rate(sm, "capacity", bits, "server_model."))
        elif kind == "scheduled_link":
            server = ScheduledLink(
                _rate(sm, "capacity", bits, "server_model."),
                _get(sm, "scheduler", str, "priority", "server_model."),
                _get(sm, "buffer_packets", int, 10**6, "server_model."),
                _get(sm, "propagation_delay_s", float, 0.0, "server_model."),
            )
        else:
            raise ScenarioError(
                "server_model.type: expected bernoulli_onoff, constant_rate or scheduled_link, "
                f"got {kind!r}")
        ct = doc.get("cross_traffic")
        cross = None
        if ct is not None:
            if not isinstance(ct, Mapping) or ct.get("type", "periodic_bursts") != "periodic_bursts":
                raise ScenarioError("cross_traffic.type: expected periodic_bursts")
            cross = PeriodicBursts(
                _rate(ct, "rate", bits, "cross_traffic."),
                _get(ct, "burst_law", str, "exponential", "cross_traffic."),
                _get(ct, "mean_burst_bytes", float, 1500.0, "cross_traffic."),
                _get(ct, "pareto_shape", float, 1.5, "cross_traffic."),
                _get(ct, "truncation_bytes", int, 65536, "cross_traffic."),
                _get(ct, "fragment_bytes", int, 1500, "cross_traffic."),
            )
        return cls(server, cross, size, _get(doc, "seed", int, 0, ""),
                   _get(doc, "warmup_intervals", float, 10.0, ""))

    @classmethod
    def from_json(cls, text: str) -> "NetworkScenario":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
        return cls.from_dict(doc)


def _get(doc: Mapping, key: str, typ, default, prefix: str):
    if key not in doc:
        if default is None:
            raise ScenarioError(f"{prefix}{key}: required field missing")
        return default
    val = doc[key]
    if typ is float and isinstance(val, (int, float)) and not isinstance(val, bool):
        return float(val)
    if typ is int and isinstance(val, int) and not isinstance(val, bool):
        return val
    if typ is int and isinstance(val, float) and val.is_integer():
        return int(val)
    if typ is str and isinstance(val, str):
        return val
    raise ScenarioError(f"{prefix}{key}: expected {typ.__name__}, got {val!r}")


def _rate(doc: Mapping, stem: str, packet_bits: float, prefix: str) -> float:
    """Rate in bits per second from ``<stem>_bps``, ``<stem>_mbps`` or ``<stem>_pps``."""
    if f"{stem}_bps" in doc:
        return _get(doc, f"{stem}_bps", float, None, prefix)
    if f"{stem}_mbps" in doc:
        return _get(doc, f"{stem}_mbps", float, None, prefix) * 1e6
    if f"{stem}_pps" in doc:
        return _get(doc, f"{stem}_pps", float, None, prefix) * packet_bits
    raise ScenarioError(f"{prefix}{stem}_pps: required field missing (or {stem}_mbps / {stem}_bps)")


@dataclass(frozen=True)
class ProbeSpec:
    """Constant-rate train: packet ``n`` enters at ``start_time + n / rate``."""

    train_length: int
    rate: float
    start_time: float = 0.0
    iteration_id: int = 0

    def __post_init__(self):
        if self.train_length < 1:
            raise ValueError("train_length must be >= 1")
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise ValueError("probe rate must be positive and finite")
        if self.start_time < 0:
            raise ValueError("start_time must be >= 0")
