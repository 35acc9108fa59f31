"""Max-plus and min-plus curve algebra for packet-train service curve estimation.

Max-plus curves ``T_S(n)`` map a packet index to time (seconds); min-plus
curves ``S(t)`` map time to data (packets). The two are linked through
pseudo-inversion and the Legendre transform.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import IO, Iterable, Mapping, Sequence

import numpy as np

#: Departure timestamp of a dropped packet. Arithmetic with it saturates.
LOST = math.inf


class EmptyEstimateError(ValueError):
    """No probing rate produced a finite delay percentile."""


class DomainExceededError(ValueError):
    """A curve was queried beyond the packet index range it is valid for."""


# ---------------------------------------------------------------------------
# Timestamps
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TimestampSeries:
    """Arrival and departure timestamps of one packet train.

    ``departures[n]`` is ``LOST`` for dropped packets.
    """

    arrivals: np.ndarray
    departures: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.arrivals, dtype=float)
        d = np.asarray(self.departures, dtype=float)
        if a.ndim != 1 or a.shape != d.shape:
            raise ValueError("arrivals and departures must be 1-d arrays of equal length")
        if np.any(np.diff(a) < 0):
            raise ValueError("arrivals must be nondecreasing")
        if np.any(np.isnan(d)) or np.any(d[np.isfinite(d)] < a[np.isfinite(d)]):
            raise ValueError("every finite departure must be >= its arrival")
        a.setflags(write=False)
        d.setflags(write=False)
        object.__setattr__(self, "arrivals", a)
        object.__setattr__(self, "departures", d)

    @property
    def packet_count(self) -> int:
        return int(self.arrivals.shape[0])

    @property
    def delays(self) -> np.ndarray:
        """Per-packet delay ``W(n) = T_D(n) - T_A(n)``; ``inf`` for lost packets."""
        return self.departures - self.arrivals

    @property
    def lost(self) -> np.ndarray:
        return ~np.isfinite(self.departures)

    @property
    def loss_ratio(self) -> float:
        if self.packet_count == 0:
            return 0.0
        return float(self.lost.mean())

    def arrival_gap(self, nu: int, n: int) -> float:
        """``T_A(nu, n) = T_A(n) - T_A(nu)``."""
        return float(self.arrivals[n] - self.arrivals[nu])

    def with_departures(self, departures) -> "TimestampSeries":
        return TimestampSeries(self.arrivals, departures)


@dataclass(frozen=True)
class BivariateService:
    """Sampled shift-varying service ``T_S(nu, n)`` in seconds for ``0 <= nu <= n < N``.

    Entries with ``nu > n`` hold NaN. Only the simulator produces these.
    """

    table: np.ndarray

    def __post_init__(self):
        t = np.array(self.table, dtype=float)
        if t.ndim != 2 or t.shape[0] != t.shape[1]:
            raise ValueError("service table must be square")
        t[np.tril_indices(t.shape[0], -1)] = np.nan
        t.setflags(write=False)
        object.__setattr__(self, "table", t)

    @property
    def horizon(self) -> int:
        return int(self.table.shape[0])

    def __call__(self, nu: int, n: int) -> float:
        if not 0 <= nu <= n < self.horizon:
            raise IndexError(f"need 0 <= nu <= n < {self.horizon}, got ({nu}, {n})")
        return float(self.table[nu, n])

    def departures(self, arrivals) -> np.ndarray:
        """``T_D(n) = max_nu {T_A(nu) + T_S(nu, n)}``."""
        a = np.asarray(arrivals, dtype=float)
        if a.shape != (self.horizon,):
            raise ValueError("need one arrival per packet index")
        return np.nanmax(a[:, None] + self.table, axis=0)


# ---------------------------------------------------------------------------
# Max-plus service curve estimate
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ServiceCurveEstimate:
    """Concave piecewise-linear max-plus curve ``T(n) = min_r (n / r + w_r)``.

    ``segments`` holds ``(rate, intercept)`` pairs with rates in packets per
    second and intercepts in seconds. Dominated segments are kept; they never
    change :meth:`evaluate`. ``domain_limit`` is the largest packet index the
    estimate is valid for, ``None`` when unrestricted.
    """

    segments: tuple[tuple[float, float], ...]
    epsilon_total: float
    domain_limit: int | None = None

    def __post_init__(self):
        segs = tuple((float(r), float(w)) for r, w in self.segments)
        if not segs:
            raise EmptyEstimateError("a service curve needs at least one segment")
        for r, w in segs:
            if not r > 0 or not math.isfinite(r):
                raise ValueError(f"segment rate must be positive and finite, got {r}")
            if not (w >= 0 and math.isfinite(w)):
                raise ValueError(f"segment intercept must be finite and >= 0, got {w}")
        if not 0.0 <= self.epsilon_total <= 1.0:
            raise ValueError("epsilon_total must lie in [0, 1]")
        if self.domain_limit is not None and self.domain_limit < 0:
            raise ValueError("domain_limit must be >= 0")
        object.__setattr__(self, "segments", segs)

    @property
    def rates(self) -> np.ndarray:
        return np.array([r for r, _ in self.segments])

    @property
    def intercepts(self) -> np.ndarray:
        return np.array([w for _, w in self.segments])

    @property
    def limiting_rate(self) -> float:
        """``lim n / T(n)``, the largest segment rate."""
        return float(self.rates.max())

    def evaluate(self, n):
        """Time bound for packets ``0..n``; accepts scalars or arrays."""
        n_arr = np.asarray(n, dtype=float)
        if np.any(n_arr < 0):
            raise ValueError("packet index must be >= 0")
        if self.domain_limit is not None and np.any(n_arr > self.domain_limit):
            raise DomainExceededError(
                f"packet index beyond domain limit {self.domain_limit}")
        vals = np.min(n_arr[..., None] / self.rates + self.intercepts, axis=-1)
        return float(vals) if vals.ndim == 0 else vals

    def time_horizon(self) -> float:
        """Largest time covered by the estimate (``inf`` when unrestricted)."""
        if self.domain_limit is None:
            return math.inf
        return self.evaluate(self.domain_limit)

    def to_dict(self) -> dict:
        return {
            "segments": [{"rate": r, "intercept_s": w} for r, w in self.segments],
            "epsilon": self.epsilon_total,
            "domain_limit": self.domain_limit,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "ServiceCurveEstimate":
        return cls(
            segments=tuple((s["rate"], s["intercept_s"]) for s in doc["segments"]),
            epsilon_total=doc["epsilon"],
            domain_limit=doc.get("domain_limit"),
        )

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "ServiceCurveEstimate":
        return cls.from_dict(json.loads(text))

    def write_csv(self, fh: IO[str], grid: Iterable[float]) -> None:
        writer = csv.writer(fh)
        writer.writerow(["n_packets", "T_S_seconds"])
        for n in grid:
            writer.writerow([n, repr(self.evaluate(n))])


def f_transform(delay_percentiles: Mapping[float, float], eps_per_rate: float,
                domain_limit: int | None = None) -> ServiceCurveEstimate:
    """Build ``T(n) = inf_r {n / r + W(r)}`` from per-rate delay percentiles.

    Rates whose percentile is infinite add no segment but still count toward
    ``epsilon_total``, which is ``len(delay_percentiles) * eps_per_rate``
    (capped at 1).
    """
    if not delay_percentiles:
        raise EmptyEstimateError("no probing rates given")
    for r in delay_percentiles:
        if not r > 0:
            raise ValueError(f"probing rates must be positive, got {r}")
    segments = tuple(
        (float(r), float(w)) for r, w in sorted(delay_percentiles.items())
        if math.isfinite(w)
    )
    if not segments:
        raise EmptyEstimateError("all delay percentiles are infinite")
    eps_total = min(1.0, len(delay_percentiles) * eps_per_rate)
    return ServiceCurveEstimate(segments, eps_total, domain_limit)


def pseudo_inverse(curve: ServiceCurveEstimate, t: float) -> int:
    """``min {n >= 0 : T(n + 1) > t}``, the packets guaranteed by time ``t``.

    Found by bracketing and bisection directly on ``curve.evaluate``.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if curve.domain_limit is not None and t >= curve.evaluate(curve.domain_limit):
        raise DomainExceededError(
            f"t={t} exceeds the time horizon {curve.evaluate(curve.domain_limit)} of the estimate")
    if curve.evaluate(1) > t:
        return 0
    lo, hi = 0, 1  # evaluate(lo + 1) <= t < evaluate(hi + 1) once bracketed
    while curve.evaluate(hi + 1) <= t:
        lo, hi = hi, 2 * hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if curve.evaluate(mid + 1) > t:
            hi = mid
        else:
            lo = mid
    return hi


# ---------------------------------------------------------------------------
# Min-plus curves
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MinPlusCurve:
    """Nondecreasing piecewise-linear ``S(t)`` given by breakpoints.

    Between breakpoints the curve is linear; after the last breakpoint it
    continues with ``final_slope`` (packets per second, may be ``inf``).
    """

    times: np.ndarray
    values: np.ndarray
    final_slope: float
    epsilon_total: float = 0.0

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size == 0:
            raise ValueError("times and values must be nonempty 1-d arrays of equal length")
        if t[0] != 0.0 or np.any(np.diff(t) <= 0):
            raise ValueError("breakpoints must start at t=0 and increase strictly")
        if np.any(np.diff(v) < 0) or self.final_slope < 0:
            raise ValueError("min-plus curve must be nondecreasing")
        t.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @classmethod
    def delta(cls) -> "MinPlusCurve":
        """Identity of min-plus convolution: 0 at t=0, infinite afterwards."""
        return cls(np.array([0.0]), np.array([0.0]), math.inf)

    @classmethod
    def rate_latency(cls, rate: float, latency: float) -> "MinPlusCurve":
        if latency == 0:
            return cls(np.array([0.0]), np.array([0.0]), rate)
        return cls(np.array([0.0, latency]), np.array([0.0, 0.0]), rate)

    @classmethod
    def from_lines(cls, rates: Sequence[float], offsets: Sequence[float],
                   epsilon_total: float = 0.0) -> "MinPlusCurve":
        """Upper envelope ``max(0, max_i rates[i] * t - offsets[i])`` on ``t >= 0``."""
        lines = [(0.0, 0.0)] + [(float(r), float(b)) for r, b in zip(rates, offsets)]
        # start with the line that is largest at t=0; ties go to the steeper one
        cur = max(lines, key=lambda ln: (-ln[1], ln[0]))
        t_cur = 0.0
        times, values = [0.0], [max(0.0, -cur[1])]
        while True:
            best = None
            for r, b in lines:
                if r <= cur[0]:
                    continue
                t_x = (b - cur[1]) / (r - cur[0])
                if t_x < t_cur:
                    t_x = t_cur
                if best is None or t_x < best[0] or (t_x == best[0] and r > best[1][0]):
                    best = (t_x, (r, b))
            if best is None:
                break
            t_x, nxt = best
            if t_x > t_cur:
                times.append(t_x)
                values.append(cur[0] * t_x - cur[1])
            cur, t_cur = nxt, t_x
        return cls(np.array(times), np.array(values), cur[0], epsilon_total)

    def evaluate(self, t):
        t_arr = np.asarray(t, dtype=float)
        if np.any(t_arr < 0):
            raise ValueError("t must be >= 0")
        last_t, last_v = self.times[-1], self.values[-1]
        inner = np.interp(t_arr, self.times, self.values)
        with np.errstate(invalid="ignore"):
            tail = last_v + self.final_slope * (t_arr - last_t)
        out = np.where(t_arr > last_t, tail, inner)
        return float(out) if out.ndim == 0 else out

    def packetized(self, t):
        """``floor(S(t))``: the guarantee for packetized departures."""
        return np.floor(self.evaluate(t))

    def segment_slopes(self) -> np.ndarray:
        return np.append(np.diff(self.values) / np.diff(self.times), self.final_slope)

    def is_convex(self, tol: float = 1e-12) -> bool:
        s = self.segment_slopes()
        return bool(np.all(np.diff(s) >= -tol * np.maximum(1.0, np.abs(s[:-1]))))

    def to_dict(self) -> dict:
        return {
            "breakpoints": [{"t_s": t, "packets": v} for t, v in zip(self.times.tolist(), self.values.tolist())],
            "final_slope_pps": self.final_slope,
            "epsilon": self.epsilon_total,
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> "MinPlusCurve":
        bp = doc["breakpoints"]
        return cls(np.array([p["t_s"] for p in bp]), np.array([p["packets"] for p in bp]),
                   float(doc["final_slope_pps"]), doc.get("epsilon", 0.0))

    def write_csv(self, fh: IO[str], grid: Iterable[float]) -> None:
        writer = csv.writer(fh)
        writer.writerow(["t_seconds", "S_packets"])
        for t in grid:
            writer.writerow([t, repr(self.evaluate(t))])


def legendre_transform(backlog_percentiles: Mapping[float, float]) -> MinPlusCurve:
    """``S(t) = max(0, sup_r {r t - B(r)})`` for per-rate backlog percentiles (packets)."""
    if not backlog_percentiles:
        raise ValueError("legendre_transform needs at least one rate")
    rates, offsets = [], []
    for r, b in backlog_percentiles.items():
        if not r > 0 or not b >= 0:
            raise ValueError(f"need rate > 0 and backlog >= 0, got ({r}, {b})")
        if math.isfinite(b):
            rates.append(r)
            offsets.append(b)
    return MinPlusCurve.from_lines(rates, offsets)


def minplus_convolve(s1: MinPlusCurve, s2: MinPlusCurve) -> MinPlusCurve:
    """Min-plus convolution of two convex curves by merging segments in slope order."""
    if not (s1.is_convex() and s2.is_convex()):
        raise ValueError("minplus_convolve requires convex operands")
    pieces = []
    for c in (s1, s2):
        slopes = c.segment_slopes()
        lengths = np.append(np.diff(c.times), math.inf)
        pieces.extend(zip(slopes.tolist(), lengths.tolist()))
    pieces.sort(key=lambda p: p[0])
    t, v = 0.0, float(s1.values[0] + s2.values[0])
    times, values = [t], [v]
    for slope, length in pieces:
        if math.isinf(length):
            return MinPlusCurve(np.array(times), np.array(values), slope,
                                s1.epsilon_total + s2.epsilon_total)
        if t + length <= t:  # segment shorter than the time resolution
            continue
        t += length
        v += slope * length
        times.append(t)
        values.append(v)
    raise AssertionError("unreachable: every curve ends with an unbounded segment")


def concave_conjugate(s: Sequence[float], v: Sequence[float], n) -> np.ndarray:
    """``inf_i {s_i n - v_i}`` evaluated at the points ``n`` (any reals)."""
    s_arr = np.asarray(s, dtype=float)
    v_arr = np.asarray(v, dtype=float)
    n_arr = np.asarray(n, dtype=float)
    return np.min(n_arr[..., None] * s_arr - v_arr, axis=-1)


def legendre_self_inverse_check(concave_fn: Mapping[float, float], rtol: float = 1e-9) -> bool:
    """Whether conjugating twice reproduces the sampled function on its grid.

    The first transform is a concave piecewise-linear function of ``n`` whose
    kinks lie among the pairwise intersections of the lines ``s_i n - v_i``;
    the second infimum over real ``n`` is therefore attained on that finite
    candidate set. Non-concave input comes back as its concave hull, so the
    check fails.
    """
    s = np.array(sorted(concave_fn), dtype=float)
    v = np.array([concave_fn[k] for k in sorted(concave_fn)], dtype=float)
    ds = s[:, None] - s[None, :]
    dv = v[:, None] - v[None, :]
    iu = np.triu_indices(len(s), k=1)
    candidates = np.append(dv[iu] / ds[iu], 0.0)
    t_vals = concave_conjugate(s, v, candidates)
    back = np.min(s[:, None] * candidates[None, :] - t_vals[None, :], axis=1)
    return bool(np.all(np.abs(back - v) <= rtol * np.maximum(1.0, np.abs(v))))


# ---------------------------------------------------------------------------
# Max-plus convolution and packetizer
# ---------------------------------------------------------------------------


def maxplus_convolve(a: Sequence[float], s: Sequence[float]) -> np.ndarray:
    """``(a (x) s)(n) = max_{0 <= nu <= n} {a(nu) + s(n - nu)}``, O(N^2)."""
    a_arr = np.asarray(a, dtype=float)
    s_arr = np.asarray(s, dtype=float)
    if a_arr.shape != s_arr.shape or a_arr.ndim != 1:
        raise ValueError("maxplus_convolve needs two 1-d sequences of equal length")
    out = np.empty_like(a_arr)
    for n in range(a_arr.size):
        out[n] = np.max(a_arr[: n + 1] + s_arr[n::-1])
    return out


def packetize(x: float) -> int:
    """Unit-packet packetizer ``floor(x)``."""
    if not (x >= 0 and math.isfinite(x)):
        raise ValueError(f"packetize needs a finite x >= 0, got {x}")
    return int(math.floor(x))


# ---------------------------------------------------------------------------
# Analytic bounds for the Bernoulli On-Off server
# ---------------------------------------------------------------------------


def negative_binomial_slots(successes: int, p: float, level: float) -> int:
    """Smallest ``k`` with ``P[K <= k] >= level``, ``K`` the slots needed for
    ``successes`` Bernoulli(p) successes.

    The pmf ``C(k-1, m-1) p^m (1-p)^(k-m)`` is built with a log-space
    recurrence in ``k`` and accumulated with ``logaddexp`` so that large
    ``successes`` do not underflow.
    """
    m = int(successes)
    if m < 1:
        raise ValueError("successes must be >= 1")
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    if not 0 < level <= 1:
        raise ValueError("level must lie in (0, 1]")
    if p == 1.0:
        return m
    log_q = math.log1p(-p)
    log_level = math.log(level)
    log_pmf0 = m * math.log(p)
    log_cdf = -math.inf
    start = m
    mean, sd = m / p, math.sqrt(m * (1 - p)) / p
    width = max(64, int(mean + 12 * sd - m) + 64)
    while True:
        k = np.arange(start, start + width, dtype=float)
        # ratio pmf(k+1)/pmf(k) = k / (k - m + 1) * q
        steps = np.log(k[:-1]) - np.log(k[:-1] - m + 1) + log_q
        log_pmf = log_pmf0 + np.concatenate(([0.0], np.cumsum(steps)))
        log_cdf_run = np.logaddexp.accumulate(np.concatenate(([log_cdf], log_pmf)))[1:]
        hit = np.nonzero(log_cdf_run >= log_level)[0]
        if hit.size:
            return int(start + hit[0])
        log_cdf = log_cdf_run[-1]
        last = k[-1]
        log_pmf0 = log_pmf[-1] + math.log(last) - math.log(last - m + 1) + log_q
        start += width


def onoff_bounds(p: float, eps: float, n: int) -> tuple[int, int]:
    """Analytic ``(lower, upper)`` slot bounds for serving packets ``0..n``.

    ``lower`` is the ``(1 - eps)`` quantile of the negative binomial slot count
    for ``n + 1`` successes; ``upper`` spreads ``eps`` evenly over the ``n + 1``
    offsets with the union bound, i.e. uses level ``1 - eps / (n + 1)``.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    if n < 0:
        raise ValueError("n must be >= 0")
    lower = negative_binomial_slots(n + 1, p, 1.0 - eps)
    upper = negative_binomial_slots(n + 1, p, 1.0 - eps / (n + 1))
    return lower, upper
