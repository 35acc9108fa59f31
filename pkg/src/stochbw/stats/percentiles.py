"""Order-statistic percentiles with binomial confidence intervals."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

MIN_SAMPLES = 10


@dataclass(frozen=True)
class PercentileEstimate:
    """A ``level`` percentile of a delay distribution (seconds, may be ``inf``)."""

    value: float
    ci_low: float
    ci_high: float
    level: float
    confidence: float
    method: str = "direct"

    def __post_init__(self):
        if not (self.ci_low <= self.value <= self.ci_high):
            raise ValueError("percentile estimate must satisfy ci_low <= value <= ci_high")

    @property
    def is_finite(self) -> bool:
        return math.isfinite(self.value)


def ci_ranks(count: int, level: float, confidence: float) -> tuple[int, int]:
    """Narrowest 1-based rank bracket ``(l, u)`` covering the ``level`` quantile.

    Coverage of ``[X_(l), X_(u)]`` is ``P[l <= B <= u - 1]`` for
    ``B ~ Binomial(count, level)``. Rank ``count + 1`` stands for ``+inf``.
    The bracket always contains the point-estimate rank ``ceil(level * count)``;
    ties in width go to the bracket centred closest to it.
    """
    k = max(1, math.ceil(level * count))
    cdf = stats.binom.cdf(np.arange(count + 1), count, level)
    lo = np.arange(1, k + 1)
    # smallest j with cdf[j] - cdf[lo - 1] >= confidence, then u = j + 1
    j = np.searchsorted(cdf, cdf[lo - 1] + confidence - 1e-15, side="left")
    ok = j <= count
    if not np.any(ok):
        return 1, count + 1
    lo, hi = lo[ok], np.maximum(j[ok] + 1, k)
    order = np.lexsort((lo, np.abs((hi + lo) / 2 - k), hi - lo))
    return int(lo[order[0]]), int(hi[order[0]])


def _rank_value(sorted_x: np.ndarray, rank: int) -> float:
    if rank > sorted_x.shape[0]:
        return math.inf
    return float(sorted_x[rank - 1])


def percentile_with_ci(samples, level: float, confidence: float = 0.95) -> PercentileEstimate:
    """Direct order-statistic estimate of the ``level`` percentile.

    Infinite samples sort above every finite one. When their share reaches
    ``1 - level`` the percentile itself is infinite.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.shape[0] < MIN_SAMPLES:
        raise ValueError(f"need at least {MIN_SAMPLES} samples, got {x.size}")
    if not 0 < level < 1 or not 0 < confidence < 1:
        raise ValueError("level and confidence must lie in (0, 1)")
    if np.any(np.isnan(x)):
        raise ValueError("samples must not contain NaN")
    count = x.shape[0]
    xs = np.sort(x, kind="stable")
    rank = math.ceil(level * count)
    lo, hi = ci_ranks(count, level, confidence)
    inf_share = float(np.mean(np.isinf(x)))
    eps = 1.0 - level
    value = math.inf if inf_share >= eps - 1e-12 else _rank_value(xs, rank)
    return PercentileEstimate(value, _rank_value(xs, lo), max(_rank_value(xs, hi), value),
                              level, confidence, "direct")


def majority_pass_probability(p_single: float, iterations: int) -> float:
    """``P[Binomial(iterations, p_single) > iterations / 2]``."""
    if not 0 <= p_single <= 1:
        raise ValueError("p_single must lie in [0, 1]")
    if iterations < 1 or iterations % 2 == 0:
        raise ValueError("iterations must be an odd integer >= 1")
    return float(stats.binom.sf(iterations // 2, iterations, p_single))
