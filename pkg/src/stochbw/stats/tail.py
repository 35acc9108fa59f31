"""Peaks-over-threshold tail estimation with the generalized Pareto distribution.

Exceedances ``y = x - u`` over an empirical threshold ``u`` are fitted by
maximum likelihood, profiling the likelihood over ``theta = xi / sigma``.
Probability-weighted moments serve as fallback when the likelihood search
ends on the boundary of its range.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .percentiles import PercentileEstimate

MIN_SAMPLES = 100
MIN_EXCEEDANCES = 20
XI_FLOOR = -1.0


class InsufficientTailError(ValueError):
    """Too few exceedances above the threshold for a tail fit."""


class DegenerateFitError(ValueError):
    """Exceedances carry no spread, so no scale can be fitted."""


@dataclass(frozen=True)
class GpdTailFit:
    shape: float
    scale: float
    threshold: float
    exceedance_fraction: float
    sample_count: int
    method: str = "mle"
    exceedances: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def qq_distance(self) -> float:
        """Max gap between empirical and fitted exceedance quantiles, in units of scale.

        A crude goodness-of-fit diagnostic; values well above 1 suggest the
        tail is not generalized Pareto.
        """
        y = np.sort(self.exceedances)
        k = y.shape[0]
        probs = (np.arange(1, k + 1) - 0.5) / k
        model = _gpd_ppf(probs, self.shape, self.scale)
        return float(np.max(np.abs(y - model)) / self.scale)


def _gpd_ppf(prob, xi, sigma):
    tail = -np.log1p(-np.asarray(prob))
    if xi == 0.0:
        return sigma * tail
    return sigma * np.expm1(xi * tail) / xi


def gpd_pwm(y: np.ndarray) -> tuple[float, float]:
    """Hosking-Wallis probability-weighted-moment estimates ``(xi, sigma)``."""
    ys = np.sort(y)
    k = ys.shape[0]
    a0 = ys.mean()
    a1 = np.mean((1.0 - (np.arange(1, k + 1) - 0.35) / k) * ys)
    denom = a0 - 2.0 * a1
    xi = 2.0 - a0 / denom
    sigma = 2.0 * a0 * a1 / denom
    return float(xi), float(sigma)


def _profile_nll(u, y, ybar):
    """GPD negative log-likelihood profiled over ``theta = u / ybar``.

    ``u`` broadcasts against the leading axes of ``y``; the last axis of ``y``
    holds the exceedances of one sample.
    """
    k = y.shape[-1]
    theta = u / ybar
    with np.errstate(invalid="ignore", divide="ignore"):
        logs = np.log1p(theta[..., None] * y[..., None, :])
        s = logs.sum(axis=-1)
        xi = s / k
        sigma = xi / theta
        nll = k * np.log(sigma) + (1.0 + 1.0 / xi) * s
    bad = ~np.isfinite(nll) | (xi < XI_FLOOR) | (sigma <= 0)
    return np.where(bad, np.inf, nll)


def _u_grid(y_min_ratio: float, points: int = 240) -> np.ndarray:
    # u = theta * ybar equals xi / (1 - xi) for the fitted scale; support needs u > -ybar / ymax
    lo = max(-0.5, -y_min_ratio * (1.0 - 1e-9))
    neg = -np.geomspace(-lo, 1e-5, points // 3) if lo < 0 else np.empty(0)
    pos = np.geomspace(1e-5, 200.0, points - points // 3)
    return np.concatenate((neg, pos))


def _mle(y: np.ndarray) -> tuple[float, float] | None:
    ybar = y.mean()
    grid = _u_grid(ybar / y.max())
    nll = _profile_nll(grid, y, ybar)
    i = int(np.argmin(nll))
    if not np.isfinite(nll[i]) or i == grid.shape[0] - 1:
        return None
    res = optimize.minimize_scalar(
        lambda v: float(np.squeeze(_profile_nll(np.array(v), y, ybar))),
        bounds=(grid[max(i - 1, 0)], grid[i + 1]), method="bounded",
        options={"xatol": 1e-12})
    u, best = (float(res.x), float(res.fun)) if res.fun <= nll[i] else (float(grid[i]), float(nll[i]))
    if y.shape[0] * (math.log(ybar) + 1.0) <= best:
        return 0.0, float(ybar)
    theta = u / ybar
    xi = float(np.mean(np.log1p(theta * y)))
    if xi <= XI_FLOOR + 1e-6:
        return None
    return xi, xi / theta


def gpd_fit(samples, threshold_quantile: float = 0.9) -> GpdTailFit:
    """Fit a generalized Pareto tail above the empirical ``threshold_quantile``."""
    x = np.asarray(samples, dtype=float)
    x = x[np.isfinite(x)]
    if x.shape[0] < MIN_SAMPLES:
        raise ValueError(f"POT fit needs at least {MIN_SAMPLES} finite samples, got {x.shape[0]}")
    if not 0.5 < threshold_quantile < 1:
        raise ValueError("threshold_quantile must lie in (0.5, 1)")
    u = float(np.quantile(x, threshold_quantile))
    y = x[x > u] - u
    if y.shape[0] < MIN_EXCEEDANCES:
        raise InsufficientTailError(
            f"only {y.shape[0]} exceedances above the threshold, need {MIN_EXCEEDANCES}")
    if np.ptp(y) <= 1e-12 * max(1.0, float(y.max())):
        raise DegenerateFitError("all exceedances are equal")
    est = _mle(y)
    method = "mle"
    if est is None:
        est = gpd_pwm(y)
        method = "pwm"
    xi, sigma = est
    y.setflags(write=False)
    return GpdTailFit(xi, sigma, u, y.shape[0] / x.shape[0], int(x.shape[0]), method, y)


def pot_quantile(fit: GpdTailFit, eps: float) -> float:
    """Delay exceeded with probability ``eps`` under the fitted tail."""
    zeta = fit.exceedance_fraction
    if not 0 < eps:
        raise ValueError("eps must be positive")
    if eps > zeta * (1 + 1e-12):
        raise ValueError(
            f"eps={eps} lies above the exceedance fraction {zeta}; use the empirical percentile")
    log_ratio = math.log(zeta / eps)
    if fit.shape == 0.0:
        return fit.threshold + fit.scale * log_ratio
    return fit.threshold + fit.scale * math.expm1(fit.shape * log_ratio) / fit.shape


def _bootstrap_quantiles(y: np.ndarray, zeta: float, eps: float, u: float,
                         resamples: int, rng: np.random.Generator) -> np.ndarray:
    k = y.shape[0]
    boot = y[rng.integers(0, k, size=(resamples, k))]
    ybar = boot.mean(axis=1)
    out = np.empty(resamples)
    grid = _u_grid(float(np.min(ybar / boot.max(axis=1))))
    nll = _profile_nll(grid[None, :], boot, ybar[:, None])
    best = np.argmin(nll, axis=1)
    exp_nll = k * (np.log(ybar) + 1.0)
    log_ratio = math.log(zeta / eps)
    for b in range(resamples):
        i = best[b]
        if not np.isfinite(nll[b, i]) or exp_nll[b] <= nll[b, i]:
            out[b] = u + ybar[b] * log_ratio
            continue
        theta = grid[i] / ybar[b]
        xi = float(np.mean(np.log1p(theta * boot[b])))
        sigma = xi / theta
        out[b] = u + sigma * math.expm1(xi * log_ratio) / xi
    return out


def pot_estimate(samples, eps: float, threshold_quantile: float = 0.9,
                 confidence: float = 0.95, resamples: int = 200,
                 rng: np.random.Generator | None = None) -> tuple[PercentileEstimate, GpdTailFit]:
    """POT percentile with a nonparametric bootstrap CI over the exceedance set."""
    fit = gpd_fit(samples, threshold_quantile)
    value = pot_quantile(fit, eps)
    if rng is None:
        rng = np.random.default_rng(0)
    if resamples > 0:
        qs = _bootstrap_quantiles(fit.exceedances, fit.exceedance_fraction, eps,
                                  fit.threshold, resamples, rng)
        alpha = 1.0 - confidence
        lo, hi = np.quantile(qs, [alpha / 2, 1 - alpha / 2])
        lo, hi = min(float(lo), value), max(float(hi), value)
    else:
        lo = hi = value
    return PercentileEstimate(value, lo, hi, 1.0 - eps, confidence, "pot"), fit
