"""DF-GLS unit-root test (Elliott, Rothenberg and Stock) and the trend test.

The test GLS-demeans the series with local-to-unity parameter ``c = -7``,
then runs an augmented Dickey-Fuller regression without deterministic terms
and reports the t-statistic of the lagged level.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

CBAR_CONSTANT = -7.0
#: 5% critical value of the constant-only DF-GLS test.
CRITICAL_VALUE_5PCT = -1.95
MIN_LENGTH = 20


@dataclass(frozen=True)
class ErsResult:
    statistic: float
    critical_value: float
    stationary: bool
    lag_order: int


def schwert_lags(nobs: int) -> int:
    return int(math.floor(4.0 * (nobs / 100.0) ** 0.25))


def gls_demean(y: np.ndarray, cbar: float = CBAR_CONSTANT) -> np.ndarray:
    nobs = y.shape[0]
    alpha = 1.0 + cbar / nobs
    y_q = np.empty_like(y)
    y_q[0] = y[0]
    y_q[1:] = y[1:] - alpha * y[:-1]
    z_q = np.full(nobs, 1.0 - alpha)
    z_q[0] = 1.0
    beta = (z_q @ y_q) / (z_q @ z_q)
    return y - beta


def _is_constant(y: np.ndarray) -> bool:
    scale = max(1.0, float(np.max(np.abs(y))))
    return float(np.ptp(y)) <= 1e-12 * scale


def ers_statistic(series, lags: int | None = None,
                  critical_value: float = CRITICAL_VALUE_5PCT) -> ErsResult:
    """DF-GLS test of the unit-root null; ``stationary`` means the null is rejected.

    ``lags`` defaults to the Schwert rule ``floor(4 (T/100)^(1/4))``. A
    constant series is declared stationary with statistic ``-inf``.
    """
    y = np.asarray(series, dtype=float)
    if y.ndim != 1:
        raise ValueError("series must be one-dimensional")
    nobs = y.shape[0]
    if nobs < MIN_LENGTH:
        raise ValueError(f"ERS test needs at least {MIN_LENGTH} observations, got {nobs}")
    if not np.all(np.isfinite(y)):
        raise ValueError("ERS test needs finite values")
    p = schwert_lags(nobs) if lags is None else int(lags)
    if _is_constant(y):
        return ErsResult(-math.inf, critical_value, True, p)

    yd = gls_demean(y)
    dy = np.diff(yd)
    m = dy.shape[0] - p  # usable observations
    X = np.empty((m, p + 1))
    X[:, 0] = yd[p:-1]
    for j in range(1, p + 1):
        X[:, j] = dy[p - j: p - j + m]
    lhs = dy[p:]

    coef, _, rank, _ = np.linalg.lstsq(X, lhs, rcond=None)
    resid = lhs - X @ coef
    dof = m - X.shape[1]
    if dof <= 0:
        raise ValueError("series too short for the requested lag order")
    sigma2 = float(resid @ resid) / dof
    if rank < X.shape[1]:
        xtx_inv = np.linalg.pinv(X.T @ X)
    else:
        xtx_inv = np.linalg.inv(X.T @ X)
    se = math.sqrt(max(sigma2 * xtx_inv[0, 0], 0.0))
    if se == 0.0:
        stat = -math.inf if coef[0] < 0 else math.inf
    else:
        stat = float(coef[0] / se)
    return ErsResult(stat, critical_value, stat < critical_value, p)


def trend_test(series) -> bool:
    """Passed when the ERS statistic of the whole series is below that of its first half."""
    y = np.asarray(series, dtype=float)
    if y.shape[0] < 2 * MIN_LENGTH:
        raise ValueError(f"trend test needs at least {2 * MIN_LENGTH} observations")
    full = ers_statistic(y).statistic
    half = ers_statistic(y[: y.shape[0] // 2]).statistic
    return full < half
