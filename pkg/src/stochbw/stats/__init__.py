"""Statistical tools: stationarity tests, percentile CIs and tail fits."""
from .percentiles import PercentileEstimate, ci_ranks, majority_pass_probability, percentile_with_ci
from .tail import (DegenerateFitError, GpdTailFit, InsufficientTailError, gpd_fit, gpd_pwm,
                   pot_estimate, pot_quantile)
from .unitroot import CRITICAL_VALUE_5PCT, ErsResult, ers_statistic, schwert_lags, trend_test

__all__ = [
    "CRITICAL_VALUE_5PCT", "DegenerateFitError", "ErsResult", "GpdTailFit",
    "InsufficientTailError", "PercentileEstimate", "ci_ranks", "ers_statistic", "gpd_fit",
    "gpd_pwm", "majority_pass_probability", "percentile_with_ci", "pot_estimate",
    "pot_quantile", "schwert_lags", "trend_test",
]
