import math

import numpy as np
import pytest
from scipy import stats

from stochbw.stats import (DegenerateFitError, InsufficientTailError, ci_ranks, ers_statistic,
                           gpd_fit, majority_pass_probability, percentile_with_ci, pot_estimate,
                           pot_quantile, schwert_lags, trend_test)
from stochbw.stats.tail import GpdTailFit

arch_unitroot = pytest.importorskip("arch.unitroot")


def ar1(n, phi, rng):
    e = rng.normal(size=n)
    y = np.empty(n)
    y[0] = e[0]
    for i in range(1, n):
        y[i] = phi * y[i - 1] + e[i]
    return y


def dfgls_by_hand(y, lags):
    """DF-GLS t-statistic from the textbook recipe, via numpy OLS on explicit columns."""
    T = len(y)
    a = 1 - 7.0 / T
    yq = np.r_[y[0], y[1:] - a * y[:-1]]
    zq = np.r_[1.0, np.full(T - 1, 1 - a)]
    yd = y - np.linalg.lstsq(zq[:, None], yq, rcond=None)[0][0]
    d = np.diff(yd)
    rows = range(lags, T - 1)
    X = np.array([[yd[t]] + [d[t - j] for j in range(1, lags + 1)] for t in rows])
    z = np.array([d[t] for t in rows])
    beta, *_ = np.linalg.lstsq(X, z, rcond=None)
    resid = z - X @ beta
    s2 = resid @ resid / (len(z) - X.shape[1])
    cov = s2 * np.linalg.inv(X.T @ X)
    return beta[0] / math.sqrt(cov[0, 0])


# -- ERS -------------------------------------------------------------------------------


@pytest.mark.parametrize("seed", range(6))
@pytest.mark.parametrize("kind", ["ar", "rw"])
def test_ers_matches_arch_and_hand_oracle(seed, kind):
    rng = np.random.default_rng(seed)
    y = ar1(400, 0.6, rng) if kind == "ar" else np.cumsum(rng.normal(size=400))
    res = ers_statistic(y)
    p = schwert_lags(400)
    assert res.lag_order == p == 5
    ref = arch_unitroot.DFGLS(y, lags=p, trend="c").stat
    assert res.statistic == pytest.approx(ref, abs=1e-6)
    assert res.statistic == pytest.approx(dfgls_by_hand(y, p), abs=1e-6)
    assert res.stationary == (res.statistic < -1.95)


def test_ers_examples():
    rng = np.random.default_rng(11)
    assert ers_statistic(rng.normal(size=400)).stationary
    assert not ers_statistic(np.cumsum(rng.normal(size=400))).stationary
    c = ers_statistic(np.full(50, 3.2))
    assert c.stationary and c.statistic == -math.inf
    with pytest.raises(ValueError):
        ers_statistic(np.arange(10.0))
    with pytest.raises(ValueError):
        ers_statistic(np.r_[np.arange(30.0), np.inf])


def test_ers_classification_rates():
    rng = np.random.default_rng(2024)
    iid = np.mean([ers_statistic(rng.normal(size=400)).stationary for _ in range(1000)])
    rw = np.mean([ers_statistic(np.cumsum(rng.normal(size=400))).stationary for _ in range(1000)])
    assert iid >= 0.90
    assert rw <= 0.10


def test_trend_test_examples():
    rng = np.random.default_rng(5)
    y = np.cumsum(0.5 + rng.normal(size=400))
    assert not trend_test(y)
    full, half = ers_statistic(y).statistic, ers_statistic(y[:200]).statistic
    assert trend_test(y) == (full < half)
    rate = np.mean([trend_test(ar1(400, 0.5, np.random.default_rng(s))) for s in range(100)])
    assert rate > 0.5
    with pytest.raises(ValueError):
        trend_test(np.arange(30.0))


# -- percentiles -------------------------------------------------------------------------


def brute_ci_ranks(count, level, conf):
    k = math.ceil(level * count)
    cdf = stats.binom.cdf(np.arange(-1, count + 1), count, level)  # cdf[j+1] = P[B <= j]
    best = None
    for lo in range(1, k + 1):
        for hi in range(k, count + 2):
            cov = cdf[hi] - cdf[lo]  # P[lo <= B <= hi - 1]
            if cov >= conf - 1e-15:
                key = (hi - lo, abs((hi + lo) / 2 - k), lo)
                if best is None or key < best[0]:
                    best = (key, (lo, hi))
                break
    return best[1] if best else (1, count + 1)


@pytest.mark.parametrize("count,level,conf", [(100, 0.95, 0.95), (250, 0.95, 0.95), (50, 0.5, 0.9),
                                              (30, 0.9, 0.99), (2000, 0.9995, 0.95)])
def test_ci_ranks_match_enumeration(count, level, conf):
    assert ci_ranks(count, level, conf) == brute_ci_ranks(count, level, conf)


def test_percentile_examples():
    x = np.arange(1.0, 101.0)
    est = percentile_with_ci(x, 0.95)
    assert est.value == 95.0
    lo, hi = ci_ranks(100, 0.95, 0.95)
    assert (est.ci_low, est.ci_high) == (x[lo - 1], x[hi - 1] if hi <= 100 else math.inf)
    est = percentile_with_ci(np.full(40, 2.5), 0.9)
    assert (est.value, est.ci_low, est.ci_high) == (2.5, 2.5, 2.5)
    x = np.r_[np.arange(90.0), np.full(10, np.inf)]
    assert percentile_with_ci(x, 0.95).value == math.inf
    with pytest.raises(ValueError):
        percentile_with_ci(np.arange(5.0), 0.9)


def test_percentile_ci_coverage():
    rng = np.random.default_rng(7)
    level = 0.9
    truth = -math.log(1 - level)
    hits = 0
    for _ in range(1000):
        e = percentile_with_ci(rng.exponential(size=200), level, 0.95)
        hits += e.ci_low <= truth <= e.ci_high
    assert hits / 1000 >= 0.95 - 0.03


def test_majority_probability():
    assert majority_pass_probability(1.0, 11) == 1.0
    assert majority_pass_probability(0.5, 11) == pytest.approx(0.5)
    direct = sum(math.comb(11, k) * 0.7**k * 0.3 ** (11 - k) for k in range(6, 12))
    assert majority_pass_probability(0.7, 11) == pytest.approx(direct, rel=1e-12)
    ps = np.linspace(0, 1, 21)
    vals = [majority_pass_probability(p, 11) for p in ps]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    assert [majority_pass_probability(0.6, i) for i in (11, 21, 51)] == sorted(
        majority_pass_probability(0.6, i) for i in (11, 21, 51))
    with pytest.raises(ValueError):
        majority_pass_probability(0.5, 10)


# -- tail ----------------------------------------------------------------------------------


def test_gpd_fit_exponential_and_pareto():
    rng = np.random.default_rng(3)
    fit = gpd_fit(rng.exponential(size=2000), 0.9)
    assert abs(fit.shape) <= 0.1
    assert fit.exceedance_fraction == pytest.approx(0.1, abs=1e-3)
    fit = gpd_fit(rng.pareto(1.5, size=2000) + 1.0, 0.9)
    assert abs(fit.shape - 1 / 1.5) <= 0.15


@pytest.mark.parametrize("seed,gen", [(0, "exp"), (1, "pareto"), (2, "bounded")])
def test_gpd_fit_matches_scipy_mle(seed, gen):
    rng = np.random.default_rng(seed)
    x = {"exp": lambda: rng.exponential(size=3000),
         "pareto": lambda: rng.pareto(1.5, size=3000),
         "bounded": lambda: stats.genpareto.rvs(-0.3, size=3000, random_state=seed)}[gen]()
    fit = gpd_fit(x, 0.9)
    u = np.quantile(x, 0.9)
    y = x[x > u] - u
    c, _, scale = stats.genpareto.fit(y, floc=0)
    assert fit.shape == pytest.approx(c, abs=2e-3)
    assert fit.scale == pytest.approx(scale, rel=2e-3)


def test_gpd_fit_errors():
    with pytest.raises(ValueError):
        gpd_fit(np.arange(50.0))
    with pytest.raises(DegenerateFitError):
        gpd_fit(np.r_[np.zeros(900), np.ones(100)], 0.9)
    with pytest.raises(InsufficientTailError):
        gpd_fit(np.r_[np.zeros(190), np.arange(10.0) + 1], 0.9)


def test_pot_quantile_closed_form_and_continuity():
    fit = GpdTailFit(0.0, 1.0, 2.0, 0.1, 1000)
    assert pot_quantile(fit, 0.01) == pytest.approx(2 + math.log(10), abs=1e-12)
    assert pot_quantile(fit, 0.1) == 2.0
    with pytest.raises(ValueError):
        pot_quantile(fit, 0.2)
    fit = GpdTailFit(0.3, 2.0, 1.0, 0.1, 1000)
    assert pot_quantile(fit, 0.01) == pytest.approx(1 + (2.0 / 0.3) * (10**0.3 - 1))
    assert pot_quantile(fit, 0.1) == pytest.approx(1.0)
    es = np.geomspace(1e-6, 0.1, 200)
    q = np.array([pot_quantile(fit, e) for e in es])
    assert np.all(np.diff(q) < 0)
    assert pot_quantile(fit, 0.1 * (1 - 1e-9)) == pytest.approx(1.0, abs=1e-6)
    small = GpdTailFit(1e-9, 1.0, 2.0, 0.1, 1000)
    assert pot_quantile(small, 1e-4) == pytest.approx(2 + math.log(1000), abs=1e-6)


def test_pot_agrees_with_direct_percentile():
    rng = np.random.default_rng(9)
    x = rng.exponential(size=2000)
    direct = percentile_with_ci(x, 1 - 5e-4)
    est, fit = pot_estimate(x, 5e-4, rng=np.random.default_rng(1))
    assert direct.ci_low <= est.value <= direct.ci_high
    assert est.ci_low <= est.value <= est.ci_high
    assert est.method == "pot"
    assert abs(est.value - math.log(2000)) < 1.5
    assert fit.qq_distance < 2.0
