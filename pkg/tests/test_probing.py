import math

import numpy as np
import pytest

from stochbw.maxplus import EmptyEstimateError, TimestampSeries
from stochbw.probing import (DelaySampleSet, ProbingConfig, RateGuardError, adaptive_train_measure,
                             apply_loss_policy, estimate_delay_percentile, estimate_limiting_rate,
                             expected_rate_count, fixed_train_measure, run_estimation, select_rates)
from stochbw.sim import NetworkScenario


def reference_rate_count(k: int, accuracy: int = 1) -> int:
    """Step count of increase-then-bisect on integer rates, passing iff rate <= k."""
    steps, r = 1, accuracy
    while 2 * r <= k:
        r, steps = 2 * r, steps + 1
    lo, hi, steps = r, 2 * r, steps + 1
    while hi - lo > accuracy:
        mid = (lo + hi) // 2
        lo, hi = (mid, hi) if mid <= k else (lo, mid)
        steps += 1
    return steps


# -- rate selection ---------------------------------------------------------------------


def test_select_rates_worked_example():
    sel = select_rates(ProbingConfig(r_acc=4), lambda r: r <= 50)
    assert sel.rates == (4, 8, 16, 32, 64, 48, 56, 52)
    assert sel.bracket == (48, 52)
    assert len(sel.rates) == expected_rate_count(50, 4) == 8
    assert expected_rate_count(12.5 * 4, 4) == 8


@pytest.mark.parametrize("frac", [0.0, 0.5])
def test_select_rates_count_exhaustive(frac):
    cfg = ProbingConfig(r_acc=1)
    for k in range(1, 1025):
        thr = k + frac
        sel = select_rates(cfg, lambda r: r <= thr)
        assert len(sel.rates) == expected_rate_count(thr, 1) == reference_rate_count(k)
        lo, hi = sel.bracket
        assert hi - lo <= 1 and lo <= thr < hi
        assert sel.largest_passing == lo


def test_select_rates_edge_cases():
    sel = select_rates(ProbingConfig(r_acc=10), lambda r: False)
    assert sel.rates == (10,) and sel.bracket == (0.0, 10)
    with pytest.raises(RateGuardError):
        select_rates(ProbingConfig(r_acc=1, max_rate=1000), lambda r: True)


def test_config_validation():
    with pytest.raises(ValueError):
        ProbingConfig(r_acc=0)
    with pytest.raises(ValueError):
        ProbingConfig(r_acc=1, n_min=200, n_max=100)
    with pytest.raises(ValueError):
        ProbingConfig(r_acc=1, mode="fixed_short", iterations=10)
    with pytest.raises(ValueError):
        ProbingConfig(r_acc=1, mode="sometimes")


# -- loss policy --------------------------------------------------------------------------


def series_with_losses(lost_idx, n=200):
    arr = np.arange(n) / 100.0
    dep = arr + 0.01
    dep[list(lost_idx)] = math.inf
    return TimestampSeries(arr, dep)


def test_loss_policy_examples():
    s = series_with_losses([])
    assert apply_loss_policy(s, 0.05) is s
    s = series_with_losses([3, 70, 150])
    out = apply_loss_policy(s, 0.05)
    assert math.isfinite(out.delays[-1])
    out = apply_loss_policy(series_with_losses(range(10, 25)), 0.05)
    assert out.delays[-1] == math.inf
    assert np.sum(np.isinf(out.departures)) == 16


# -- percentile step ------------------------------------------------------------------------


def sample_set(x):
    x = np.asarray(x, float)
    return DelaySampleSet(1.0, x, 100, 1.0, 1.0)


def test_percentile_direct_and_pot():
    rng = np.random.default_rng(0)
    x = rng.exponential(size=250)
    est = estimate_delay_percentile(sample_set(x), ProbingConfig(r_acc=1, eps_w=0.05, iterations=250))
    assert est.method == "direct" and est.value == np.sort(x)[math.ceil(0.95 * 250) - 1]
    est = estimate_delay_percentile(sample_set(x), ProbingConfig(r_acc=1, eps_w=5e-4, iterations=250))
    assert est.method == "pot" and est.value > np.max(x) * 0.8
    est = estimate_delay_percentile(sample_set(np.full(250, np.inf)), ProbingConfig(r_acc=1, eps_w=5e-4))
    assert est.value == math.inf


# -- measurement procedures -------------------------------------------------------------------


@pytest.fixture(scope="module")
def dumbbell():
    return NetworkScenario.dumbbell(seed=0)


def test_adaptive_far_below_limit(dumbbell):
    s = adaptive_train_measure(dumbbell, 200, ProbingConfig(r_acc=40, iterations=51, seed=1))
    # the test's power on 100-packet trains sits just below 1 - eps_w, so a doubling or two may occur
    assert s.feasible and s.train_length_used <= 400
    assert s.count == 51 and np.all(np.isfinite(s.samples))
    assert s.stationary_share >= 0.95


def test_adaptive_near_limit_grows_train(dumbbell):
    s = adaptive_train_measure(dumbbell, 470, ProbingConfig(r_acc=40, iterations=51, seed=1))
    assert s.train_length_used >= 800
    assert [h[0] for h in s.history] == [100 * 2**k for k in range(len(s.history))]


def test_adaptive_above_limit_infinite(dumbbell):
    s = adaptive_train_measure(dumbbell, 650, ProbingConfig(r_acc=40, iterations=51, seed=1))
    assert not s.feasible and np.all(np.isinf(s.samples))


def test_adaptive_truncation_flag(dumbbell):
    cfg = ProbingConfig(r_acc=40, iterations=21, seed=2, n_min=100, n_max=199)
    s = adaptive_train_measure(dumbbell, 495, cfg)
    if not s.feasible and s.history[-1][2] > 0.5:
        assert s.truncated and np.all(np.isinf(s.samples))


def test_majority_improves_with_iterations(dumbbell):
    below = {I: np.mean([fixed_train_measure(dumbbell, 480, ProbingConfig(
        r_acc=40, mode="fixed_short", iterations=I, seed=s)).feasible for s in range(30)])
        for I in (1, 51)}
    assert below[51] > below[1]
    above = [fixed_train_measure(dumbbell, 600, ProbingConfig(
        r_acc=40, mode="fixed_short", iterations=11, seed=s)).feasible for s in range(30)]
    assert not any(above)


def test_limiting_rate_bracket(dumbbell):
    hits = 0
    for s in range(20):
        mid, (lo, hi) = estimate_limiting_rate(dumbbell, ProbingConfig(
            r_acc=40, mode="fixed_short", iterations=51, seed=s))
        assert hi - lo <= 40 and mid == (lo + hi) / 2
        hits += lo <= 500 <= hi
    assert hits >= 14


# -- pipeline --------------------------------------------------------------------------------


def test_estimation_accounting_and_determinism(dumbbell):
    cfg = ProbingConfig(r_acc=125, iterations=21, seed=3)
    a = run_estimation(dumbbell, cfg)
    assert a.curve.epsilon_total == pytest.approx(len(a.selection.rates) * cfg.eps_w)
    assert set(a.sample_sets) == set(a.selection.rates)
    assert a.curve.limiting_rate == a.selection.largest_passing
    b = run_estimation(dumbbell, ProbingConfig(r_acc=125, iterations=21, seed=3, jobs=2))
    assert a.curve.to_dict() == b.curve.to_dict()
    for r in a.sample_sets:
        np.testing.assert_array_equal(a.sample_sets[r].samples, b.sample_sets[r].samples)


def test_fixed_short_domain(dumbbell):
    cfg = ProbingConfig(r_acc=125, iterations=21, seed=3, mode="fixed_short", train_length=150)
    res = run_estimation(dumbbell, cfg)
    assert res.curve.domain_limit == 149
    with pytest.raises(ValueError):
        res.curve.evaluate(150)


def test_empty_estimate():
    sc = NetworkScenario.onoff(0.1, seed=1)
    with pytest.raises(EmptyEstimateError):
        run_estimation(sc, ProbingConfig(r_acc=0.5, iterations=21, seed=0))
