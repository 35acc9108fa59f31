import numpy as np
import pytest

from stochbw.baseline import (BacklogScan, LossUnsupportedError, active_slope, backlog_at_departures,
                              backlog_scan, deterministic_curve, measure_bmax, run_baseline,
                              scan_rates, to_minplus_grid)
from stochbw.maxplus import TimestampSeries
from stochbw.probing import ProbingConfig, run_estimation
from stochbw.sim import NetworkScenario, ProbeSpec, run_probe


def test_scan_rates_grid():
    assert scan_rates(160, 1200) == (160, 320, 480, 640, 800, 960, 1120)
    assert scan_rates(0.5, 1.5) == (0.5, 1.0, 1.5)
    with pytest.raises(ValueError):
        scan_rates(0, 10)


def test_unloaded_bmax():
    sc = NetworkScenario.constant_rate(1000)
    for r in (100, 500, 900):
        assert 0 <= measure_bmax(sc, r, 800) <= 1


def test_backlog_equals_rate_times_delay():
    sc = NetworkScenario.dumbbell(scheduler="fifo", seed=2)
    s = run_probe(sc, ProbeSpec(800, 450, sc.warmup_s))
    b = backlog_at_departures(s, 450)
    # brute force on the fluid arrival curve A(t) = r (t - T_A(0)) up to the train's end
    fluid = 450 * (s.departures - s.arrivals[0])
    arriving = fluid <= 800
    # arrival stamps are whole nanoseconds, hence the small tolerance
    np.testing.assert_allclose(b[arriving], (450 * s.delays)[arriving], atol=1e-6)


@pytest.mark.parametrize("r,n", [(1500, 800), (2000, 800), (1200, 400)])
def test_overload_backlog(r, n):
    sc = NetworkScenario.constant_rate(1000)
    assert abs(measure_bmax(sc, r, n) - (r - 1000) * n / r) <= 2


def test_losses_unsupported():
    s = TimestampSeries([0.0, 1.0, 2.0], [0.5, np.inf, 2.5])
    with pytest.raises(LossUnsupportedError):
        backlog_at_departures(s, 1.0)


def test_single_rate_curve():
    c = deterministic_curve(BacklogScan((10.0,), (5.0,), 800))
    np.testing.assert_allclose(c.evaluate(np.array([0.0, 0.5, 1.0, 3.0])), [0, 0, 5, 25])


def test_curves_convex_nondecreasing():
    sc = NetworkScenario.dumbbell(burst_law="pareto", scheduler="fifo", seed=4)
    res = run_baseline(sc, step=160, max_rate=1200, train_length=400, iterations=8)
    t = np.linspace(0, 2, 201)
    for c in res.curves:
        assert c.is_convex()
        v = c.evaluate(t)
        assert np.all(np.diff(v) >= -1e-9) and v[0] == 0
        slopes = np.append(c.segment_slopes(), c.final_slope)
        assert active_slope(c, 1e9) == slopes[-1]


def test_scan_is_seeded():
    sc = NetworkScenario.dumbbell(seed=4)
    a = backlog_scan(sc, (320, 640), 400, iteration=3)
    assert a == backlog_scan(sc, (320, 640), 400, iteration=3)
    assert a != backlog_scan(sc, (320, 640), 400, iteration=4)


def test_exponential_cross_overestimates():
    sc = NetworkScenario.dumbbell(seed=5)
    res = run_baseline(sc, step=160, max_rate=1200, train_length=800, iterations=20)
    assert np.median(res.slopes_at(0.8)) > sc.ground_truth_abw
    band = res.band(np.linspace(0, 0.8, 9))
    assert np.all(band.low <= band.mean) and np.all(band.mean <= band.high)


def test_agrees_with_stochastic_on_deterministic_server():
    sc = NetworkScenario.constant_rate(1000)
    est = run_estimation(sc, ProbingConfig(r_acc=40, iterations=11, seed=0))
    r_top = est.selection.largest_passing
    base = run_baseline(sc, step=40, max_rate=r_top, train_length=800, iterations=1)
    grid = np.linspace(0, 0.5, 101)
    det = base.curves[0].evaluate(grid)
    stoch = to_minplus_grid(est.curve, grid)
    assert np.max(np.abs(det - stoch)) <= 1.0
