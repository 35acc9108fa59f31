"""
Adaptive train lengths on a shared bottleneck
=============================================

A 1000 pkt/s link carries 500 pkt/s of bursty cross traffic at higher
priority, so the average available bandwidth is 500 pkt/s. The adaptive
procedure doubles the train length at a rate until the delay series look
stationary, which takes longer the closer the rate is to 500.

Run with ``python3 demos/dumbbell_adaptive.py`` (under a minute).
"""
from stochbw.probing import ProbingConfig, adaptive_train_measure, run_estimation
from stochbw.sim import NetworkScenario

for law in ("exponential", "pareto"):
    scenario = NetworkScenario.dumbbell(capacity_pps=1000, cross_pps=500, burst_law=law, seed=0)
    print(f"\n{law} cross traffic, ground truth {scenario.ground_truth_abw:g} pkt/s")
    for rate in (250, 400, 450):
        s = adaptive_train_measure(scenario, rate, ProbingConfig(r_acc=40, seed=0))
        steps = ", ".join(f"N={n}: {st:.2f}" for n, st, _ in s.history)
        print(f"  rate {rate:4d}: final N = {s.train_length_used:6d}   stationary share {steps}")

# %%
# The full pipeline: binary increase from 40 pkt/s, then binary search.
scenario = NetworkScenario.dumbbell(seed=3)
result = run_estimation(scenario, ProbingConfig(r_acc=40, seed=3))
print("\nprobed:", [f"{r:g}{'+' if ok else '-'}" for r, ok in
                    zip(result.selection.rates, result.selection.passed)])
print(f"limiting rate {result.curve.limiting_rate:g} pkt/s, bracket {result.selection.bracket}")
for n in (0, 100, 1000, 10000):
    print(f"  T_S({n}) = {result.curve.evaluate(n) * 1e3:8.1f} ms")
