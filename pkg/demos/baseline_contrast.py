"""
Deterministic baseline against the stochastic estimate
======================================================

The deterministic method scans rates on a fixed grid, records the largest
backlog each 800-packet train builds up, and takes a Legendre transform.
Under heavy-tailed cross traffic it reads the burst backlog as capacity,
so its long-run slope overshoots and varies a lot between repetitions.

Run with ``python3 demos/baseline_contrast.py`` (about a minute).
"""
import numpy as np

from stochbw.baseline import run_baseline, to_minplus_grid
from stochbw.probing import ProbingConfig, run_estimation
from stochbw.sim import NetworkScenario

scenario = NetworkScenario.dumbbell(burst_law="pareto", seed=0)
abw = scenario.ground_truth_abw

stochastic = run_estimation(scenario, ProbingConfig(r_acc=40, seed=0))
baseline = run_baseline(scenario, step=160, max_rate=1200, train_length=800, iterations=200,
                        base_seed=0)

# %%
# Compare both in the min-plus view S(t) (packets served by time t).
t = np.linspace(0.0, stochastic.curve.evaluate(799), 9)
band = baseline.band(t)
s_est = to_minplus_grid(stochastic.curve, t)
print("   t [s]   stochastic   deterministic mean  (95% band)     variance")
for row in zip(t, s_est, band.mean, band.low, band.high, band.variance):
    print("{:8.3f} {:12.0f} {:12.1f}   ({:7.1f}, {:7.1f}) {:12.1f}".format(*row))

slopes = baseline.slopes_at(t[-1])
print(f"\nC - lambda = {abw:g} pkt/s")
print(f"stochastic limiting rate        {stochastic.curve.limiting_rate:g} pkt/s")
print(f"deterministic median end slope  {np.median(slopes):g} pkt/s "
      f"(range {slopes.min():g} to {slopes.max():g})")
