"""
Schedulers, finite buffers and lost probes
==========================================

The same cross traffic meets the probe under FIFO, strict priority and
fair queueing. Priority leaves C - lambda to the probe, fair queueing
guarantees at least half the link, and FIFO lies in between. A finite
buffer drops packets; lost probes count as infinite delay and rates that
lose a share eps or more of a train are treated as infeasible.

Run with ``python3 demos/schedulers_and_loss.py`` (under a minute).
"""
import numpy as np

from stochbw.probing import ProbingConfig, run_estimation
from stochbw.sim import NetworkScenario, ProbeSpec, run_probe

for sched in ("priority", "fifo", "fair"):
    scenario = NetworkScenario.dumbbell(scheduler=sched, cross_pps=500, seed=2)
    res = run_estimation(scenario, ProbingConfig(r_acc=40, mode="fixed_short", train_length=800,
                                                 seed=2))
    print(f"{sched:>8}: limiting rate {res.curve.limiting_rate:g} pkt/s, "
          f"T_S(799) = {res.curve.evaluate(799):.3f} s")

# %%
# Loss with a 200-packet buffer under Pareto bursts.
scenario = NetworkScenario.dumbbell(scheduler="fifo", burst_law="pareto", buffer_packets=200, seed=5)
for rate in (300, 500, 700, 900):
    ratios = [run_probe(scenario, ProbeSpec(2000, rate, scenario.warmup_s, i)).loss_ratio
              for i in range(20)]
    print(f"rate {rate:4d} pkt/s: mean probe loss ratio {np.mean(ratios):.4f}")
