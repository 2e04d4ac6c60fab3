"""Mixed penalty against the constrained fit in a smooth-regime cell.

Run: python demos/08_mixed_penalty_gap.py
"""
import statistics

from addrate.ratelab import SweepSpec, suboptimality_experiment

spec = SweepSpec(n_grid=(200,), d_grid=(4,), q_grid=(0.5,), alpha_grid=(1.0,),
                 replicates=2, k_max=16, restarts=2, seed=0)
rows = suboptimality_experiment(spec, multipliers=(0.25, 1.0, 4.0))
for mode in ("single", "many"):
    for m in (0.25, 1.0, 4.0):
        ratios = [r["ratio"] for r in rows if r["truth_mode"] == mode and r["multiplier"] == m]
        print(f"{mode:6s} truth, a_n x {m:4}: median error ratio mixed / constrained "
              f"{statistics.median(ratios):.3f}")
