"""The l_q-constrained estimator on a tiny instance, checked against brute force.

Run: python demos/05_constrained_fit.py
"""
import warnings

from addrate.estimators import (
    FitConfig,
    basic_inequality_check,
    brute_force_lse,
    fit_lq_constrained,
    fit_mixed_penalty,
)
from addrate.synthgen import GenConfig, generate

warnings.simplefilter("ignore")
ds = generate(GenConfig(n=30, d=2, q=0.5, alpha=1.0, sigma=0.5, seed=0, k_max=2))
fit = fit_lq_constrained(ds, FitConfig(q=0.5, R=1.0))
grid = brute_force_lse(ds, grid_step=0.02, q=0.5, R=1.0)
print(f"constrained fit: risk {fit.empirical_risk:.6f}, mass {fit.mass:.6f}")
print(f"grid optimum:    risk {grid.empirical_risk:.6f} over {grid.iterations} grid points")
print(f"basic inequality holds: {basic_inequality_check(fit, ds)}")

# a wider problem: two active components among 100
big = generate(GenConfig(n=1000, d=100, q=0.5, alpha=1.0, s_active=2, sigma=0.1, seed=3))
for name, fn in (("lq_constrained", fit_lq_constrained), ("mixed_penalty", fit_mixed_penalty)):
    f = fn(big, FitConfig(q=0.5, R=1.0, restarts=2))
    print(f"{name:15s} active {f.active_set}, error^2 {f.population_error_sq:.4f}")
print(f"truth active {big.truth.active_set()}, ||f||^2 = {(big.truth.theta**2).sum():.4f}")
