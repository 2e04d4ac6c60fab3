"""A small rate sweep for the known-support ridge and its fitted n-exponent.

Run: python demos/06_rate_sweep.py [out_dir]
"""
import sys
import tempfile
from pathlib import Path

from addrate.ratelab import SweepSpec, fit_rate_exponent, run_rate_sweep

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
spec = SweepSpec(n_grid=(250, 500, 1000, 2000), d_grid=(10,), alpha_grid=(1.0,),
                 replicates=10, estimator="oracle", seed=0, out_path=str(out / "rates.csv"))
records = run_rate_sweep(spec)
for r in records:
    print(f"n={r.n:5d}: median error^2 {r.median_error_sq:.5f} "
          f"[{r.q25:.5f}, {r.q75:.5f}], rate {r.theoretical_rate:.5f} ({r.regime})")
rep = fit_rate_exponent(records, "n")
print(f"slope {rep.slope:.3f} +- {rep.stderr:.3f} (target -2/3); CSV at {spec.out_path}")
