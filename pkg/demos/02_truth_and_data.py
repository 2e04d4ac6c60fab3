"""Draw a ground truth on the l_q sphere and a noisy dataset, then save both.

Run: python demos/02_truth_and_data.py [out_dir]
"""
import sys
import tempfile
from pathlib import Path

from addrate.additive import lq_mass
from addrate.synthgen import GenConfig, generate, load_dataset, save_dataset

cfg = GenConfig(n=300, d=50, q=0.5, R=1.0, alpha=1.0, s_active=3, sigma=0.5, seed=1)
ds = generate(cfg)
f = ds.truth
print(f"active components {f.active_set()}, lq mass {lq_mass(f, cfg.q):.12f}")
print(f"noise variance {ds.noise().var():.4f} (sigma^2 = {cfg.sigma**2})")

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
sidecar = save_dataset(ds, out / "demo.csv", cfg, truth_path=out / "demo.truth.json")
back = load_dataset(out / "demo.csv")
print(f"saved to {out / 'demo.csv'} with sidecar {sidecar.name}; reloaded n={back.n}, d={back.d}")
