"""Sparse and smooth regimes over smoothness and dimensionality.

Run: python demos/07_phase_diagram.py [out_dir]
"""
import sys
import tempfile
from pathlib import Path

import numpy as np

from addrate.ratelab import phase_diagram, regime_threshold

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())
alphas = [0.6, 0.8, 1.0, 1.25, 1.5, 2.0]
dims = np.linspace(0.0, 1.0, 11)
labels = phase_diagram(alphas, dims, n=1000, q=0.5, out_path=out / "phase.csv")
print("alpha  " + " ".join(f"{v:4.1f}" for v in dims) + "   (log log d / log n)")
for a, row in zip(alphas, labels):
    print(f"{a:5.2f}  " + " ".join("  S " if v == "Sparse" else "  . " for v in row))
print(f"at alpha=1, n=4096 the boundary sits at log d = {regime_threshold(4096, 0.5, 1.0):.3f}")
print(f"matrix and plot script written to {out}")
