"""Localized Rademacher and Gaussian complexities against their envelopes.

Run: python demos/04_complexity_curves.py
"""
import numpy as np

from addrate.complexity import gaussian_curve, lemma_envelope_check, rademacher_curve
from addrate.eigenbasis import EigenSystem

es = EigenSystem(alpha=1.0, k_max=64)
u = np.geomspace(0.01, 1.0, 8)
for n in (100, 400):
    rad = rademacher_curve(n, d=20, es=es, u_grid=u, replicates=100, seed=0)
    gau = gaussian_curve(n, d=20, es=es, u_grid=u, replicates=100, seed=0)
    r1, r2 = lemma_envelope_check(rad), lemma_envelope_check(gau)
    print(f"n={n}: monotone {rad.is_monotone() and gau.is_monotone()}, "
          f"c_hat rademacher {r1.c_hat:.3f}, gaussian {r2.c_hat:.3f}")
    print("  mean curve:", " ".join(f"{v:.4f}" for v in rad.mean()))
