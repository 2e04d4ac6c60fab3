"""Packing sets behind the lower bound, their separation, and Fano's bound.

Run: python demos/03_packing_and_fano.py
"""
import math

from addrate.eigenbasis import EigenSystem
from addrate.lowerbound import (
    build_packing_set,
    fano_from,
    lower_rate_witness,
    mutual_info_bound,
    pairwise_separation,
    verify_packing_set,
)

es = EigenSystem(alpha=1.0, k_max=16)
ps = build_packing_set(d=32, s=4, N=2, q=0.5, es=es, rng=0)
print(f"{ps.M1} supports x {ps.M2} sign fills = {ps.M} hypotheses")
print("properties:", verify_packing_set(ps))
min_sep, bound = pairwise_separation(ps)
print(f"min squared separation {min_sep:.3e} >= bound {bound:.3e}")

# the information term grows linearly in n while log M stays fixed
for n in (1, 10, 100, 1000):
    info = mutual_info_bound(es, ps.q, ps.s, ps.N, n)
    print(f"n={n:5d}: I <= {info:8.3f}, Fano level {fano_from(math.log(ps.M), info):.3f}")

w = lower_rate_witness(n=4096, d=12, q=0.5, alpha=1.0)
print(f"witness at d=12: branch {w.branch}, sparse {w.sparse_rate:.4g}, smooth {w.smooth_rate:.4g}")
