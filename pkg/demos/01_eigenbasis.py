"""Tour of one component space: cosine eigenfunctions and the normalized kernel.

Run: python demos/01_eigenbasis.py
"""
import numpy as np

from addrate.eigenbasis import ComponentFunction, EigenSystem, kernel_eval, norms

es = EigenSystem(alpha=1.0, k_max=64)
print(f"Z = 2 sum lambda_k = {es.norm_const:.6f}")
print(f"K(0, 0) = {kernel_eval(es, 0.0, 0.0):.12f}  (normalized to 1)")
print(f"K(0.3, 0.7) = {kernel_eval(es, 0.3, 0.7):.6f}")

# a smooth function with unit RKHS norm: its sup-norm cannot exceed 1
rng = np.random.default_rng(0)
theta = rng.standard_normal(es.k_max) * np.sqrt(es.eff_lambdas)
theta /= np.sqrt(np.sum(theta**2 * es.rkhs_weights))
h, l2, sup = norms(es, ComponentFunction(theta))
print(f"||h||_K = {h:.4f}, ||h||_2 = {l2:.4f}, sup|h| ~ {sup:.4f}")
