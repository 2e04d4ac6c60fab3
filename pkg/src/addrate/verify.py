"""Self-contained invariant checks behind ``addrate verify`` and the acceptance tests.

Each ``check_*`` function runs one experiment with explicit sizes and
returns a :class:`CheckResult`; ``run_suite`` runs them all.
"""

from __future__ import annotations

import itertools
import math
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from ._rng import substream
from .additive import AdditiveFunction, eval_additive, lq_mass, re_condition_check, sup_norm_grid
from .complexity import (
    envelope_constant_slope,
    gaussian_curve,
    lemma_envelope_check,
    rademacher_curve,
    sup_linear_over_ellipsoid_and_ball,
)
from .eigenbasis import EigenSystem
from .estimators import FitConfig, basic_inequality_check, brute_force_lse, fit_lq_constrained
from .lowerbound import (
    build_packing_set,
    fano_bound,
    kl_pairwise,
    lower_rate_witness,
    mutual_info_bound,
    pairwise_separation,
    verify_packing_set,
)
from .ratelab import (
    SPARSE,
    SweepSpec,
    fit_rate_exponent,
    phase_diagram,
    regime_classify,
    run_cell,
    run_rate_sweep,
    theoretical_rate,
)
from .synthgen import GenConfig, generate, sample_dataset, sample_truth


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0
    soft: bool = False
    extras: dict = field(default_factory=dict)

    def line(self) -> str:
        tag = "PASS" if self.passed else ("SOFT-FAIL" if self.soft else "FAIL")
        return f"[{tag}] {self.name}: {self.detail} ({self.seconds:.1f}s)"

    def to_record(self) -> dict:
        return {"name": self.name, "passed": self.passed, "soft": self.soft,
                "detail": self.detail, "seconds": self.seconds}


def _timed(fn):
    def wrapper(*args, **kw):
        t0 = time.perf_counter()
        res = fn(*args, **kw)
        res.seconds = time.perf_counter() - t0
        return res
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# -- 1 -----------------------------------------------------------------------------


@_timed
def check_oracle_slope(replicates=50, n_grid=(250, 500, 1000, 2000, 4000), seed=0,
                       tol=0.15) -> CheckResult:
    """Known-support ridge error decays like ``n^(-2/3)`` at ``alpha = 1``."""
    spec = SweepSpec(n_grid=n_grid, d_grid=(10,), q_grid=(0.5,), alpha_grid=(1.0,),
                     replicates=replicates, estimator="oracle", seed=seed, s_active=1,
                     sigma=0.5)
    rep = fit_rate_exponent(run_rate_sweep(spec), "n")
    target = -2 / 3
    ok = abs(rep.slope - target) <= tol
    return CheckResult("oracle smooth-rate slope", ok,
                       f"slope {rep.slope:.4f} (se {rep.stderr:.4f}), target {target:.4f} +- {tol}")


# -- 2 -----------------------------------------------------------------------------


@_timed
def check_packing(seed=0, n=1000, C1=0.25, sigma=1.0) -> CheckResult:
    """Packing construction, separation bound and the Fano level."""
    es = EigenSystem(1.0, 64)
    d, s, N, q = 32, 4, 2, 0.5
    ps = build_packing_set(d, s, N, q, es, substream(seed, "lowerbound:packing"))
    props = verify_packing_set(ps)
    max_mass = max(lq_mass(g, q) for g in ps.functions)
    min_sep, bound = pairwise_separation(ps)
    structural = all(props.values()) and max_mass <= 1 + 1e-10 and min_sep >= bound

    # Fano level at the witness parameters of both branches
    w = lower_rate_witness(n, d, q, es.alpha, C1)
    fano = {}
    for branch, (ws, wN) in {"sparse": (w.sparse_s, w.sparse_N),
                             "smooth": (w.smooth_s, w.smooth_N)}.items():
        if ws > d // 4 or 2 * wN > es.k_max:
            fano[branch] = (math.nan, math.nan, math.nan)
            continue
        wps = build_packing_set(d, ws, wN, q, es, substream(seed, "lowerbound:witness", ws, wN))
        info = mutual_info_bound(es, q, ws, wN, n, sigma)
        fano[branch] = (fano_bound(wps, n, sigma), info, math.log(wps.M))
    fano_ok = all(v[0] >= 0.5 for v in fano.values())
    detail = (f"M={ps.M} props={'ok' if all(props.values()) else props} max_mass={max_mass:.12f} "
              f"min_sep={min_sep:.4g} >= bound={bound:.4g}; Fano at n={n}, C1={C1}: "
              + ", ".join(f"{b}: {v[0]:.3g} (I={v[1]:.4g}, log M={v[2]:.3g})"
                          for b, v in fano.items()))
    return CheckResult("packing suite and Fano level", structural and fano_ok, detail,
                       extras={"structural": structural, "fano": fano})


# -- 3 -----------------------------------------------------------------------------


@_timed
def check_kl_identity(pairs=100, seed=0) -> CheckResult:
    """KL between Gaussian regression laws equals ``sum_i (f - g)(X_i)^2 / (2 sigma^2)``."""
    worst = 0.0
    for p in range(pairs):
        rng = substream(seed, "verify:kl", p)
        es = EigenSystem(float(rng.uniform(0.6, 3.0)), 16)
        d = int(rng.integers(1, 6))
        f = AdditiveFunction(es, rng.standard_normal((d, 16)) * np.sqrt(es.eff_lambdas))
        g = AdditiveFunction(es, rng.standard_normal((d, 16)) * np.sqrt(es.eff_lambdas))
        n = int(rng.integers(5, 200))
        sigma = float(rng.uniform(0.1, 2.0))
        ds = sample_dataset(f, n, sigma, rng)
        direct = float(np.sum((eval_additive(f, ds.X) - eval_additive(g, ds.X)) ** 2)) / (2 * sigma**2)
        kl = kl_pairwise(f, g, ds, sigma)
        worst = max(worst, abs(kl - direct) / max(1.0, abs(direct)))
    return CheckResult("KL identity", worst <= 1e-10, f"{pairs} pairs, max rel gap {worst:.2e}")


# -- 4 -----------------------------------------------------------------------------


def _grid_sup(b, lam, u, G, step):
    """Dense-grid maximum of ``b.theta`` over the feasible set."""
    half = np.sqrt(lam)
    if G is None:
        half = np.minimum(half, u)
    axes = [np.arange(-math.floor(h / step), math.floor(h / step) + 1) * step for h in half]
    best = -math.inf
    A, B = np.meshgrid(axes[0], axes[1], indexing="ij")
    A, B = A.ravel(), B.ravel()
    for c in axes[2]:
        th = np.stack([A, B, np.full_like(A, c)], axis=1)
        ok = (th**2 @ (1 / lam) <= 1) & (
            (np.sum(th**2, axis=1) if G is None else np.einsum("ij,jk,ik->i", th, G, th)) <= u * u)
        if ok.any():
            best = max(best, float(np.max(th[ok] @ b)))
    return best


@_timed
def check_complexity(replicates=2000, n_grid=(100, 200, 400), d=20, alpha=1.0, beta=1.0,
                     u_points=12, seed=0, grid_instances=4) -> CheckResult:
    """Monotone curves, flat envelope constants and the inner maximizer vs a grid."""
    es = EigenSystem(alpha, 64)
    u = np.geomspace(0.01, 1.0, u_points)
    monotone = True
    reports = {"rademacher": [], "gaussian": []}
    for n in n_grid:
        for which, fn in (("rademacher", rademacher_curve), ("gaussian", gaussian_curve)):
            curve = fn(n, d, es, u, replicates, seed)
            monotone &= curve.is_monotone()
            reports[which].append(lemma_envelope_check(curve, beta))
    slopes = {k: envelope_constant_slope(v, tol=0.3) for k, v in reports.items()}
    flat = all(s["bounded"] for s in slopes.values())

    worst = 0.0
    for i in range(grid_instances):
        rng = substream(seed, "verify:grid-sup", i)
        lam = np.sort(rng.uniform(0.005, 0.02, 3))[::-1]
        b = rng.standard_normal(3)
        G = None
        if i % 2:
            M = rng.standard_normal((3, 3))
            G = M @ M.T / 3 + 0.1 * np.eye(3)
        uu = float(rng.uniform(0.03, 0.12))
        exact = sup_linear_over_ellipsoid_and_ball(b, lam, uu, G)
        grid = _grid_sup(b, lam, uu, G, 1e-3)
        worst = max(worst, abs(exact - grid))
        if grid > exact + 1e-9:  # the grid can never beat the true maximum
            worst = math.inf
    grid_ok = worst <= 1e-3
    detail = (f"monotone={monotone}; c_hat log-slope "
              + ", ".join(f"{k} {s['slope']:+.3f}" for k, s in slopes.items())
              + f" (|.|<=0.3); grid gap {worst:.2e} over {grid_instances} instances")
    return CheckResult("complexity envelopes", monotone and flat and grid_ok, detail,
                       extras={"slopes": slopes})


# -- 5 -----------------------------------------------------------------------------


@_timed
def check_brute_force(datasets=10, seed=0, tol=1e-3) -> CheckResult:
    """Constrained fit against the exhaustive grid on ``d = 2``, ``k_max = 2``."""
    gaps, tallies = [], [0, 0, 0]
    for i in range(datasets):
        cfg = GenConfig(n=30, d=2, q=0.5, R=1.0, alpha=1.0, s_active=1, sigma=0.5,
                        seed=seed + i, k_max=2)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            ds = generate(cfg)
        fit = fit_lq_constrained(ds, FitConfig(q=0.5, R=1.0, seed=seed + i))
        bf = brute_force_lse(ds, 0.02, 0.5, 1.0)
        # recompute the fit's risk from its stored function
        risk = float(np.mean((ds.Y - eval_additive(fit.fhat, ds.X)) ** 2))
        gaps.append(risk - bf.empirical_risk)
        _tally(tallies, fit, ds)
    gaps = np.array(gaps)
    ok = bool(np.all(np.abs(gaps) <= tol))
    detail = (f"risk(fit) - risk(grid) in [{gaps.min():+.2e}, {gaps.max():+.2e}], "
              f"{int(np.sum(np.abs(gaps) <= tol))}/{datasets} within {tol:g}; "
              f"{int(np.sum(gaps > tol))} where the fit is worse, "
              f"{int(np.sum(gaps < -tol))} where it beats the grid")
    return CheckResult("brute-force equivalence", ok, detail,
                       extras={"gaps": gaps.tolist(), "basic": tallies})


def _tally(tallies, fit, ds):
    """``[converged feasible-truth fits, checked, passed]`` basic-inequality counts."""
    if not fit.converged or lq_mass(ds.truth, fit.config.q) > fit.config.R * (1 + 1e-9):
        return
    tallies[0] += 1
    tallies[1] += 1
    tallies[2] += bool(basic_inequality_check(fit, ds, tol=1e-10))


# -- 6 -----------------------------------------------------------------------------


def check_basic_inequality(*tallies) -> CheckResult:
    """Fraction of converged constrained fits no worse than the truth."""
    checked = sum(t[1] for t in tallies)
    passed = sum(t[2] for t in tallies)
    ok = checked > 0 and passed == checked
    return CheckResult("basic inequality", ok, f"{passed}/{checked} converged fits with feasible truth")


# -- 7 -----------------------------------------------------------------------------


@_timed
def check_sup_norm(functions=1000, seed=0) -> CheckResult:
    """Grid sup-norm of unit-RKHS-norm functions never exceeds 1."""
    worst = -math.inf
    for i in range(functions):
        rng = substream(seed, "verify:sup", i)
        es = EigenSystem(float(rng.uniform(0.55, 3.0)), int(rng.choice([8, 16, 64])))
        if i % 4 == 0:
            # kernel section at a random point: the extremal case
            x0 = float(rng.choice([0.0, 1.0])) if i % 8 == 0 else float(rng.uniform())
            theta = es.eff_lambdas * es.basis(x0)
        else:
            theta = rng.standard_normal(es.k_max) * np.sqrt(es.eff_lambdas) * \
                np.arange(1, es.k_max + 1) ** rng.uniform(-1, 1)
        theta = theta / math.sqrt(float(np.sum(theta**2 * es.rkhs_weights)))
        f = AdditiveFunction(es, theta[None, :])
        worst = max(worst, sup_norm_grid(f, 10_000))
    return CheckResult("sup-norm bound", worst <= 1 + 1e-12,
                       f"{functions} functions, max grid sup {worst:.12f} <= 1")


# -- 8 -----------------------------------------------------------------------------


@_timed
def check_restricted_eigenvalue(functions=20, n_mc=100_000, seed=0) -> CheckResult:
    """Sum of component L2 norms over the L2 norm of the sum equals 1."""
    exact_ok = True
    ratios = []
    for i in range(functions):
        rng = substream(seed, "verify:re", i)
        d = int(rng.integers(2, 8))
        es = EigenSystem(float(rng.uniform(0.6, 2.5)), 16)
        cfg = GenConfig(n=10, d=d, s_active=int(rng.integers(2, d + 1)), alpha=es.alpha,
                        k_max=16, seed=i)
        f = sample_truth(cfg, rng)
        exact_ok &= math.isclose(float(np.sum(f.component_l2_norms() ** 2)),
                                 float(np.sum(f.theta**2)), rel_tol=1e-14)
        ratios.append(re_condition_check(f, n_mc, substream(seed, "verify:re-mc", i)).ratio)
    ratios = np.array(ratios)
    ok = exact_ok and bool(np.all((ratios >= 0.95) & (ratios <= 1.05)))
    return CheckResult("restricted eigenvalue", ok,
                       f"coefficient identity {'exact' if exact_ok else 'BROKEN'}; MC ratios in "
                       f"[{ratios.min():.4f}, {ratios.max():.4f}] over {functions} functions")


# -- 9 -----------------------------------------------------------------------------


@_timed
def check_regime_classifier(points=1000, seed=0) -> CheckResult:
    """Classifier against the argmax of the two rate terms, plus the boundary row."""
    rng = substream(seed, "verify:regime")
    agree = tried = 0
    while tried < points:
        q = float(rng.uniform(0.05, 1.0))
        alpha = float(rng.uniform(0.1, 4.0))
        n = int(np.exp(rng.uniform(np.log(10), np.log(1e6))))
        log_d = float(np.exp(rng.uniform(np.log(np.log(3)), np.log(1e4))))
        _, sp, sm = theoretical_rate(n, None, q, alpha, log_d=log_d)
        if abs(math.log(sp / sm)) < 1e-9 or abs(alpha - (1 / q - 0.5)) < 1e-9:
            continue  # boundary cells excluded
        tried += 1
        agree += regime_classify(n, None, q, alpha, log_d=log_d) == (SPARSE if sp > sm else "Smooth")
    row = phase_diagram([1.5], np.linspace(0, 1, 41), 1000, 0.5)
    row_ok = bool(np.all(row == SPARSE))
    return CheckResult("regime classifier", agree == points and row_ok,
                       f"{agree}/{points} agree with the argmax; boundary row all Sparse: {row_ok}")


# -- 10 ----------------------------------------------------------------------------


@_timed
def check_d_scaling(replicates=30, d_grid=(16, 64, 256, 1024), seed=0, k_max=16,
                    target=0.75, tol=0.5) -> CheckResult:
    """Slope of the constrained error against ``log log d`` in the sparse regime."""
    spec = SweepSpec(n_grid=(500,), d_grid=d_grid, q_grid=(0.5,), alpha_grid=(2.0,),
                     replicates=replicates, estimator="lq_constrained", seed=seed,
                     s_active="auto", sigma=0.5, k_max=k_max)
    recs = [run_cell(spec, idx, params) for idx, params in spec.cells()]
    rep = fit_rate_exponent(recs, "d")
    tallies = [sum(r.n_converged for r in recs), sum(r.basic_ineq_checked for r in recs),
               sum(r.basic_ineq_passed for r in recs)]
    ok = abs(rep.slope - target) <= tol
    meds = ", ".join(f"d={r.d}: {r.median_error_sq:.3g}" for r in recs)
    return CheckResult("sparse-regime d-scaling", ok,
                       f"slope {rep.slope:.3f} (se {rep.stderr:.3f}), target {target} +- {tol}; {meds}",
                       soft=True, extras={"basic": tallies})


def run_suite(quick: bool = False, seed: int = 0) -> list[CheckResult]:
    """All checks; ``quick`` shrinks the Monte-Carlo sizes."""
    out = [
        check_oracle_slope(replicates=10 if quick else 50, seed=seed),
        check_packing(seed=seed),
        check_kl_identity(seed=seed),
        check_complexity(replicates=200 if quick else 2000, seed=seed,
                         grid_instances=2 if quick else 4),
    ]
    bf = check_brute_force(datasets=3 if quick else 10, seed=seed)
    out.append(bf)
    sweep = check_d_scaling(replicates=3 if quick else 30, seed=seed,
                            d_grid=(16, 64, 256, 1024))
    out.append(check_basic_inequality(bf.extras["basic"], sweep.extras["basic"]))
    out += [
        check_sup_norm(functions=200 if quick else 1000, seed=seed),
        check_restricted_eigenvalue(functions=5 if quick else 20, seed=seed),
        check_regime_classifier(seed=seed),
        sweep,
    ]
    return out
