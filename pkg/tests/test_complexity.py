import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from addrate.complexity import (
    envelope,
    envelope_constant_slope,
    gaussian_curve,
    lemma_envelope_check,
    log_slope,
    norm_transfer_check,
    rademacher_curve,
    sup_linear_over_ellipsoid_and_ball,
)
from addrate.eigenbasis import DomainError, EigenSystem


def grid_oracle(b, lam, u, step=1e-3):
    # enumerate the box containing the ellipsoid one slice at a time
    axes = [np.arange(-math.sqrt(l), math.sqrt(l) + step, step) for l in lam]
    t1, t2 = np.meshgrid(axes[1], axes[2], indexing="ij")
    best = -math.inf
    for t0 in axes[0]:
        ok = ((t0**2 / lam[0] + t1**2 / lam[1] + t2**2 / lam[2] <= 1)
              & (t0**2 + t1**2 + t2**2 <= u * u))
        if np.any(ok):
            best = max(best, float(np.max((b[0] * t0 + b[1] * t1 + b[2] * t2)[ok])))
    return best


def test_closed_form_when_ball_inactive():
    lam = np.array([0.3, 0.1, 0.02])
    b = np.array([1.0, -2.0, 0.5])
    assert sup_linear_over_ellipsoid_and_ball(b, lam, 10.0) == pytest.approx(
        math.sqrt(np.sum(lam * b * b)), rel=1e-12)


def test_zero_radius():
    lam = np.array([0.3, 0.1, 0.02])
    assert sup_linear_over_ellipsoid_and_ball(np.ones(3), lam, 0.0) == 0.0
    G = np.diag([1.0, 2.0, 0.5])
    assert sup_linear_over_ellipsoid_and_ball(np.ones(3), lam, 0.0, G=G) == 0.0


@pytest.mark.parametrize("u", [0.05, 0.1, 0.2, 0.35])
def test_matches_grid_oracle(u):
    lam = np.array([0.15, 0.04, 0.01])
    b = np.array([0.8, -1.1, 0.6])
    val = sup_linear_over_ellipsoid_and_ball(b, lam, u)
    ref = grid_oracle(b, lam, u)
    assert ref <= val + 1e-12
    assert val - ref <= 1e-3


@given(st.integers(0, 10_000), st.floats(0.01, 1.0))
@settings(max_examples=50, deadline=None)
def test_constraints_hold(seed, u):
    rng = np.random.default_rng(seed)
    lam = np.sort(rng.uniform(0.001, 0.5, 6))[::-1]
    b = rng.standard_normal(6)
    A = rng.standard_normal((6, 6))
    G = A @ A.T / 6
    for Gm in (None, G):
        val, th = sup_linear_over_ellipsoid_and_ball(b, lam, u, G=Gm, return_theta=True)
        assert th @ (th / lam) <= 1 + 1e-8
        quad = th @ th if Gm is None else th @ Gm @ th
        assert quad <= u * u * (1 + 1e-8) + 1e-16
        assert val == pytest.approx(b @ th, rel=1e-10, abs=1e-14)


def test_matches_slsqp():
    optimize = pytest.importorskip("scipy.optimize")
    rng = np.random.default_rng(3)
    for _ in range(10):
        lam = np.sort(rng.uniform(0.01, 0.4, 4))[::-1]
        b = rng.standard_normal(4)
        A = rng.standard_normal((4, 4))
        G = A @ A.T / 4
        u = float(rng.uniform(0.05, 0.5))
        cons = [
            {"type": "ineq", "fun": lambda t: 1 - t @ (t / lam)},
            {"type": "ineq", "fun": lambda t: u * u - t @ G @ t},
        ]
        best = max(
            -optimize.minimize(lambda t: -b @ t, rng.standard_normal(4) * 0.01,
                               constraints=cons, method="SLSQP", tol=1e-12).fun
            for _ in range(5)
        )
        val = sup_linear_over_ellipsoid_and_ball(b, lam, u, G=G)
        assert val == pytest.approx(best, rel=1e-5, abs=1e-8)


def test_errors():
    lam = np.array([0.3, 0.1])
    with pytest.raises(DomainError):
        sup_linear_over_ellipsoid_and_ball(np.ones(2), lam, -0.1)
    with pytest.raises(DomainError):
        sup_linear_over_ellipsoid_and_ball(np.ones(2), lam, 0.1, G=-np.eye(2))
    with pytest.raises(DomainError):
        sup_linear_over_ellipsoid_and_ball(np.ones(2), -lam, 0.1)


def test_vector_radius_matches_scalar():
    lam = np.array([0.3, 0.1, 0.02])
    b = np.array([1.0, -2.0, 0.5])
    us = np.array([0.01, 0.1, 0.5])
    vec = sup_linear_over_ellipsoid_and_ball(b, lam, us)
    assert np.allclose(vec, [sup_linear_over_ellipsoid_and_ball(b, lam, u) for u in us])


@pytest.fixture(scope="module")
def es64():
    return EigenSystem(1.0, 64)


def test_rademacher_curve_shape(es64):
    u = np.logspace(-3, 0, 15)
    c = rademacher_curve(400, 20, es64, u, replicates=50, seed=1)
    assert c.is_monotone() and np.all(c.values >= 0)
    assert c.mean()[0] < 0.05 * c.mean()[-1]
    # slack beyond sqrt(lambda_1 / Z)
    slack = u >= math.sqrt(es64.eff_lambdas[0])
    assert np.allclose(c.values[:, slack], c.values[:, slack][:, :1], rtol=1e-10)


def test_curve_deterministic(es64):
    u = np.array([0.1, 0.5])
    a = rademacher_curve(100, 10, es64, u, replicates=5, seed=2)
    b = rademacher_curve(100, 10, es64, u, replicates=5, seed=2)
    assert np.array_equal(a.values, b.values)


def test_grid_validation(es64):
    for bad in ([0.0, 0.5], [0.5, 0.2], [1.2], []):
        with pytest.raises(DomainError):
            rademacher_curve(10, 5, es64, bad, replicates=2)


@pytest.mark.parametrize("alpha", [1.0, 2.0])
def test_small_u_exponent(alpha):
    es = EigenSystem(alpha, 64)
    u = np.logspace(math.log10(0.03), math.log10(0.25), 10)
    c = rademacher_curve(2000, 20, es, u, replicates=100, seed=0)
    slope, _ = log_slope(u, c.mean())
    assert abs(slope - (1 - 1 / (2 * alpha))) <= 0.2


def test_doubling_n(es64):
    u = np.logspace(-2, 0, 8)
    a = rademacher_curve(500, 20, es64, u, replicates=200, seed=0).mean()
    b = rademacher_curve(1000, 20, es64, u, replicates=200, seed=0).mean()
    assert np.all(np.abs(b / a * math.sqrt(2) - 1) <= 0.3)


def test_gaussian_approaches_rademacher(es64):
    u = np.logspace(-2, 0, 10)
    g = gaussian_curve(10_000, 20, es64, u, replicates=100, seed=0)
    r = rademacher_curve(10_000, 20, es64, u, replicates=100, seed=0)
    z = np.abs(g.mean() - r.mean()) / np.sqrt(g.std_err() ** 2 + r.std_err() ** 2)
    assert np.all(z <= 3)
    assert g.is_monotone()


def test_envelope_report(es64, tmp_path):
    u = np.logspace(-3, 0, 10)
    c = rademacher_curve(200, 20, es64, u, replicates=50, seed=0)
    rep = lemma_envelope_check(c, beta=1.0)
    assert rep.which == "lemma1" and math.isfinite(rep.c_hat) and rep.c_hat > 0
    assert json.loads(rep.to_json())["c_hat"] == rep.c_hat
    c.to_csv(tmp_path / "c.csv")
    header = (tmp_path / "c.csv").read_text().splitlines()[0]
    assert header == "u,mean,qbeta,n,d,alpha,which,seed"
    with pytest.raises(DomainError):
        envelope(u, 100, 20, 1.0, 1.0, "lemma3")


def test_envelope_slope_flat():
    from addrate.complexity import EnvelopeReport
    reps = [EnvelopeReport("lemma1", n, 20, 1.0, 0.7, 0.1, []) for n in (100, 200, 400)]
    out = envelope_constant_slope(reps)
    assert abs(out["slope"]) < 1e-12 and out["bounded"]


def test_norm_transfer(es64):
    rep = norm_transfer_check(2000, 20, EigenSystem(1.0, 16), trials=100, seed=0)
    assert 0.5 <= rep.c2_forward < 10 and 0.5 <= rep.c2_reverse < 10
    with pytest.raises(DomainError):
        norm_transfer_check(100, 20, es64, trials=10)
