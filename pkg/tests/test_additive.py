import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from addrate.additive import (
    AdditiveFunction,
    additive_kernel_eval,
    eval_additive,
    in_ball,
    l1_norm,
    l2_pi_distance_sq,
    lq_mass,
    re_condition_check,
    sup_norm_grid,
)
from addrate.eigenbasis import DomainError, EigenSystem


def unit_component(es, k=1):
    # single eigenfunction scaled to unit RKHS norm
    theta = np.zeros(es.k_max)
    theta[k - 1] = math.sqrt(es.eff_lambdas[k - 1])
    return theta


def test_two_unit_components_mass(es):
    theta = np.zeros((5, es.k_max))
    theta[0] = unit_component(es, 1)
    theta[3] = unit_component(es, 2)
    f = AdditiveFunction(es, theta)
    assert lq_mass(f, 0.5) == pytest.approx(2.0, abs=1e-12)
    assert in_ball(f, 0.5, 2.0)
    assert not in_ball(f, 0.5, 1.9)
    assert f.active_set() == [0, 3]


@given(st.floats(0.01, 10), st.sampled_from([0.25, 0.5, 1.0]), st.integers(0, 1000))
@settings(max_examples=40, deadline=None)
def test_mass_scales_like_power(c, q, seed):
    es = EigenSystem(1.0, 6)
    theta = np.random.default_rng(seed).standard_normal((4, 6))
    f = AdditiveFunction(es, theta)
    assert lq_mass(f.scaled(c), q) == pytest.approx(c**q * lq_mass(f, q), rel=1e-10)


def test_lq_mass_rejects_q():
    f = AdditiveFunction.zeros(EigenSystem(1.0, 4), 2)
    with pytest.raises(DomainError, match="q must lie in"):
        lq_mass(f, 1.5)


@pytest.mark.parametrize("d", [1, 3, 10])
def test_additive_kernel_at_origin(d):
    es = EigenSystem(2.0, 32)
    assert additive_kernel_eval(es, np.zeros(d), np.zeros(d)) == pytest.approx(d, abs=1e-12)


def test_eval_shapes(es):
    f = AdditiveFunction(es, np.random.default_rng(0).standard_normal((3, es.k_max)))
    x = np.random.default_rng(1).uniform(size=(7, 3))
    vals = eval_additive(f, x)
    assert vals.shape == (7,)
    assert isinstance(eval_additive(f, x[0]), float)
    assert eval_additive(f, x[0]) == pytest.approx(vals[0])
    with pytest.raises(DomainError):
        eval_additive(f, np.zeros((2, 4)))
    with pytest.raises(DomainError):
        eval_additive(f, np.full((2, 3), 1.2))


def test_mc_l2_matches_coefficients():
    es = EigenSystem(1.0, 8)
    rng = np.random.default_rng(5)
    f = AdditiveFunction(es, rng.standard_normal((3, 8)) * np.sqrt(es.eff_lambdas))
    g = AdditiveFunction(es, rng.standard_normal((3, 8)) * np.sqrt(es.eff_lambdas))
    exact = l2_pi_distance_sq(f, g)
    X = rng.uniform(size=(200_000, 3))
    sq = eval_additive(f - g, X) ** 2
    se = sq.std(ddof=1) / math.sqrt(sq.size)
    assert abs(sq.mean() - exact) <= 3 * se


def test_sup_norm_bounded_by_l1():
    es = EigenSystem(1.0, 16)
    rng = np.random.default_rng(2)
    for _ in range(20):
        f = AdditiveFunction(es, rng.standard_normal((4, 16)) * np.sqrt(es.eff_lambdas))
        assert sup_norm_grid(f) <= l1_norm(f) + 1e-12


def test_sup_norm_product_domain():
    es = EigenSystem(1.0, 4)
    theta = np.zeros((2, 4))
    theta[:, 0] = 1.0
    f = AdditiveFunction(es, theta)
    # phi_1(0) + phi_1(0) = 2 sqrt(2) is attained at the corner
    assert sup_norm_grid(f) == pytest.approx(2 * math.sqrt(2))


def test_re_ratio_single_component_exact(es):
    theta = np.zeros((3, es.k_max))
    theta[1] = unit_component(es)
    rep = re_condition_check(AdditiveFunction(es, theta))
    assert rep.exact and rep.ratio == 1.0


def test_re_ratio_multi_component():
    es = EigenSystem(1.0, 8)
    f = AdditiveFunction(es, np.random.default_rng(0).standard_normal((4, 8)))
    rep = re_condition_check(f, n_mc=100_000, rng_seed=1)
    assert rep.ci_low <= 1.0 <= rep.ci_high
    with pytest.raises(DomainError):
        re_condition_check(f, n_mc=100)
    with pytest.raises(DomainError):
        re_condition_check(AdditiveFunction.zeros(es, 2))


def test_record_roundtrip(tmp_path, es):
    f = AdditiveFunction(es, np.random.default_rng(0).standard_normal((3, es.k_max)))
    path = tmp_path / "f.json"
    f.save(path)
    g = AdditiveFunction.load(path)
    assert np.array_equal(f.theta, g.theta) and g.es == f.es


def test_wrong_shape():
    with pytest.raises(DomainError):
        AdditiveFunction(EigenSystem(1.0, 4), np.zeros((2, 5)))
