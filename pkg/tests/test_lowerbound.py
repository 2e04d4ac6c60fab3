import math

import numpy as np
import pytest

from addrate.additive import AdditiveFunction, lq_mass
from addrate.eigenbasis import DomainError, EigenSystem
from addrate.lowerbound import (
    InvariantViolation,
    PackingConstructionError,
    PackingMatrix,
    PackingSet,
    build_g_A,
    build_packing_set,
    check_binary_packing,
    fano_bound,
    fano_from,
    fill_matrix,
    kl_pairwise,
    lower_rate_witness,
    pairwise_separation,
    separation_bound,
    verify_packing_set,
    vg_binary_packing,
    vg_sign_packing,
    write_separation_report,
)
from addrate.synthgen import GenConfig, generate


@pytest.mark.parametrize("d, s, minimum", [(32, 4, 8), (8, 2, 2)])
def test_binary_packing_size(d, s, minimum):
    rows = vg_binary_packing(d, s, rng=0)
    assert len(rows) >= minimum
    assert np.all(rows.sum(axis=1) == s)
    for i in range(len(rows)):
        for j in range(i):
            assert np.abs(rows[i] - rows[j]).sum() >= s / 2


@pytest.mark.parametrize("s, N, minimum", [(4, 2, 3), (1, 8, 3)])
def test_sign_packing_size(s, N, minimum):
    g = vg_sign_packing(s, N, rng=0)
    assert g.shape[1:] == (s, N) and len(g) >= minimum
    for i in range(len(g)):
        for j in range(i):
            assert np.sum((g[i].astype(int) - g[j]) ** 2) >= N * s / 2


def test_packing_domain_and_budget():
    with pytest.raises(DomainError):
        vg_binary_packing(8, 3)
    with pytest.raises(PackingConstructionError):
        vg_binary_packing(8, 2, size=10**6)


def test_check_rejects_bad_packing():
    rows = np.array([[1, 1, 0, 0, 0, 0, 0, 0], [1, 1, 0, 0, 0, 0, 0, 0]])
    with pytest.raises(InvariantViolation):
        check_binary_packing(rows, 8, 2)


def test_g_A_single_row_single_column():
    es = EigenSystem(1.0, 8)
    A = PackingMatrix(np.array([[1], [0], [0]]))
    g = build_g_A(A, 0.5, es)
    expected = np.zeros((3, 8))
    expected[0, 1] = math.sqrt(es.eff_lambdas[1])
    assert np.allclose(g.theta, expected)
    assert lq_mass(g, 0.5) == pytest.approx(1.0, abs=1e-12)


def test_separation_bound_pre_normalization():
    es = EigenSystem(1.0, 8)
    assert separation_bound(es, 0.5, 2, 1) * es.norm_const == pytest.approx(1 / 64)


@pytest.fixture(scope="module")
def packing():
    es = EigenSystem(1.0, 16)
    return build_packing_set(32, 4, 2, 0.5, es, rng=0)


def test_packing_set_properties(packing):
    report = verify_packing_set(packing)
    assert all(report.values())
    assert packing.M == packing.M1 * packing.M2
    assert all(lq_mass(g, 0.5) <= 1 + 1e-10 for g in packing.functions)


def test_packing_separation(packing, tmp_path):
    min_sep, bound = pairwise_separation(packing)
    assert min_sep >= bound
    assert write_separation_report(packing, tmp_path / "sep.csv") == 0
    lines = (tmp_path / "sep.csv").read_text().splitlines()
    assert lines[0] == "pair_id,distance_sq,bound,pass"
    assert len(lines) == 1 + packing.M * (packing.M - 1) // 2


def test_packing_roundtrip(packing, tmp_path):
    path = tmp_path / "p.json"
    packing.save(path)
    back = PackingSet.load(path)
    assert back.M == packing.M
    assert all(np.array_equal(a.theta, b.theta) for a, b in zip(back.functions, packing.functions))


def test_matrix_string_roundtrip():
    A = fill_matrix(np.array([0, 1, 1, 0]), np.array([[1, -1], [-1, -1]]))
    assert A.to_string() == "00\n+-\n--\n00"
    assert PackingMatrix.from_string(A.to_string()) == A
    assert A.s_A == 2 and A.full_rows


@pytest.mark.parametrize("M, I, expected", [(16, 0.0, 0.75), (2, 5.0, 0.0), (2, 0.0, 0.0)])
def test_fano_values(M, I, expected):
    assert fano_from(math.log(M), I) == pytest.approx(expected, abs=1e-12)


def test_fano_monotone():
    vals = [fano_from(math.log(64), I) for I in np.linspace(0, 5, 30)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))
    vals = [fano_from(math.log(M), 0.5) for M in range(2, 200)]
    assert all(a <= b for a, b in zip(vals, vals[1:]))
    with pytest.raises(DomainError):
        fano_from(0.0, 0.0)


def test_fano_bound_needs_two(packing):
    assert 0.0 <= fano_bound(packing, n=10) <= 1.0


def test_kl_identity():
    ds = generate(GenConfig(n=100, d=4, k_max=8, seed=1))
    es = ds.truth.es
    rng = np.random.default_rng(0)
    f = AdditiveFunction(es, rng.standard_normal((4, 8)))
    g = AdditiveFunction(es, rng.standard_normal((4, 8)))
    direct = np.sum((f(ds.X) - g(ds.X)) ** 2) / (2 * 0.7**2)
    assert kl_pairwise(f, g, ds, 0.7) == pytest.approx(direct, rel=1e-12)
    with pytest.raises(DomainError):
        kl_pairwise(f, g, ds, 0.0)


def test_witness_rates():
    w = lower_rate_witness(1024, 1024, 0.5, 2.0)
    assert w.sparse_rate == pytest.approx((math.log(1024) / 1024) ** 0.75, rel=1e-12)
    assert w.sparse_rate == pytest.approx(0.023599, abs=1e-6)
    assert w.smooth_rate == pytest.approx(1024 ** -0.8, rel=1e-12)
    assert w.smooth_rate == pytest.approx(0.00390625, rel=1e-12)
    assert w.branch == "sparse" and w.N == 1


@pytest.mark.parametrize("d, branch", [(12, "smooth"), (13, "sparse")])
def test_witness_branch_flip(d, branch):
    assert lower_rate_witness(4096, d, 0.5, 1.0).branch == branch
