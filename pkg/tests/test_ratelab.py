import csv
import json
import math
from dataclasses import replace

import numpy as np
import pytest

from addrate.eigenbasis import DomainError
from addrate.ratelab import (
    CSV_FIELDS,
    SMOOTH,
    SPARSE,
    SweepRecord,
    SweepSpec,
    fit_rate_exponent,
    many_weak_count,
    phase_diagram,
    read_sweep_csv,
    regime_classify,
    run_rate_sweep,
    suboptimality_experiment,
    theoretical_rate,
)


def test_rate_example():
    total, sparse, smooth = theoretical_rate(1024, 1024, 0.5, 2.0)
    assert sparse == pytest.approx((math.log(1024) / 1024) ** 0.75, rel=1e-12)
    assert sparse == pytest.approx(0.023599, abs=1e-6)
    assert smooth == pytest.approx(0.00390625, rel=1e-12)
    assert total == pytest.approx(sparse + smooth)


def test_sparse_term_at_exp_n():
    _, sparse, _ = theoretical_rate(50, None, 0.5, 1.0, log_d=50.0)
    assert sparse == pytest.approx(1.0)


def test_smooth_term_in_alpha():
    vals = [theoretical_rate(1000, 10, 0.5, a)[2] for a in (0.6, 1, 2, 5, 50, 1e4)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] == pytest.approx(1e-3, rel=1e-3)


@pytest.mark.parametrize("n, d", [(1, 10), (10, 1)])
def test_rate_domain(n, d):
    with pytest.raises(DomainError):
        theoretical_rate(n, d, 0.5, 1.0)


@pytest.mark.parametrize("d", [2, 10, 10**6])
def test_classify_high_alpha_sparse(d):
    assert regime_classify(1000, d, 0.5, 2.0) == SPARSE
    assert regime_classify(1000, d, 0.5, 1.5) == SPARSE


@pytest.mark.parametrize("d, label", [(12, SMOOTH), (13, SPARSE)])
def test_classify_flip(d, label):
    assert regime_classify(4096, d, 0.5, 1.0) == label


def test_classify_matches_argmax():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        n = int(rng.integers(10, 10**5))
        d = int(rng.integers(3, 10**6))
        q = float(rng.uniform(0.1, 1.0))
        a = float(rng.uniform(0.51, 4.0))
        _, sp, sm = theoretical_rate(n, d, q, a)
        label = regime_classify(n, d, q, a)
        if a < 1 / q - 0.5:
            assert label == (SPARSE if sp > sm else SMOOTH)
        else:
            assert label == SPARSE and sp >= sm


def test_phase_diagram(tmp_path):
    alphas = [0.6, 0.8, 1.0, 1.2, 1.5, 2.0]
    dims = np.linspace(-0.5, 0.9, 15)
    labels = phase_diagram(alphas, dims, 1000, 0.5, out_path=tmp_path / "pd.csv")
    for a, row in zip(alphas, labels):
        if a >= 1.5:
            assert all(v == SPARSE for v in row)
        else:
            switches = sum(x != y for x, y in zip(row, row[1:]))
            assert switches <= 1 and row[0] == SMOOTH
    rows = list(csv.reader(open(tmp_path / "pd.csv")))
    assert len(rows) == 1 + len(alphas) and len(rows[0]) == 1 + len(dims)
    compile((tmp_path / "pd.plot.py").read_text(), "pd.plot.py", "exec")
    with pytest.raises(DomainError):
        phase_diagram([], dims, 1000, 0.5)


def rec(n, d, err, **kw):
    base = dict(n=n, d=d, q=0.5, alpha=1.0, estimator="oracle", median_error_sq=err,
                q25=err, q75=err, theoretical_rate=1.0, regime=SMOOTH, replicates=1, seed=0)
    base.update(kw)
    return SweepRecord(**base)


def test_slope_self_consistency():
    ns = [250, 500, 1000, 2000, 4000]
    recs = [rec(n, 10, theoretical_rate(n, 10, 0.5, 1.0)[2]) for n in ns]
    assert fit_rate_exponent(recs, "n").slope == pytest.approx(-2 / 3, abs=0.02)
    ds = [16, 64, 256, 1024, 4096]
    recs = [rec(1000, d, theoretical_rate(1000, d, 0.5, 2.0)[1], alpha=2.0) for d in ds]
    assert fit_rate_exponent(recs, "d").slope == pytest.approx(0.75, abs=0.02)


def test_slope_constant_and_errors():
    recs = [rec(n, 10, 0.1) for n in (100, 200, 400, 800)]
    assert fit_rate_exponent(recs).slope == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(DomainError):
        fit_rate_exponent(recs[:3])
    with pytest.raises(DomainError):
        fit_rate_exponent(recs[:3] + [rec(800, 20, 0.1)])
    with pytest.raises(DomainError):
        fit_rate_exponent(recs, axis="q")


def test_record_invariants():
    with pytest.raises(DomainError):
        rec(10, 10, 0.5, q25=0.6)
    with pytest.raises(DomainError):
        rec(10, 10, 0.5, theoretical_rate=0.0)


@pytest.mark.parametrize("kwargs", [
    {"n_grid": ()}, {"replicates": 0}, {"estimator": "lasso"}, {"q_grid": (1.5,)},
    {"s_active": 0},
])
def test_spec_validation(kwargs):
    base = dict(n_grid=(50,), d_grid=(4,))
    base.update(kwargs)
    with pytest.raises(DomainError):
        SweepSpec(**base)


def small_spec(tmp_path, **kw):
    base = dict(n_grid=(40, 80), d_grid=(4, 6), alpha_grid=(1.0, 2.0), replicates=2,
                estimator="oracle", seed=7, k_max=8, out_path=str(tmp_path / "sweep.csv"))
    base.update(kw)
    return SweepSpec(**base)


def test_sweep_rows_and_manifest(tmp_path):
    spec = small_spec(tmp_path)
    recs = run_rate_sweep(spec)
    assert len(recs) == 2 * 2 * 1 * 2
    rows = list(csv.DictReader(open(spec.out_path)))
    assert len(rows) == len(recs) and list(rows[0]) == CSV_FIELDS
    back = read_sweep_csv(spec.out_path)
    assert [r.median_error_sq for r in back] == [r.median_error_sq for r in recs]
    man = json.loads((tmp_path / "sweep.manifest.json").read_text())
    assert man["seed"] == 7


def test_sweep_deterministic(tmp_path):
    a = run_rate_sweep(small_spec(tmp_path / "a"))
    b = run_rate_sweep(small_spec(tmp_path / "b"))
    assert [r.median_error_sq for r in a] == [r.median_error_sq for r in b]
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()


def test_sweep_threads_match(tmp_path):
    a = run_rate_sweep(small_spec(tmp_path / "a"))
    b = run_rate_sweep(small_spec(tmp_path / "b", threads=2))
    assert [r.median_error_sq for r in a] == [r.median_error_sq for r in b]


def test_sweep_noiseless_oracle(tmp_path):
    spec = small_spec(tmp_path, n_grid=(200,), d_grid=(4,), alpha_grid=(1.0,),
                      replicates=1, sigma=0.0, ridge_const=1e-10)
    (r,) = run_rate_sweep(spec)
    assert r.median_error_sq < 1e-6


def test_sweep_replicate_stability(tmp_path):
    base = small_spec(tmp_path, n_grid=(200,), d_grid=(4,), alpha_grid=(1.0,), out_path=None)
    (a,) = run_rate_sweep(replace(base, replicates=20))
    (b,) = run_rate_sweep(replace(base, replicates=40))
    assert b.q25 <= a.median_error_sq <= b.q75


def test_many_weak_count():
    assert many_weak_count(1000, 10, 0.5) == math.ceil((1000 / math.log(10)) ** 0.25)
    assert many_weak_count(10**6, 3, 1.0) == 3


def test_suboptimality(tmp_path):
    spec = SweepSpec(n_grid=(100,), d_grid=(4,), replicates=1, k_max=8, restarts=1)
    rows = suboptimality_experiment(spec, multipliers=(0.5, 1.0), truth_modes=("single",),
                                    out_path=tmp_path / "sub.csv")
    assert len(rows) == 2 and all(r["ratio"] > 0 for r in rows)
    assert (tmp_path / "sub.csv").exists()
    with pytest.raises(DomainError):
        suboptimality_experiment(SweepSpec(n_grid=(100,), d_grid=(4,), alpha_grid=(2.0,)))
