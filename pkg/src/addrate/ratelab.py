"""Rate experiments: theoretical rates, regime labels, sweeps and the phase diagram."""

from __future__ import annotations

import csv
import json
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import __version__
from ._rng import substream
from .additive import lq_mass
from .eigenbasis import DomainError
from .estimators import (
    FitConfig,
    basic_inequality_check,
    fit_lq_constrained,
    fit_mixed_penalty,
    fit_oracle_single,
)
from .synthgen import GenConfig, sample_dataset, sample_truth

SPARSE, SMOOTH = "Sparse", "Smooth"
ESTIMATORS = ("lq_constrained", "mixed_penalty", "oracle")


# -- theory ------------------------------------------------------------------------


def _check_nd(n, d, log_d):
    if n < 2:
        raise DomainError("n must be at least 2")
    if log_d is None:
        if d < 2:
            raise DomainError("d must be at least 2")
        return math.log(d)
    if log_d < math.log(2):
        raise DomainError("d must be at least 2")
    return log_d


def theoretical_rate(n, d, q, alpha, log_d=None) -> tuple[float, float, float]:
    """``(total, sparse, smooth)`` with ``sparse = (log d / n)^(1 - q/2)`` and
    ``smooth = n^(-2 alpha / (2 alpha + 1))``.

    ``log_d`` may be passed instead of ``d`` when ``d`` overflows a float.
    """
    log_d = _check_nd(n, d, log_d)
    sparse = (log_d / n) ** (1 - q / 2)
    smooth = n ** (-2 * alpha / (2 * alpha + 1))
    return sparse + smooth, sparse, smooth


def regime_threshold(n, q, alpha) -> float:
    """``log d`` above which the dimension term wins when ``alpha < 1/q - 1/2``."""
    return n ** ((2 / (2 - q)) * (1 / (2 * alpha + 1) - q / 2))


def regime_classify(n, d, q, alpha, log_d=None) -> str:
    """``Sparse`` or ``Smooth``; the boundary ``alpha = 1/q - 1/2`` counts as Sparse."""
    log_d = _check_nd(n, d, log_d)
    if alpha >= 1 / q - 0.5:
        return SPARSE
    return SPARSE if log_d > regime_threshold(n, q, alpha) else SMOOTH


# -- sweeps ------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepSpec:
    n_grid: tuple
    d_grid: tuple
    q_grid: tuple = (0.5,)
    alpha_grid: tuple = (1.0,)
    replicates: int = 10
    estimator: str = "lq_constrained"
    seed: int = 0
    out_path: str | None = None
    s_active: int | str = 1  # "auto": ceil((n / log d)^(q/2)) weak components
    sigma: float = 0.5
    R: float = 1.0
    k_max: int = 64
    ridge_const: float = 1.0
    restarts: int = 5
    a_mult: float = 1.0
    threads: int = 1

    def __post_init__(self):
        for name in ("n_grid", "d_grid", "q_grid", "alpha_grid"):
            val = tuple(getattr(self, name))
            if not val:
                raise DomainError(f"{name} must be nonempty")
            object.__setattr__(self, name, val)
        if self.replicates < 1:
            raise DomainError("replicates must be at least 1")
        if self.estimator not in ESTIMATORS:
            raise DomainError(f"estimator must be one of {ESTIMATORS}")
        for q in self.q_grid:
            if not 0 < q <= 1:
                raise DomainError("q must lie in (0,1]")
        if self.s_active != "auto" and not (isinstance(self.s_active, int) and self.s_active >= 1):
            raise DomainError("s_active must be a positive integer or 'auto'")

    def cells(self):
        """``(index tuple, (n, d, q, alpha))`` in row order."""
        for iq, q in enumerate(self.q_grid):
            for ia, a in enumerate(self.alpha_grid):
                for jd, d in enumerate(self.d_grid):
                    for i_n, n in enumerate(self.n_grid):
                        yield (iq, ia, jd, i_n), (int(n), int(d), float(q), float(a))


@dataclass
class SweepRecord:
    n: int
    d: int
    q: float
    alpha: float
    estimator: str
    median_error_sq: float
    q25: float
    q75: float
    theoretical_rate: float
    regime: str
    replicates: int
    seed: int
    n_failed: int = 0
    n_converged: int = 0
    basic_ineq_checked: int = 0
    basic_ineq_passed: int = 0
    failures: str = ""

    def __post_init__(self):
        if not self.theoretical_rate > 0:
            raise DomainError("theoretical_rate must be positive")
        if not np.isnan(self.median_error_sq) and not self.q25 <= self.median_error_sq <= self.q75:
            raise DomainError("quantiles out of order")


CSV_FIELDS = [f.name for f in fields(SweepRecord)]


def _fmt(v):
    return repr(v) if isinstance(v, float) else str(v)


def _cell_truth(spec: SweepSpec, idx, n, d, q, alpha):
    iq, ia, jd, _ = idx
    s = many_weak_count(n, d, q) if spec.s_active == "auto" else min(spec.s_active, d)
    cfg = GenConfig(n=n, d=d, q=q, R=spec.R, alpha=alpha, s_active=s, sigma=spec.sigma, seed=spec.seed,
                    k_max=spec.k_max)
    # the truth is shared along n so that n-slopes compare like with like
    return cfg, sample_truth(cfg, substream(spec.seed, "ratelab:truth", iq, ia, jd))


def _fit_one(spec: SweepSpec, cfg: GenConfig, ds):
    if spec.estimator == "oracle":
        j = ds.truth.active_set()[0] if ds.truth.active_set() else 0
        ridge = spec.ridge_const * cfg.n ** (-2 * cfg.alpha / (2 * cfg.alpha + 1))
        return fit_oracle_single(ds, j, ridge)
    fc = FitConfig(q=cfg.q, R=cfg.R, restarts=spec.restarts, seed=cfg.seed,
                   a_mult=spec.a_mult)
    if spec.estimator == "mixed_penalty":
        return fit_mixed_penalty(ds, fc)
    return fit_lq_constrained(ds, fc)


def run_cell(spec: SweepSpec, idx, params) -> SweepRecord:
    """All replicates of one grid cell."""
    n, d, q, alpha = params
    cfg, truth = _cell_truth(spec, idx, n, d, q, alpha)
    errors, failures = [], []
    n_conv = checked = passed = 0
    for r in range(spec.replicates):
        ds = sample_dataset(truth, n, spec.sigma, substream(spec.seed, "ratelab:data", *idx, r),
                            seed=spec.seed)
        try:
            fit = _fit_one(spec, cfg, ds)
        except (DomainError, np.linalg.LinAlgError, FloatingPointError) as exc:
            failures.append(f"rep {r}: {type(exc).__name__}: {exc}")
            continue
        errors.append(fit.population_error_sq)
        if spec.estimator == "lq_constrained" and fit.converged:
            n_conv += 1
            if lq_mass(truth, q) <= spec.R * (1 + 1e-9):
                checked += 1
                passed += bool(basic_inequality_check(fit, ds, tol=1e-10))
    errs = np.array(errors, dtype=float)
    if errs.size:
        q25, med, q75 = (float(v) for v in np.quantile(errs, [0.25, 0.5, 0.75]))
    else:
        q25 = med = q75 = math.nan
    return SweepRecord(
        n=n, d=d, q=q, alpha=alpha, estimator=spec.estimator, median_error_sq=med,
        q25=q25, q75=q75, theoretical_rate=theoretical_rate(n, d, q, alpha)[0],
        regime=regime_classify(n, d, q, alpha), replicates=spec.replicates, seed=spec.seed,
        n_failed=len(failures), n_converged=n_conv, basic_ineq_checked=checked,
        basic_ineq_passed=passed, failures="; ".join(failures),
    )


def _manifest_path(out_path: Path) -> Path:
    return out_path.with_suffix(".manifest.json")


def write_manifest(path: Path, subcommand: str, config: dict, seed, outputs, started,
                   finished=None, failures=(), inputs=()) -> None:
    manifest = {
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "version": __version__,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "started": started,
        "finished": finished,
        "status": "complete" if finished else "running",
        "failures": list(failures),
    }
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2)
    tmp.replace(path)


def _now():
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


def _cell_job(args):
    spec, idx, params = args
    return run_cell(spec, idx, params)


def run_rate_sweep(spec: SweepSpec) -> list[SweepRecord]:
    """Run every cell; with ``out_path`` set, append CSV rows as cells finish.

    Output is deterministic given the spec: cells are keyed by grid position
    and rows are written in grid order whatever the worker count.
    """
    jobs = [(spec, idx, params) for idx, params in spec.cells()]
    out = Path(spec.out_path) if spec.out_path else None
    started = _now()
    writer = fh = None
    if out is not None:
        out.parent.mkdir(parents=True, exist_ok=True)
        write_manifest(_manifest_path(out), "rate-sweep", asdict(spec), spec.seed, [out], started)
        fh = open(out, "w", newline="")
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        fh.flush()
    records = []
    try:
        if spec.threads > 1:
            pool = ProcessPoolExecutor(max_workers=spec.threads)
            results = pool.map(_cell_job, jobs)
        else:
            pool = None
            results = map(_cell_job, jobs)
        for rec in results:
            records.append(rec)
            if writer is not None:
                writer.writerow([_fmt(getattr(rec, k)) for k in CSV_FIELDS])
                fh.flush()
        if pool is not None:
            pool.shutdown()
    finally:
        if fh is not None:
            fh.close()
    if out is not None:
        fails = [f"n={r.n} d={r.d} q={r.q} alpha={r.alpha}: {r.failures}"
                 for r in records if r.failures]
        write_manifest(_manifest_path(out), "rate-sweep", asdict(spec), spec.seed, [out],
                       started, _now(), fails)
    return records


def read_sweep_csv(path) -> list[SweepRecord]:
    types = {f.name: f.type for f in fields(SweepRecord)}
    conv = {"int": int, "float": float, "str": str}
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(SweepRecord(**{k: conv[types[k]](v) for k, v in row.items()}))
    return out


# -- slopes ------------------------------------------------------------------------------


@dataclass(frozen=True)
class SlopeReport:
    axis: str
    slope: float
    stderr: float
    intercept: float
    n_points: int


def fit_rate_exponent(records, axis: str = "n") -> SlopeReport:
    """Least-squares slope of log median error against log n or log log d."""
    if axis not in ("n", "d"):
        raise DomainError("axis must be 'n' or 'd'")
    records = [r for r in records if np.isfinite(r.median_error_sq) and r.median_error_sq > 0]
    if len(records) < 4:
        raise DomainError("need at least 4 grid points along the axis")
    fixed = ("d", "q", "alpha", "estimator") if axis == "n" else ("n", "q", "alpha", "estimator")
    for name in fixed:
        if len({getattr(r, name) for r in records}) > 1:
            raise DomainError(f"{name} varies across records")
    xs = np.array([math.log(r.n) if axis == "n" else math.log(math.log(r.d)) for r in records])
    if len(np.unique(xs)) < 4:
        raise DomainError("need at least 4 distinct grid points along the axis")
    ys = np.log([r.median_error_sq for r in records])
    X = np.column_stack([np.ones_like(xs), xs])
    coef, res, *_ = np.linalg.lstsq(X, ys, rcond=None)
    resid = ys - X @ coef
    dof = len(xs) - 2
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    se = math.sqrt(s2 / float(np.sum((xs - xs.mean()) ** 2)))
    return SlopeReport(axis, float(coef[1]), se, float(coef[0]), len(xs))


# -- phase diagram ---------------------------------------------------------------------------


PLOT_SCRIPT = '''"""Two-region phase diagram from {csv_name} (needs matplotlib)."""
import csv
import sys

import matplotlib.pyplot as plt
import numpy as np

path = sys.argv[1] if len(sys.argv) > 1 else "{csv_name}"
with open(path) as fh:
    rows = list(csv.reader(fh))
dims = np.array([float(v) for v in rows[0][1:]])
alphas = np.array([float(r[0]) for r in rows[1:]])
sparse = np.array([[v == "Sparse" for v in r[1:]] for r in rows[1:]], dtype=float)
fig, ax = plt.subplots(figsize=(5, 4))
ax.pcolormesh(dims, alphas, sparse, shading="nearest", cmap="coolwarm", vmin=0, vmax=1)
ax.axhline(1 / {q!r} - 0.5, color="k", lw=0.8, ls="--")
ax.set_xlabel("log log d / log n")
ax.set_ylabel("alpha")
ax.set_title("q = {q}, n = {n}: red = sparse, blue = smooth")
fig.tight_layout()
fig.savefig(path.rsplit(".", 1)[0] + ".png", dpi=150)
'''


def phase_diagram(alpha_grid, dim_grid, n, q, out_path=None) -> np.ndarray:
    """Label matrix over ``alpha`` (rows) and ``log log d / log n`` (columns).

    With ``out_path`` set, writes the matrix as CSV and a standalone plot
    script next to it.
    """
    alpha_grid, dim_grid = list(alpha_grid), list(dim_grid)
    if not alpha_grid or not dim_grid:
        raise DomainError("grids must be nonempty")
    labels = np.empty((len(alpha_grid), len(dim_grid)), dtype=object)
    for i, a in enumerate(alpha_grid):
        for j, v in enumerate(dim_grid):
            log_d = max(n ** v, math.log(2))  # d = exp(n^v)
            labels[i, j] = regime_classify(n, None, q, a, log_d=log_d)
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["alpha\\dim"] + [_fmt(float(v)) for v in dim_grid])
            for a, row in zip(alpha_grid, labels):
                w.writerow([_fmt(float(a))] + list(row))
        out_path.with_suffix(".plot.py").write_text(
            PLOT_SCRIPT.format(csv_name=out_path.name, q=q, n=n))
    return labels


# -- suboptimality of the mixed penalty --------------------------------------------------------


SUBOPT_FIELDS = ["n", "d", "q", "alpha", "truth_mode", "s_active", "multiplier", "replicate",
                 "lq_error_sq", "mixed_error_sq", "ratio", "lq_active", "mixed_active"]


def many_weak_count(n, d, q) -> int:
    """``ceil((n / log d)^(q/2))``, capped at ``d``."""
    return min(d, math.ceil((n / math.log(d)) ** (q / 2)))


def suboptimality_experiment(spec: SweepSpec, multipliers=(0.25, 0.5, 1.0, 2.0, 4.0),
                             truth_modes=("single", "many"), out_path=None) -> list[dict]:
    """Mixed penalty over a multiplier grid against the constrained fit, same data.

    Every cell must be classified Smooth.  Rows carry per-replicate error
    ratios ``mixed / constrained``; nothing is asserted.
    """
    rows = []
    for idx, (n, d, q, alpha) in spec.cells():
        if regime_classify(n, d, q, alpha) != SMOOTH:
            raise DomainError(f"cell n={n} d={d} q={q} alpha={alpha} is not in the smooth regime")
    for idx, (n, d, q, alpha) in spec.cells():
        for im, mode in enumerate(truth_modes):
            s = 1 if mode == "single" else many_weak_count(n, d, q)
            cfg = GenConfig(n=n, d=d, q=q, R=spec.R, alpha=alpha, s_active=s, sigma=spec.sigma,
                            seed=spec.seed, k_max=spec.k_max)
            truth = sample_truth(cfg, substream(spec.seed, "ratelab:subopt-truth", *idx, im))
            for r in range(spec.replicates):
                ds = sample_dataset(truth, n, spec.sigma,
                                    substream(spec.seed, "ratelab:subopt-data", *idx, im, r),
                                    seed=spec.seed)
                fc = FitConfig(q=q, R=spec.R, restarts=spec.restarts, seed=spec.seed)
                lq = fit_lq_constrained(ds, fc)
                for m in multipliers:
                    mx = fit_mixed_penalty(ds, replace(fc, a_mult=m))
                    ratio = (mx.population_error_sq / lq.population_error_sq
                             if lq.population_error_sq > 0 else math.inf)
                    rows.append({
                        "n": n, "d": d, "q": q, "alpha": alpha, "truth_mode": mode,
                        "s_active": s, "multiplier": m, "replicate": r,
                        "lq_error_sq": lq.population_error_sq,
                        "mixed_error_sq": mx.population_error_sq, "ratio": ratio,
                        "lq_active": len(lq.active_set), "mixed_active": len(mx.active_set),
                    })
    if out_path is not None:
        out_path = Path(out_path)
        out_path.parent.mkdir(parents=True, exist_ok=True)
        with open(out_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SUBOPT_FIELDS)
            for row in rows:
                w.writerow([_fmt(row[k]) for k in SUBOPT_FIELDS])
    return rows
