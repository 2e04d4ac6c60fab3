"""Ground-truth functions on the l_q(H_d) sphere and noisy regression data."""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ._rng import as_generator, substream
from .additive import AdditiveFunction, eval_additive
from .eigenbasis import DomainError, EigenSystem

# Extra decay in the within-component coefficient profile.
PROFILE_EPS = 0.01


@dataclass(frozen=True)
class GenConfig:
    n: int
    d: int
    q: float = 0.5
    R: float = 1.0
    alpha: float = 1.0
    s_active: int = 1
    sigma: float = 0.5
    seed: int = 0
    k_max: int = 64

    def __post_init__(self):
        if self.n < 1:
            raise DomainError("n must be at least 1")
        if not 0.0 < self.q <= 1.0:
            raise DomainError("q must lie in (0,1]")
        if not 1 <= self.s_active <= self.d:
            raise DomainError(f"s_active must lie in [1, d={self.d}]")
        if self.sigma < 0:
            raise DomainError("sigma must be nonnegative")
        if self.R <= 0:
            raise DomainError("R must be positive")

    @property
    def eigensystem(self) -> EigenSystem:
        return EigenSystem(self.alpha, self.k_max)

    def in_regime(self, c0: float = 1.0) -> bool:
        """Whether ``c0 n^(q/2) <= d <= e^n`` holds."""
        return c0 * self.n ** (self.q / 2) <= self.d <= math.exp(min(self.n, 700))


@dataclass(frozen=True)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    truth: AdditiveFunction | None = None
    sigma: float | None = None
    seed: int | None = None

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        if X.ndim != 2 or Y.shape != (X.shape[0],):
            raise DomainError("X must be (n, d) and Y must have length n")
        if np.any(X < 0) or np.any(X > 1):
            raise DomainError("covariates must lie in [0, 1]")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    def noise(self) -> np.ndarray:
        if self.truth is None:
            raise DomainError("dataset carries no truth")
        return self.Y - eval_additive(self.truth, self.X)


def component_profile(es: EigenSystem) -> np.ndarray:
    """Unsigned coefficient shape ``sqrt(lambda_k / Z) k^(-1/2 - eps)``."""
    k = np.arange(1, es.k_max + 1)
    return np.sqrt(es.eff_lambdas) * k ** (-0.5 - PROFILE_EPS)


def sample_truth(cfg: GenConfig, rng=None) -> AdditiveFunction:
    """Draw ``f`` with ``s_active`` equal-mass components and ``lq_mass = R``."""
    rng = as_generator(cfg.seed if rng is None else rng)
    es = cfg.eigensystem
    target = (cfg.R / cfg.s_active) ** (1.0 / cfg.q)
    profile = component_profile(es)
    profile = profile / np.sqrt(np.sum(profile**2 * es.rkhs_weights))

    active = np.sort(rng.choice(cfg.d, size=cfg.s_active, replace=False))
    theta = np.zeros((cfg.d, es.k_max))
    for j in active:
        signs = rng.choice([-1.0, 1.0], size=es.k_max)
        theta[j] = target * signs * profile
    return AdditiveFunction(es, theta)


def sample_dataset(f: AdditiveFunction, n: int, sigma: float, rng=None,
                   seed: int | None = None) -> Dataset:
    """``X_i`` iid uniform on ``[0,1]^d``, ``Y_i = f(X_i) + sigma z_i``."""
    if n < 1:
        raise DomainError("n must be at least 1")
    if sigma < 0:
        raise DomainError("sigma must be nonnegative")
    rng = as_generator(seed if rng is None else rng)
    X = rng.uniform(size=(n, f.d))
    z = rng.standard_normal(n)
    Y = eval_additive(f, X) + sigma * z
    return Dataset(X, Y, truth=f, sigma=sigma, seed=seed)


def empirical_l2_sq(g: AdditiveFunction, ds: Dataset) -> float:
    """``(1/n) sum_i g(X_i)^2``."""
    if g.d != ds.d:
        raise DomainError("function and dataset dimensions differ")
    return float(np.mean(eval_additive(g, ds.X) ** 2))


def generate(cfg: GenConfig) -> Dataset:
    """Truth and data from one config, using named substreams of ``cfg.seed``."""
    if not cfg.in_regime():
        warnings.warn(
            f"(n={cfg.n}, d={cfg.d}) is outside c0 n^(q/2) <= d <= e^n", stacklevel=2
        )
    truth = sample_truth(cfg, substream(cfg.seed, "synthgen:truth"))
    return sample_dataset(truth, cfg.n, cfg.sigma,
                          substream(cfg.seed, "synthgen:data"), seed=cfg.seed)


# -- persistence -----------------------------------------------------------


def save_dataset(ds: Dataset, csv_path, cfg: GenConfig | None = None,
                 truth_path=None) -> Path:
    """Write ``x1..xd,y`` CSV plus a ``.json`` sidecar manifest; return the sidecar."""
    csv_path = Path(csv_path)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{j + 1}" for j in range(ds.d)] + ["y"])
        for xi, yi in zip(ds.X, ds.Y):
            w.writerow([repr(float(v)) for v in xi] + [repr(float(yi))])
    if truth_path is not None and ds.truth is not None:
        ds.truth.save(truth_path)
    manifest = {
        "cfg": asdict(cfg) if cfg is not None else None,
        "seed": ds.seed,
        "sigma": ds.sigma,
        "n": ds.n,
        "d": ds.d,
        "truth": (os.path.relpath(truth_path, csv_path.parent)
                  if truth_path is not None else None),
    }
    sidecar = csv_path.with_suffix(".json")
    with open(sidecar, "w") as fh:
        json.dump(manifest, fh, indent=2)
    return sidecar


def load_dataset(csv_path) -> Dataset:
    csv_path = Path(csv_path)
    with open(csv_path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    if not header or header[-1] != "y" or header[:-1] != [f"x{j + 1}" for j in range(len(header) - 1)]:
        raise DomainError(f"{csv_path}: header must be x1,...,xd,y")
    data = np.array(body, dtype=float).reshape(len(body), len(header))
    truth = sigma = seed = None
    sidecar = csv_path.with_suffix(".json")
    if sidecar.exists():
        with open(sidecar) as fh:
            manifest = json.load(fh)
        sigma, seed = manifest.get("sigma"), manifest.get("seed")
        if manifest.get("truth"):
            truth = AdditiveFunction.load(sidecar.parent / manifest["truth"])
    return Dataset(data[:, :-1], data[:, -1], truth=truth, sigma=sigma, seed=seed)
