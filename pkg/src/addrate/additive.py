"""Additive functions ``g(x) = g_1(x_1) + ... + g_d(x_d)`` in coefficient form.

Because the basis carries no constant, the additive representation is unique
and the l_q(H_d) quasi-norm is a plain sum over the stored components.  Under
the product-uniform design every population quantity is exact coefficient
arithmetic.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._rng import as_generator
from .eigenbasis import (
    ComponentFunction,
    DomainError,
    EigenSystem,
    _check_unit_interval,
    rkhs_norm,
)


@dataclass(frozen=True)
class AdditiveFunction:
    """``d`` components stored as a ``(d, k_max)`` coefficient matrix."""

    es: EigenSystem
    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.ndim != 2 or theta.shape[1] != self.es.k_max:
            raise DomainError(
                f"theta must have shape (d, {self.es.k_max}), got {theta.shape}"
            )
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    @classmethod
    def zeros(cls, es: EigenSystem, d: int) -> "AdditiveFunction":
        return cls(es, np.zeros((d, es.k_max)))

    @property
    def d(self) -> int:
        return self.theta.shape[0]

    @property
    def components(self) -> list[ComponentFunction]:
        return [ComponentFunction(row) for row in self.theta]

    def component_rkhs_norms(self) -> np.ndarray:
        return rkhs_norm(self.es, self.theta)

    def component_l2_norms(self) -> np.ndarray:
        return np.linalg.norm(self.theta, axis=1)

    def active_set(self) -> list[int]:
        return [int(j) for j in np.flatnonzero(np.any(self.theta != 0.0, axis=1))]

    def __call__(self, x) -> np.ndarray:
        return eval_additive(self, x)

    def __sub__(self, other: "AdditiveFunction") -> "AdditiveFunction":
        _check_compatible(self, other)
        return AdditiveFunction(self.es, self.theta - other.theta)

    def scaled(self, c: float) -> "AdditiveFunction":
        return AdditiveFunction(self.es, c * self.theta)

    # -- persistence -------------------------------------------------------

    def to_record(self) -> dict:
        return {
            "d": self.d,
            "k_max": self.es.k_max,
            "alpha": self.es.alpha,
            "theta": self.theta.ravel().tolist(),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "AdditiveFunction":
        es = EigenSystem(float(rec["alpha"]), int(rec["k_max"]))
        theta = np.asarray(rec["theta"], dtype=float)
        if theta.size != rec["d"] * rec["k_max"]:
            raise DomainError("theta length does not match d * k_max")
        return cls(es, theta.reshape(rec["d"], rec["k_max"]))

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_record(), fh)

    @classmethod
    def load(cls, path) -> "AdditiveFunction":
        with open(path) as fh:
            return cls.from_record(json.load(fh))


def _check_compatible(f: AdditiveFunction, g: AdditiveFunction) -> None:
    if f.theta.shape != g.theta.shape or f.es != g.es:
        raise DomainError("additive functions live in different spaces")


def eval_additive(f: AdditiveFunction, x) -> np.ndarray | float:
    """Evaluate at a point of length ``d`` or at the rows of an ``(n, d)`` array."""
    x = _check_unit_interval(x)
    if x.shape[-1:] != (f.d,):
        raise DomainError(f"points must have {f.d} coordinates, got shape {x.shape}")
    vals = np.zeros(x.shape[:-1])
    for j in f.active_set():
        vals = vals + f.es.basis(x[..., j]) @ f.theta[j]
    return float(vals) if vals.ndim == 0 else vals


def lq_mass(f: AdditiveFunction, q: float) -> float:
    """``sum_j ||f_j||_H^q``; membership in ``B_R`` means ``lq_mass <= R``."""
    if not 0.0 < q <= 1.0:
        raise DomainError("q must lie in (0,1]")
    return float(np.sum(f.component_rkhs_norms() ** q))


def in_ball(f: AdditiveFunction, q: float, R: float) -> bool:
    return lq_mass(f, q) <= R


def l1_norm(f: AdditiveFunction) -> float:
    """``||f||_{l1(H_d)}``, an upper bound on the sup-norm."""
    return float(np.sum(f.component_rkhs_norms()))


def sup_norm_grid(f: AdditiveFunction, grid_size: int = 10_000) -> float:
    """Grid supremum of ``|f|`` over ``[0, 1]^d``.

    The cube is a product, so ``sup f = sum_j sup f_j`` and likewise for the
    infimum; only univariate grids are needed.
    """
    grid = np.linspace(0.0, 1.0, grid_size)
    vals = f.es.basis(grid) @ f.theta.T  # (grid, d)
    return float(max(vals.max(axis=0).sum(), -vals.min(axis=0).sum()))


def additive_kernel_eval(es: EigenSystem, x, xp) -> float:
    """``K_d(x, x') = sum_j K(x_j, x'_j)``."""
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    if x.shape != xp.shape or x.ndim != 1:
        raise DomainError("kernel arguments must be vectors of equal length")
    return float(np.sum(es.kernel(x, xp)))


def l2_pi_distance_sq(f: AdditiveFunction, g: AdditiveFunction) -> float:
    """Exact ``||f - g||^2_{L2(Pi)}`` under the product-uniform design."""
    _check_compatible(f, g)
    return float(np.sum((f.theta - g.theta) ** 2))


@dataclass(frozen=True)
class RatioReport:
    ratio: float
    ci_low: float
    ci_high: float
    n_mc: int
    exact: bool


def re_condition_check(f: AdditiveFunction, n_mc: int = 100_000, rng_seed=None,
                       z: float = 1.96) -> RatioReport:
    """Monte-Carlo estimate of ``sum_j ||f_j||^2 / ||f||^2_{L2(Pi)}``.

    The population value is 1 for product measures.  A single active
    component makes the two sides identical and needs no sampling.
    """
    if n_mc < 10_000:
        raise DomainError("n_mc must be at least 1e4")
    active = f.active_set()
    if not active:
        raise DomainError("ratio undefined for the zero function")
    numerator = float(np.sum(f.theta**2))
    if len(active) == 1:
        return RatioReport(1.0, 1.0, 1.0, 0, True)

    rng = as_generator(rng_seed)
    sub = AdditiveFunction(f.es, f.theta[active])
    X = rng.uniform(size=(n_mc, len(active)))
    sq = eval_additive(sub, X) ** 2
    mean = sq.mean()
    se = sq.std(ddof=1) / np.sqrt(n_mc)
    lo, hi = mean - z * se, mean + z * se
    return RatioReport(
        ratio=numerator / mean,
        ci_low=numerator / hi,
        ci_high=numerator / lo if lo > 0 else np.inf,
        n_mc=n_mc,
        exact=False,
    )
