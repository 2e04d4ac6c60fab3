"""Truncated Mercer eigen-system for the component RKHS.

The component space on ``[0, 1]`` (uniform marginal) is spanned by the
cosine basis ``phi_k(x) = sqrt(2) cos(k pi x)``, ``k = 1..k_max``, which is
orthonormal in ``L2[0, 1]``, mean zero, and bounded by ``sqrt(2)``.  The raw
eigenvalues are ``k^(-2 alpha)``; dividing them by ``Z = 2 sum_k lambda_k``
gives ``sup_x K(x, x) = K(0, 0) = 1``.

Coefficients ``theta`` are always expressed in this basis, so

* ``||h||_{L2}^2 = sum theta_k^2``
* ``||h||_K^2   = sum theta_k^2 * Z / lambda_k``
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SQRT2 = np.sqrt(2.0)
SUP_GRID_SIZE = 10_000


class DomainError(ValueError):
    """An argument lies outside the domain of an operation."""


def _check_unit_interval(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > 1.0):
        raise DomainError("points must lie in [0, 1]")
    return x


@dataclass(frozen=True)
class EigenSystem:
    """Eigenvalues ``k^(-2 alpha)`` truncated at ``k_max``.

    Parameters
    ----------
    alpha : float
        Smoothness exponent, must exceed 1/2.
    k_max : int
        Number of basis functions kept.
    """

    alpha: float
    k_max: int = 64
    lambdas: np.ndarray = field(init=False, repr=False, compare=False)
    norm_const: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if not self.alpha > 0.5:
            raise DomainError(f"alpha must exceed 1/2, got {self.alpha}")
        if int(self.k_max) != self.k_max or self.k_max < 1:
            raise DomainError(f"k_max must be a positive integer, got {self.k_max}")
        object.__setattr__(self, "k_max", int(self.k_max))
        k = np.arange(1, self.k_max + 1, dtype=float)
        lambdas = k ** (-2.0 * self.alpha)
        lambdas.setflags(write=False)
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "norm_const", float(2.0 * lambdas.sum()))

    @property
    def eff_lambdas(self) -> np.ndarray:
        """Eigenvalues of the normalized kernel, ``lambda_k / Z``."""
        return self.lambdas / self.norm_const

    @property
    def rkhs_weights(self) -> np.ndarray:
        """Diagonal weights ``Z / lambda_k`` of the squared RKHS norm."""
        return self.norm_const / self.lambdas

    def basis(self, x) -> np.ndarray:
        """Evaluate all basis functions; output shape ``x.shape + (k_max,)``."""
        x = _check_unit_interval(x)
        k = np.arange(1, self.k_max + 1)
        return SQRT2 * np.cos(np.pi * x[..., None] * k)

    def kernel(self, x, xp) -> np.ndarray:
        """Normalized kernel ``K(x, x')`` with broadcasting over ``x`` and ``x'``."""
        return np.sum(self.eff_lambdas * self.basis(x) * self.basis(xp), axis=-1)


@dataclass(frozen=True)
class ComponentFunction:
    """A univariate function given by its basis coefficients."""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.array(self.theta, dtype=float)
        if theta.ndim != 1:
            raise DomainError("theta must be a vector")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def __call__(self, es: EigenSystem, x) -> np.ndarray:
        _check_length(es, self)
        return es.basis(x) @ self.theta


def _check_length(es: EigenSystem, f: ComponentFunction) -> None:
    if f.theta.shape[0] != es.k_max:
        raise DomainError(
            f"coefficient length {f.theta.shape[0]} does not match k_max={es.k_max}"
        )


def eigenfunction_eval(k: int, x, k_max: int | None = None):
    """Evaluate ``phi_k(x) = sqrt(2) cos(k pi x)``.

    ``k_max``, when given, bounds the admissible index.
    """
    if int(k) != k or k < 1 or (k_max is not None and k > k_max):
        raise DomainError(f"basis index {k} out of range")
    x = _check_unit_interval(x)
    out = SQRT2 * np.cos(k * np.pi * x)
    return float(out) if out.ndim == 0 else out


def kernel_eval(es: EigenSystem, x, xp):
    """Normalized kernel value; scalars in give a float out."""
    out = es.kernel(x, xp)
    return float(out) if np.ndim(out) == 0 else out


def rkhs_norm(es: EigenSystem, theta) -> float | np.ndarray:
    """RKHS norm of coefficient vector(s) along the last axis."""
    theta = np.asarray(theta, dtype=float)
    return np.sqrt(np.sum(theta**2 * es.rkhs_weights, axis=-1))


def sup_norm_grid(es: EigenSystem, theta, grid_size: int = SUP_GRID_SIZE) -> float:
    """Maximum of ``|h|`` over a uniform grid including both endpoints."""
    grid = np.linspace(0.0, 1.0, grid_size)
    return float(np.max(np.abs(es.basis(grid) @ np.asarray(theta, dtype=float))))


def norms(es: EigenSystem, f: ComponentFunction, grid_size: int = SUP_GRID_SIZE):
    """Return ``(rkhs_norm, l2_norm, sup_norm_estimate)`` of ``f``.

    The sup-norm is a grid maximum, so it may undershoot the true supremum by
    at most the grid resolution times the Lipschitz constant of ``f``.
    """
    _check_length(es, f)
    if grid_size < SUP_GRID_SIZE:
        raise DomainError(f"sup-norm grid needs at least {SUP_GRID_SIZE} points")
    return (
        float(rkhs_norm(es, f.theta)),
        float(np.linalg.norm(f.theta)),
        sup_norm_grid(es, f.theta, grid_size),
    )
