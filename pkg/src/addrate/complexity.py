"""Monte-Carlo Rademacher and Gaussian complexities of localized RKHS balls.

For one coordinate with design points ``x_1..x_n`` and multipliers ``w_i``
the localized complexity at radius ``u`` is

    sup { |(1/n) sum_i w_i h(x_i)| : ||h||_K <= 1, ||h||_{L2} <= u }

where the L2 norm is the population norm (Rademacher version) or the
empirical norm (Gaussian version).  In the truncated basis this is a linear
objective over the intersection of two centred ellipsoids, solved exactly by
bisection on the constraint-mixing multiplier.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import substream
from .eigenbasis import DomainError, EigenSystem

BISECTION_STEPS = 200
_LOG_TAU_RANGE = (-60.0, 60.0)


def _mixing_gap(c2, e, tau):
    """Derivative sign of the dual function; positive means increase ``tau``."""
    a = 1.0 / (1.0 + tau * e)
    return np.sum(c2 * a * a * e, axis=-1) * (1.0 + tau[..., 0]) - np.sum(c2 * a, axis=-1)


def _sup_two_ellipsoids(c, dvals, u):
    """``max c.z`` s.t. ``|z| <= 1`` and ``sum dvals z^2 <= u^2``.

    ``c`` has shape ``(m, k)`` and ``u`` shape ``(m,)``.  Returns
    ``(value, z)`` where ``z`` is feasible for both constraints.
    """
    c = np.atleast_2d(np.asarray(c, dtype=float))
    dvals = np.broadcast_to(np.asarray(dvals, dtype=float), c.shape)
    u = np.broadcast_to(np.asarray(u, dtype=float).reshape(-1), c.shape[:-1])
    c2 = c * c
    u2 = np.maximum(u * u, 1e-300)[..., None]
    e = dvals / u2

    # multipliers tau in (0, inf) on a log scale; tau -> inf is the ball-only end
    lo = np.full(c.shape[:-1], _LOG_TAU_RANGE[0])
    hi = np.full(c.shape[:-1], _LOG_TAU_RANGE[1])
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        up = _mixing_gap(c2, e, np.exp(mid)[..., None]) > 0
        lo = np.where(up, mid, lo)
        hi = np.where(up, hi, mid)
        if np.all(hi - lo < 1e-13):
            break
    tau = np.exp(0.5 * (lo + hi))[..., None]
    z = c / (1.0 + tau * e)

    # ball inactive: the ellipsoid-only maximizer is already feasible
    z0_ok = np.sum(c2 * dvals, axis=-1) <= u * u * np.sum(c2, axis=-1)
    z = np.where(z0_ok[..., None], c, z)

    radius = np.sqrt(np.sum(z * z, axis=-1))
    dnorm = np.sqrt(np.sum(dvals * z * z, axis=-1))
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.minimum(np.where(radius > 0, 1.0 / radius, 0.0),
                           np.where(dnorm > 0, u / dnorm, np.inf))
    scale = np.where(np.isfinite(scale), scale, 0.0)
    z = z * scale[..., None]
    zero_u = u <= 0
    if np.any(zero_u):
        # only directions with dvals == 0 remain feasible at u = 0
        null = (dvals <= 0.0) & zero_u[..., None]
        cn = np.where(null, c, 0.0)
        nrm = np.sqrt(np.sum(cn * cn, axis=-1, keepdims=True))
        zn = np.where(nrm > 0, cn / np.where(nrm > 0, nrm, 1.0), 0.0)
        z = np.where(zero_u[..., None], zn, z)
    return np.sum(c * z, axis=-1), z


def _whiten(b, lambdas_eff, G):
    """Map the problem to ``|z| <= 1`` plus a diagonal second constraint."""
    sq = np.sqrt(lambdas_eff)
    if G is None:
        return sq * b, lambdas_eff, None
    G = np.asarray(G, dtype=float)
    H = sq[:, None] * G * sq[None, :]
    H = 0.5 * (H + H.T)
    dvals, V = np.linalg.eigh(H)
    if dvals[0] < -1e-10 * max(1.0, abs(dvals[-1])):
        raise DomainError("G must be positive semi-definite")
    return V.T @ (sq * b), np.maximum(dvals, 0.0), V


def sup_linear_over_ellipsoid_and_ball(b, lambdas_eff, u, G=None, return_theta=False):
    """Maximize ``b.theta`` over ``theta' diag(1/lambda) theta <= 1`` and a ball.

    The ball is ``|theta|^2 <= u^2`` when ``G`` is None, otherwise
    ``theta' G theta <= u^2``.  ``u`` may be a scalar or an array of radii.
    """
    b = np.asarray(b, dtype=float)
    lambdas_eff = np.asarray(lambdas_eff, dtype=float)
    u_arr = np.asarray(u, dtype=float)
    if np.any(u_arr < 0):
        raise DomainError("u must be nonnegative")
    if np.any(lambdas_eff <= 0):
        raise DomainError("eigenvalues must be positive")
    c, dvals, V = _whiten(b, lambdas_eff, G)
    flat_u = u_arr.reshape(-1)
    value, z = _sup_two_ellipsoids(np.broadcast_to(c, (flat_u.size, c.size)), dvals, flat_u)
    w = z if V is None else z @ V.T
    theta = (np.sqrt(lambdas_eff) * w).reshape(u_arr.shape + c.shape)
    value = value.reshape(u_arr.shape)
    if u_arr.ndim == 0:
        value = float(value)
    return (value, theta) if return_theta else value


# -- curves ------------------------------------------------------------------


@dataclass
class ComplexityCurve:
    """Replicate values of a localized complexity on a radius grid."""

    u_grid: np.ndarray
    values: np.ndarray  # (replicates, len(u_grid))
    n: int
    d: int
    alpha: float
    which: str
    seed: int
    replicates: int = field(init=False)

    def __post_init__(self):
        self.replicates = self.values.shape[0]

    def mean(self) -> np.ndarray:
        return self.values.mean(axis=0)

    def std_err(self) -> np.ndarray:
        return self.values.std(axis=0, ddof=1) / np.sqrt(self.replicates)

    def quantile(self, beta: float) -> np.ndarray:
        """Empirical ``1 - d^(-beta)`` quantile across replicates."""
        return np.quantile(self.values, 1.0 - self.d ** (-beta), axis=0)

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.values, axis=1) >= 0))

    def to_csv(self, path, beta: float = 1.0) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["u", "mean", "qbeta", "n", "d", "alpha", "which", "seed"])
            for u, m, qb in zip(self.u_grid, self.mean(), self.quantile(beta)):
                w.writerow([repr(float(u)), repr(float(m)), repr(float(qb)),
                            self.n, self.d, self.alpha, self.which, self.seed])


def _check_grid(u_grid) -> np.ndarray:
    u_grid = np.asarray(u_grid, dtype=float)
    if u_grid.ndim != 1 or u_grid.size == 0 or np.any(u_grid <= 0) or np.any(u_grid > 1):
        raise DomainError("u_grid must be a nonempty subset of (0, 1]")
    if np.any(np.diff(u_grid) <= 0):
        raise DomainError("u_grid must be increasing")
    return u_grid


def _running_max(values: np.ndarray) -> np.ndarray:
    # every point feasible at a smaller radius stays feasible at a larger one
    return np.maximum.accumulate(values, axis=-1)


def rademacher_curve(n: int, d: int, es: EigenSystem, u_grid, replicates: int = 2000,
                     seed: int = 0) -> ComplexityCurve:
    """Localized Rademacher complexity with the population L2 constraint."""
    u_grid = _check_grid(u_grid)
    lam = es.eff_lambdas
    vals = np.empty((replicates, u_grid.size))
    for r in range(replicates):
        rng = substream(seed, "complexity:rademacher", n, r)
        x = rng.uniform(size=n)
        sig = rng.choice([-1.0, 1.0], size=n)
        b = es.basis(x).T @ sig / n
        c = np.sqrt(lam) * b
        vals[r], _ = _sup_two_ellipsoids(np.broadcast_to(c, (u_grid.size, c.size)),
                                         lam, u_grid)
    return ComplexityCurve(u_grid, _running_max(vals), n, d, es.alpha, "rademacher", seed)


def gaussian_curve(n: int, d: int, es: EigenSystem, u_grid, replicates: int = 2000,
                   seed: int = 0) -> ComplexityCurve:
    """Empirical Gaussian complexity with the empirical L2 constraint."""
    u_grid = _check_grid(u_grid)
    lam = es.eff_lambdas
    vals = np.empty((replicates, u_grid.size))
    for r in range(replicates):
        rng = substream(seed, "complexity:gaussian", n, r)
        x = rng.uniform(size=n)
        eps = rng.standard_normal(n)
        Phi = es.basis(x)
        b = Phi.T @ eps / n
        G = Phi.T @ Phi / n
        c, dvals, _ = _whiten(b, lam, G)
        vals[r], _ = _sup_two_ellipsoids(np.broadcast_to(c, (u_grid.size, c.size)),
                                         dvals, u_grid)
    return ComplexityCurve(u_grid, _running_max(vals), n, d, es.alpha, "gaussian", seed)


# -- envelope checks -----------------------------------------------------------


def envelope(u, n: int, d: int, alpha: float, beta: float, which: str) -> np.ndarray:
    """High-probability envelope with unit constant.

    ``which="lemma1"`` includes the ``beta log d / sqrt(n)`` term, ``"lemma2"``
    omits it.
    """
    u = np.asarray(u, dtype=float)
    logd = math.log(d)
    env = u ** (1 - 1 / (2 * alpha)) + u * math.sqrt(beta * logd) + math.exp(-d)
    if which == "lemma1":
        env = env + beta * logd / math.sqrt(n)
    elif which != "lemma2":
        raise DomainError("which must be 'lemma1' or 'lemma2'")
    return env / math.sqrt(n)


@dataclass(frozen=True)
class EnvelopeReport:
    which: str
    n: int
    d: int
    beta: float
    c_hat: float
    u_at_max: float
    ratios: list

    def to_json(self) -> str:
        return json.dumps({
            "which": self.which, "n": self.n, "d": self.d, "beta": self.beta,
            "c_hat": self.c_hat, "u_at_max": self.u_at_max, "ratios": self.ratios,
            "note": "constant fitted with c = 1; only its stability in n is meaningful",
        }, indent=2)


def lemma_envelope_check(curve: ComplexityCurve, beta: float = 1.0,
                         which: str | None = None) -> EnvelopeReport:
    """Ratio of the ``1 - d^(-beta)`` quantile curve to the envelope."""
    if curve.values.size == 0:
        raise DomainError("empty curve")
    if which is None:
        which = "lemma1" if curve.which == "rademacher" else "lemma2"
    ratios = curve.quantile(beta) / envelope(curve.u_grid, curve.n, curve.d,
                                             curve.alpha, beta, which)
    i = int(np.argmax(ratios))
    return EnvelopeReport(which, curve.n, curve.d, beta, float(ratios[i]),
                          float(curve.u_grid[i]), [float(r) for r in ratios])


def log_slope(xs, ys) -> tuple[float, float]:
    """Least-squares slope of ``log y`` on ``log x`` with its standard error."""
    lx, ly = np.log(np.asarray(xs, float)), np.log(np.asarray(ys, float))
    A = np.vstack([lx, np.ones_like(lx)]).T
    coef, *_ = np.linalg.lstsq(A, ly, rcond=None)
    resid = ly - A @ coef
    dof = max(len(lx) - 2, 1)
    se = math.sqrt(float(resid @ resid) / dof / float(np.sum((lx - lx.mean()) ** 2)))
    return float(coef[0]), se


def envelope_constant_slope(reports: list[EnvelopeReport], tol: float = 0.2) -> dict:
    """Whether the fitted constant stays flat along an ``n`` grid."""
    ns = [r.n for r in reports]
    slope, se = log_slope(ns, [r.c_hat for r in reports])
    return {"n": ns, "c_hat": [r.c_hat for r in reports], "slope": slope,
            "slope_se": se, "bounded": abs(slope) <= tol}


# -- norm transfer -------------------------------------------------------------


@dataclass(frozen=True)
class NormTransferReport:
    n: int
    d: int
    beta: float
    delta: float
    c2_forward: float  # population <= C2 (empirical + delta * rkhs)
    c2_reverse: float  # empirical <= C2 (population + delta * rkhs)
    trials: int


def _top_generalized(A, B) -> np.ndarray:
    """Leading eigenvector of ``A v = mu B v`` for symmetric ``A`` and SPD ``B``."""
    L = np.linalg.cholesky(B)
    Li = np.linalg.inv(L)
    _, V = np.linalg.eigh(Li @ A @ Li.T)
    return Li.T @ V[:, -1]


def norm_transfer_check(n: int, d: int, es: EigenSystem, beta: float = 1.0,
                        trials: int = 200, seed: int = 0) -> NormTransferReport:
    """Smallest constants making both norm-transfer inequalities hold on all trials.

    Each trial draws a fresh design and tests a rotating family of functions:
    a random single basis function, a random smooth function, the top basis
    function ``phi_kmax``, and the near-worst direction from a generalized
    eigenproblem.
    """
    if trials < 100:
        raise DomainError("trials must be at least 100")
    delta = n ** (-es.alpha / (2 * es.alpha + 1)) + math.sqrt((beta + 1) * math.log(d) / n)
    W = np.diag(es.rkhs_weights)
    I = np.eye(es.k_max)
    fwd = rev = 0.0
    for t in range(trials):
        rng = substream(seed, "complexity:norm-transfer", n, t)
        Phi = es.basis(rng.uniform(size=n))
        G = Phi.T @ Phi / n
        hs = []
        e = np.zeros(es.k_max)
        e[rng.integers(es.k_max)] = 1.0
        hs.append(e)
        hs.append(rng.standard_normal(es.k_max) * np.sqrt(es.eff_lambdas))
        top = np.zeros(es.k_max)
        top[-1] = 1.0
        hs.append(top)
        hs.append(_top_generalized(I, G + delta**2 * W + 1e-14 * I))
        hs.append(_top_generalized(G, I + delta**2 * W))
        for th in hs:
            pop = math.sqrt(th @ th)
            emp = math.sqrt(max(th @ G @ th, 0.0))
            hn = math.sqrt(th @ W @ th)
            fwd = max(fwd, pop / (emp + delta * hn))
            rev = max(rev, emp / (pop + delta * hn))
    return NormTransferReport(n, d, beta, delta, fwd, rev, trials)


def norm_transfer_scan(n_grid, d: int, es: EigenSystem, beta: float = 1.0,
                       trials: int = 200, seed: int = 0, tol: float = 0.2) -> dict:
    """Run :func:`norm_transfer_check` along ``n_grid`` and flag growing constants."""
    reports = [norm_transfer_check(n, d, es, beta, trials, seed) for n in n_grid]
    out = {"reports": reports}
    for name in ("c2_forward", "c2_reverse"):
        slope, _ = log_slope(list(n_grid), [getattr(r, name) for r in reports])
        out[name + "_slope"] = slope
        out[name + "_grows"] = slope > tol
    return out
