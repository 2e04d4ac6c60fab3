"""Estimators for the sparse additive model.

* :func:`fit_lq_constrained` -- least squares over ``B_R(l_q(H_d))``
* :func:`fit_mixed_penalty` -- least squares plus ``a^2 sum ||g_j||_H + a sum ||g_j||_n``
* :func:`fit_oracle_single` -- generalized ridge on one known coordinate
* :func:`brute_force_lse` -- exhaustive grid oracle for tiny problems

Both block-coordinate solvers work in a per-block rotated basis.  With
``Psi_j = Phi_j diag(sqrt(lambda / Z))`` and the eigendecomposition
``Psi_j' Psi_j / n = V_j diag(D_j) V_j'``, coordinates ``z_j = V_j' w_j``
make the RKHS norm ``|z_j|``, the empirical norm ``sqrt(z_j' D_j z_j)`` and
the block Gram matrix ``diag(D_j)``, so every block update is elementwise.
"""

from __future__ import annotations

import itertools
import json
import math
import warnings
import zlib
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ._rng import substream
from .additive import AdditiveFunction, l2_pi_distance_sq, lq_mass
from .eigenbasis import DomainError, EigenSystem
from .synthgen import Dataset

_NU_GRID = np.logspace(-10, 4, 29)
_MONO_SLACK = 1e-12
_OBJ_FLOOR = 1e-6


class SingularSystemError(np.linalg.LinAlgError):
    """A ridge system with zero penalty is singular."""


@dataclass(frozen=True)
class FitConfig:
    q: float = 0.5
    R: float = 1.0
    mass_window: float = 1e-3
    mu_steps: int = 40
    a_n: float | None = None
    a_mult: float = 1.0
    max_outer: int = 500
    max_inner: int = 100
    tol: float = 1e-8
    restarts: int = 5
    beta: float = 1.0
    seed: int = 0
    alpha: float | None = None
    k_max: int | None = None

    def __post_init__(self):
        if not 0.0 < self.q <= 1.0:
            raise DomainError("q must lie in (0,1]")
        if self.R < 0:
            raise DomainError("R must be nonnegative")
        if not self.tol > 0:
            raise DomainError("tol must be positive")
        if self.restarts < 1:
            raise DomainError("restarts must be at least 1")


@dataclass
class FitResult:
    fhat: AdditiveFunction
    empirical_risk: float
    population_error_sq: float | None
    active_set: list[int]
    iterations: int
    converged: bool
    objective_trace: list[float] = field(default_factory=list)
    restart_best_index: int = 0
    estimator: str = ""
    objective: float = math.nan
    mu: float | None = None
    mass: float | None = None
    config: FitConfig | None = None

    def to_record(self) -> dict:
        cfg = asdict(self.config) if self.config is not None else None
        return {
            "estimator": self.estimator,
            "config": cfg,
            "seed": cfg["seed"] if cfg else None,
            "active_set": self.active_set,
            "rkhs_norms": self.fhat.component_rkhs_norms().tolist(),
            "l2_norms": self.fhat.component_l2_norms().tolist(),
            "empirical_risk": self.empirical_risk,
            "population_error_sq": self.population_error_sq,
            "objective": self.objective,
            "mu": self.mu,
            "mass": self.mass,
            "iterations": self.iterations,
            "converged": self.converged,
            "restart_best_index": self.restart_best_index,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), indent=2)


# -- design --------------------------------------------------------------------


def _resolve_es(ds: Dataset, cfg: FitConfig | None, es: EigenSystem | None) -> EigenSystem:
    if es is not None:
        return es
    if cfg is not None and cfg.alpha is not None:
        k_max = cfg.k_max or (ds.truth.es.k_max if ds.truth is not None else 64)
        return EigenSystem(cfg.alpha, k_max)
    if ds.truth is not None:
        return ds.truth.es
    raise DomainError("no eigen-system: set alpha in the config or attach a truth")


def canonical_order(X: np.ndarray) -> np.ndarray:
    """Column order fixed by column content, so fits are permutation equivariant."""
    keys = [zlib.crc32(np.ascontiguousarray(X[:, j]).tobytes()) for j in range(X.shape[1])]
    return np.argsort(np.array(keys, dtype=np.int64), kind="stable")


class _Design:
    """Rotated block design for one dataset, in canonical column order."""

    def __init__(self, ds: Dataset, es: EigenSystem):
        self.es = es
        self.n, self.d = ds.X.shape
        self.order = canonical_order(ds.X)
        self.Y = ds.Y
        sq = np.sqrt(es.eff_lambdas)
        X = ds.X[:, self.order]
        Psi = es.basis(X.T) * sq  # (d, n, k)
        H = np.einsum("jnk,jnl->jkl", Psi, Psi) / self.n
        D, V = np.linalg.eigh(0.5 * (H + np.swapaxes(H, 1, 2)))
        self.D = np.maximum(D, 0.0)  # (d, k)
        self.V = V  # (d, k, k)
        # rotated design stored block-transposed, (d, k, n), for BLAS products
        self.Ut = np.ascontiguousarray(np.einsum("jnk,jkl->jln", Psi, V))
        self._flat = self.Ut.reshape(self.d * es.k_max, self.n)
        self.sq = sq

    @property
    def U(self) -> np.ndarray:
        """``(d, n, k)`` view of the rotated design."""
        return np.swapaxes(self.Ut, 1, 2)

    def theta(self, Z: np.ndarray) -> np.ndarray:
        """Basis coefficients in the original column order."""
        th = self.sq * np.einsum("jkl,jl->jk", self.V, Z)
        out = np.empty_like(th)
        out[self.order] = th
        return out

    def fitted(self, Z: np.ndarray) -> np.ndarray:
        return Z.ravel() @ self._flat

    def correlations(self, r: np.ndarray) -> np.ndarray:
        return (self._flat @ r).reshape(self.d, -1) / self.n


# -- block penalties -------------------------------------------------------------


class _LqPenalty:
    """``mu |z|^q`` with a reweighted-ridge block step."""

    def __init__(self, mu: float, q: float, max_inner: int):
        self.mu, self.q, self.max_inner = mu, q, max_inner

    def value(self, Z):
        return self.mu * np.sum(np.linalg.norm(Z, axis=-1) ** self.q, axis=-1)

    def block_obj(self, z, c, D):
        return -2 * c @ z + z @ (D * z) + self.mu * math.sqrt(z @ z) ** self.q

    def _irls(self, z, c, D):
        f = self.block_obj(z, c, D)
        for _ in range(self.max_inner):
            rho = math.sqrt(z @ z)
            if rho == 0:
                break
            omega = 0.5 * self.mu * self.q * rho ** (self.q - 2)
            z_new = c / (D + omega)
            f_new = self.block_obj(z_new, c, D)
            if f_new > f:
                break
            done = f - f_new <= 1e-12 * max(1.0, abs(f))
            z, f = z_new, f_new
            if done:
                break
        return z, f

    def grid_candidates(self, C, D):
        """Best point of the ridge path ``c / (D + nu)`` per block: ``(z, obj)``."""
        scale = np.maximum(D.max(axis=-1, keepdims=True), 1e-300)
        inv = 1.0 / (D[:, :, None] + scale[:, :, None] * _NU_GRID)  # (m, k, G)
        w = (C * C)[:, :, None] * inv
        # -2 c.z + z'Dz and |z|^2 along z = c / (D + nu)
        lin = np.einsum("mkg,mkg->mg", w, D[:, :, None] * inv - 2.0)
        rho2 = np.einsum("mkg,mkg->mg", w, inv)
        obj = lin + self.mu * rho2 ** (0.5 * self.q)
        best = np.argmin(obj, axis=1)
        rows = np.arange(C.shape[0])
        return C * inv[rows, :, best], obj[rows, best]

    def solve(self, z, c, D):
        cands = [(np.zeros_like(z), 0.0), (z, self.block_obj(z, c, D))]
        if z.any():
            cands.append(self._irls(z, c, D))
        else:
            # leaving zero: start the reweighting from the best ridge-path point
            zg, fg = self.grid_candidates(c[None], D[None])
            if fg[0] < 0:
                cands.append(self._irls(zg[0], c, D))
        return min(cands, key=lambda t: t[1])

    def screen(self, C, D):
        """Estimated objective gain of leaving zero, per block (positive = activate)."""
        _, obj = self.grid_candidates(C, D)
        return -obj


class _MixedPenalty:
    """``a^2 |z| + a sqrt(z' D z)``; convex, reweighted block step."""

    def __init__(self, a: float, max_inner: int):
        self.a, self.max_inner = a, max_inner

    def value(self, Z, D):
        return np.sum(self.a**2 * np.linalg.norm(Z, axis=-1)
                      + self.a * np.sqrt(np.sum(D * Z * Z, axis=-1)), axis=-1)

    def block_obj(self, z, c, D):
        return (-2 * c @ z + z @ (D * z) + self.a**2 * np.linalg.norm(z)
                + self.a * math.sqrt(max(z @ (D * z), 0.0)))

    def zero_is_optimal(self, C, D) -> np.ndarray:
        """Subgradient test ``dist(2c, a D^(1/2) B) <= a^2`` for each block."""
        a = self.a
        g = 2 * C
        sd = np.sqrt(D)
        with np.errstate(divide="ignore", invalid="ignore"):
            v_free = np.where(sd > 0, g / (a * sd), 0.0)
        dist2 = np.where(
            np.linalg.norm(v_free, axis=-1) <= 1,
            np.sum(np.where(sd > 0, 0.0, g * g), axis=-1), np.nan)
        todo = np.isnan(dist2)
        if np.any(todo):
            gt, st = g[todo], sd[todo]
            lo = np.zeros(gt.shape[0])
            hi = np.full(gt.shape[0], 1.0)
            vnorm = lambda nu: np.linalg.norm(a * st * gt / (a * a * st * st + nu[:, None]),
                                              axis=-1)
            while np.any(vnorm(hi) > 1):
                hi = np.where(vnorm(hi) > 1, 2 * hi, hi)
            for _ in range(200):
                mid = 0.5 * (lo + hi)
                big = vnorm(mid) > 1
                lo, hi = np.where(big, mid, lo), np.where(big, hi, mid)
            v = a * st * gt / (a * a * st * st + hi[:, None])
            dist2[todo] = np.sum((gt - a * st * v) ** 2, axis=-1)
        return dist2 <= a**4 * (1 + 1e-12)

    def solve(self, z, c, D):
        zero = (np.zeros_like(z), 0.0)
        if self.zero_is_optimal(c[None], D[None])[0]:
            return zero
        if not np.any(z):
            z = c / (D + self.a**2)
        f = self.block_obj(z, c, D)
        a = self.a
        for _ in range(self.max_inner):
            r1 = np.linalg.norm(z)
            r2 = math.sqrt(max(z @ (D * z), 0.0))
            if r1 == 0:
                break
            extra = a * a / (2 * r1) + (a * D / (2 * r2) if r2 > 0 else 0.0)
            z_new = c / (D + extra)
            f_new = self.block_obj(z_new, c, D)
            if f_new > f:
                break
            done = f - f_new <= 1e-12 * max(1.0, abs(f))
            z, f = z_new, f_new
            if done:
                break
        return min([zero, (z, f)], key=lambda t: t[1])

    def screen(self, C, D):
        gain = np.zeros(C.shape[0])
        gain[~self.zero_is_optimal(C, D)] = 1.0
        return gain


# -- block coordinate descent engine ----------------------------------------------


@dataclass
class _BCDState:
    Z: np.ndarray
    r: np.ndarray
    objective: float
    trace: list
    iterations: int
    converged: bool


def _total_objective(des: _Design, pen, Z, r):
    risk = float(r @ r) / des.n
    if isinstance(pen, _MixedPenalty):
        return risk + float(pen.value(Z, des.D))
    return risk + float(pen.value(Z))


def _bcd(des: _Design, pen, Z0: np.ndarray, max_outer: int, tol: float) -> _BCDState:
    Z = Z0.copy()
    r = des.Y - des.fitted(Z)
    obj = _total_objective(des, pen, Z, r)
    trace = [obj]
    converged = False
    it = 0
    # absolute floor so that near-interpolating fits still stop
    floor = _OBJ_FLOOR * max(float(des.Y @ des.Y) / des.n, 1e-300)
    for it in range(1, max_outer + 1):
        prev = obj
        active = [int(j) for j in np.flatnonzero(np.any(Z != 0, axis=1))]
        # most recent large blocks first
        active.sort(key=lambda j: -np.linalg.norm(Z[j]))
        for j in active:
            _block_step(des, pen, Z, r, j)
        # screening is the costly part at large d: run it once the active
        # blocks have nearly settled, and always before declaring convergence
        settled = prev - _total_objective(des, pen, Z, r) <= 1e-4 * max(abs(prev), floor)
        n_new = 0
        if not (settled or it <= 2 or it % 10 == 0):
            obj = _total_objective(des, pen, Z, r)
            trace.append(obj)
            continue
        C = des.correlations(r)
        inactive = np.flatnonzero(~np.any(Z != 0, axis=1))
        if inactive.size:
            gains = pen.screen(C[inactive], des.D[inactive])
            for idx in np.argsort(-gains, kind="stable"):
                if gains[idx] <= 0:
                    break
                j = int(inactive[idx])
                if _block_step(des, pen, Z, r, j):
                    n_new += 1
        obj = _total_objective(des, pen, Z, r)
        trace.append(obj)
        if n_new == 0 and prev - obj <= tol * max(abs(prev), floor):
            converged = True
            break
    return _BCDState(Z, r, obj, trace, it, converged)


def _block_step(des: _Design, pen, Z, r, j) -> bool:
    """Update block ``j`` in place; return whether it moved."""
    Utj, Dj, zj = des.Ut[j], des.D[j], Z[j]
    c = Utj @ r / des.n + Dj * zj
    f_cur = pen.block_obj(zj, c, Dj)
    z_new, f_new = pen.solve(zj, c, Dj)
    if not f_new < f_cur - _MONO_SLACK * max(1.0, abs(f_cur)):
        return False
    r -= (z_new - zj) @ Utj
    Z[j] = z_new
    return True


# -- results -----------------------------------------------------------------------


def _risk(Y, fitted):
    res = Y - fitted
    return float(res @ res) / Y.shape[0]


def _make_result(des: _Design, ds: Dataset, Z, estimator, cfg, **kw) -> FitResult:
    fhat = AdditiveFunction(des.es, des.theta(Z))
    risk = _risk(ds.Y, des.fitted(Z))
    pop = None
    if ds.truth is not None and ds.truth.es == des.es and ds.truth.d == fhat.d:
        pop = l2_pi_distance_sq(fhat, ds.truth)
    return FitResult(fhat=fhat, empirical_risk=risk, population_error_sq=pop,
                     active_set=fhat.active_set(), estimator=estimator, config=cfg, **kw)


def _mass(Z, q):
    return float(np.sum(np.linalg.norm(Z, axis=1) ** q))


# -- l_q constrained least squares ----------------------------------------------------


def _least_squares(des: _Design):
    A = np.concatenate(list(des.U), axis=1)  # (n, d k)
    if A.shape[1] > des.n:
        return None
    coef, *_ = np.linalg.lstsq(A, des.Y, rcond=None)
    if np.linalg.matrix_rank(A) < A.shape[1]:
        return None
    return coef.reshape(des.d, -1)


def _random_init(des: _Design, cfg: FitConfig, restart: int) -> np.ndarray:
    rng = substream(cfg.seed, "estimators:restart", restart)
    C = des.correlations(des.Y)
    score = np.linalg.norm(C, axis=1)
    m = int(rng.integers(1, min(des.d, 8) + 1))
    p = score / score.sum() if score.sum() > 0 else None
    picks = rng.choice(des.d, size=m, replace=False, p=p)
    Z = np.zeros((des.d, des.U.shape[2]))
    radius = (cfg.R / m) ** (1 / cfg.q)
    for j in picks:
        v = C[j] / (des.D[j] + rng.uniform(0.01, 1.0) * des.D[j].max() + 1e-300)
        v += 0.1 * np.linalg.norm(v) * rng.standard_normal(v.size)
        Z[j] = radius * rng.uniform(0.2, 1.0) * v / max(np.linalg.norm(v), 1e-300)
    return Z


def _constrained_path(des: _Design, cfg: FitConfig, Z0: np.ndarray):
    """Bisection on ``mu`` from ``Z0``; returns every ``(mu, state)`` tried."""
    q, R = cfg.q, cfg.R
    y2 = float(des.Y @ des.Y) / des.n
    tries = []

    def run(mu, start):
        st = _bcd(des, _LqPenalty(mu, q, cfg.max_inner), start, cfg.max_outer, cfg.tol)
        tries.append((mu, st))
        return st

    mu_hi = max(y2, 1e-12)
    st = run(mu_hi, Z0)
    while _mass(st.Z, q) > R:
        mu_hi *= 4
        st = run(mu_hi, st.Z)
    start = st.Z
    mu_lo = mu_hi
    while True:
        mu_lo /= 4
        prev_mass = _mass(start, q)
        st = run(mu_lo, start)
        start = st.Z
        mass = _mass(st.Z, q)
        # stop once the mass saturates below R: the ball is effectively inactive
        if mass > R or mu_lo < 1e-12 * mu_hi or mass - prev_mass <= 1e-9 * R:
            break
        mu_hi = mu_lo
    for _ in range(cfg.mu_steps):
        feas = [(m, s) for m, s in tries if _mass(s.Z, q) <= R]
        if any(_mass(s.Z, q) >= R * (1 - cfg.mass_window) for _, s in feas):
            break
        if _mass(st.Z, q) <= R or mu_hi / mu_lo < 1 + 1e-9:
            break
        mu = math.sqrt(mu_lo * mu_hi)
        # warm start from the nearest feasible solution
        st = run(mu, min(feas, key=lambda t: abs(math.log(t[0] / mu)))[1].Z)
        if _mass(st.Z, q) > R:
            mu_lo = mu
        else:
            mu_hi = mu
    return tries


def _trust_region(c: np.ndarray, D: np.ndarray, t: float) -> np.ndarray:
    """Exact minimizer of ``-2 c'z + z' diag(D) z`` over ``|z| <= t`` (``D >= 0``)."""
    cc = c * c
    if t <= 0 or not cc.any():
        return np.zeros_like(c)
    if D.min() > 0:
        z = c / D
        if z @ z <= t * t:
            return z
    cn = math.sqrt(cc.sum())
    nu = max(cn / t - D.max(), 1e-12 * cn / t)
    # Newton on 1/t - 1/|z(nu)|, convex and decreasing: monotone from the left
    inv_t = 1.0 / t
    for _ in range(100):
        den = D + nu
        w = cc / (den * den)
        zn = math.sqrt(w.sum())
        step = (inv_t - 1.0 / zn) * zn**3 / (w / den).sum()
        nu += step
        if abs(step) <= 1e-14 * nu:
            break
    z = c / (D + nu)
    zn = math.sqrt(z @ z)
    return z * (t / zn) if zn > t else z


class _Polisher:
    """Descent on the exact constraint by reallocating mass between blocks.

    For a fixed allocation ``|z_j| <= t_j`` the problem is a convex quadratic
    over a product of balls; single-block moves solve it one ball at a time
    and pair moves search the split of two blocks' joint budget.
    """

    GRID = 11
    GOLDEN = 12
    ALTERNATIONS = 40

    def __init__(self, des: _Design, q: float, R: float, n_candidates: int = 3):
        self.des, self.q, self.R, self.n_cand = des, q, R, n_candidates

    def _budget(self, Z, skip) -> float:
        norms = np.linalg.norm(Z, axis=1) ** self.q
        norms[list(skip)] = 0.0
        return max(self.R - float(norms.sum()), 0.0)

    def _single(self, Z, r, j) -> bool:
        des = self.des
        Dj = des.D[j]
        c = des.U[j].T @ r / des.n + Dj * Z[j]
        z_new = _trust_region(c, Dj, self._budget(Z, [j]) ** (1 / self.q))
        gain = (-2 * c @ Z[j] + Z[j] @ (Dj * Z[j])) - (-2 * c @ z_new + z_new @ (Dj * z_new))
        if not gain > _MONO_SLACK * max(float(r @ r) / des.n, 1e-300):
            return False
        r -= des.U[j] @ (z_new - Z[j])
        Z[j] = z_new
        return True

    def _pair(self, Z, r, i, j) -> bool:
        des, q = self.des, self.q
        Ui, Uj, Di, Dj = des.U[i], des.U[j], des.D[i], des.D[j]
        r0 = r + Ui @ Z[i] + Uj @ Z[j]
        bi, bj = Ui.T @ r0 / des.n, Uj.T @ r0 / des.n
        Cij = Ui.T @ Uj / des.n
        B = self._budget(Z, [i, j])

        def obj(zi, zj):
            return (-2 * bi @ zi - 2 * bj @ zj + zi @ (Di * zi) + zj @ (Dj * zj)
                    + 2 * zi @ Cij @ zj)

        def solve(p, zi, zj):
            ti, tj = (p * B) ** (1 / q), ((1 - p) * B) ** (1 / q)
            zi = zi * min(1.0, ti / max(np.linalg.norm(zi), 1e-300))
            zj = zj * min(1.0, tj / max(np.linalg.norm(zj), 1e-300))
            f = obj(zi, zj)
            for _ in range(self.ALTERNATIONS):
                zi = _trust_region(bi - Cij @ zj, Di, ti)
                zj = _trust_region(bj - Cij.T @ zi, Dj, tj)
                f_new = obj(zi, zj)
                done = f - f_new <= 1e-13 * max(abs(f), 1e-300)
                f = min(f, f_new)
                if done:
                    break
            return f, zi, zj

        f_cur = obj(Z[i], Z[j])
        ni, nj = (np.linalg.norm(Z[i]) ** q, np.linalg.norm(Z[j]) ** q)
        p_cur = ni / (ni + nj) if ni + nj > 0 else 0.5
        best = (f_cur, Z[i].copy(), Z[j].copy(), p_cur)
        grid = np.unique(np.concatenate([np.linspace(0, 1, self.GRID), [p_cur]]))
        vals = []
        for p in grid:
            f, zi, zj = solve(p, Z[i], Z[j])
            vals.append(f)
            if f < best[0]:
                best = (f, zi, zj, p)
        # golden-section refinement in the bracket around the best grid point
        k = int(np.argmin(vals))
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
        g = (math.sqrt(5) - 1) / 2
        a, b = hi - g * (hi - lo), lo + g * (hi - lo)
        fa, fb = solve(a, best[1], best[2]), solve(b, best[1], best[2])
        for _ in range(self.GOLDEN):
            for f, zi, zj, p in ((fa[0], fa[1], fa[2], a), (fb[0], fb[1], fb[2], b)):
                if f < best[0]:
                    best = (f, zi, zj, p)
            if fa[0] < fb[0]:
                hi, b, fb = b, a, fa
                a = hi - g * (hi - lo)
                fa = solve(a, best[1], best[2])
            else:
                lo, a, fa = a, b, fb
                b = lo + g * (hi - lo)
                fb = solve(b, best[1], best[2])
        f_new, zi, zj, _ = best
        if not f_cur - f_new > _MONO_SLACK * max(float(r @ r) / des.n, 1e-300):
            return False
        r -= Ui @ (zi - Z[i]) + Uj @ (zj - Z[j])
        Z[i], Z[j] = zi, zj
        return True

    def run(self, Z0: np.ndarray, max_sweeps: int, tol: float):
        des = self.des
        Z = Z0.copy()
        r = des.Y - des.fitted(Z)
        trace = [float(r @ r) / des.n]
        converged = False
        sweeps = 0
        for sweeps in range(1, max_sweeps + 1):
            active = [int(j) for j in np.flatnonzero(np.any(Z != 0, axis=1))]
            for j in active:
                self._single(Z, r, j)
            inactive = np.flatnonzero(~np.any(Z != 0, axis=1))
            score = np.linalg.norm(des.correlations(r)[inactive], axis=1)
            cands = [int(j) for j in inactive[np.argsort(-score, kind="stable")[:self.n_cand]]]
            if not active and cands:
                self._single(Z, r, cands[0])
                active, cands = [cands[0]], cands[1:]
            pool = active + cands
            for a_idx in range(len(pool)):
                for b_idx in range(a_idx + 1, len(pool)):
                    i, j = pool[a_idx], pool[b_idx]
                    if np.any(Z[i]) or np.any(Z[j]):
                        self._pair(Z, r, i, j)
            trace.append(float(r @ r) / des.n)
            if trace[-2] - trace[-1] <= tol * max(trace[-2], 1e-300):
                converged = True
                break
        return Z, r, trace, sweeps, converged


def _path_starts(des: _Design, cfg: FitConfig, Z0: np.ndarray):
    """Surrogate path from ``Z0``; returns its best feasible fit and a shrunk overshoot."""
    q, R = cfg.q, cfg.R
    tries = _constrained_path(des, cfg, Z0)
    feasible = [(m, s) for m, s in tries if _mass(s.Z, q) <= R * (1 + 1e-9)]
    best_mu, best = min(feasible, key=lambda t: (float(t[1].r @ t[1].r), t[0]))
    over = [s for _, s in tries if _mass(s.Z, q) > R]
    shrunk = None
    if over:
        s = min(over, key=lambda s: _mass(s.Z, q))
        shrunk = s.Z * (R / _mass(s.Z, q)) ** (1 / q)
    iters = sum(s.iterations for _, s in tries)
    return best_mu, best, shrunk, iters


def fit_lq_constrained(ds: Dataset, cfg: FitConfig = FitConfig(),
                       es: EigenSystem | None = None) -> FitResult:
    """Least squares over the ball ``sum_j ||g_j||_H^q <= R``.

    The constraint is first handled through the penalty
    ``mu sum_j ||g_j||_H^q`` with ``mu`` bisected until the mass lands just
    inside ``R``, once per restart (restart 0 starts from zero).  Because
    the mass can jump as ``mu`` varies, a second stage then descends on the
    exact constraint by reallocating mass between blocks, starting from the
    best surrogate fit and from the best overshooting fit shrunk onto the
    sphere.  The problem is nonconvex for ``q < 1``, so the result is a good
    local solution, not a certified global one.  ``objective_trace`` holds
    the empirical risk after each sweep of the second stage.
    """
    es = _resolve_es(ds, cfg, es)
    des = _Design(ds, es)
    q, R = cfg.q, cfg.R
    if R == 0:
        Z = np.zeros((des.d, es.k_max))
        return _make_result(des, ds, Z, "lq_constrained", cfg, iterations=0,
                            converged=True, objective=_risk(ds.Y, 0 * ds.Y), mass=0.0)
    Z_ls = _least_squares(des)
    if Z_ls is not None and _mass(Z_ls, q) <= R:
        return _make_result(des, ds, Z_ls, "lq_constrained", cfg, iterations=1,
                            converged=True, objective=_risk(ds.Y, des.fitted(Z_ls)),
                            mu=0.0, mass=_mass(Z_ls, q))
    feasible, shrunk = [], []
    iters = 0
    for restart in range(cfg.restarts):
        Z0 = np.zeros((des.d, es.k_max)) if restart == 0 else _random_init(des, cfg, restart)
        mu, st, Zs, it = _path_starts(des, cfg, Z0)
        iters += it
        feasible.append((float(st.r @ st.r), restart, mu, st))
        if Zs is not None:
            shrunk.append((_risk(des.Y, des.fitted(Zs)), restart, mu, Zs))
    starts = [min(feasible, key=lambda t: t[:2])]
    if shrunk:
        starts.append(min(shrunk, key=lambda t: t[:2]))
    if Z_ls is not None:
        # an infeasible least-squares fit, shrunk onto the sphere
        starts.append((None, 0, None, Z_ls * (R / _mass(Z_ls, q)) ** (1 / q)))
    polisher = _Polisher(des, q, R)
    best = None
    for _, restart, mu, start in starts:
        Zstart = start.Z if isinstance(start, _BCDState) else start
        Z, r, trace, sweeps, conv = polisher.run(Zstart, cfg.max_outer, cfg.tol)
        iters += sweeps
        risk = float(r @ r) / des.n
        if best is None or risk < best[0] - 1e-15:
            best = (risk, restart, Z, mu, trace, conv)
    risk, restart, Z, mu, trace, conv = best
    return _make_result(des, ds, Z, "lq_constrained", cfg, iterations=iters,
                        converged=conv, objective_trace=trace, restart_best_index=restart,
                        objective=risk, mu=mu, mass=_mass(Z, q))


def fit_lq_penalized(ds: Dataset, mu: float, cfg: FitConfig = FitConfig(),
                     es: EigenSystem | None = None, Z0=None) -> FitResult:
    """The penalized surrogate ``risk + mu sum_j ||g_j||_H^q`` at a fixed ``mu``."""
    es = _resolve_es(ds, cfg, es)
    des = _Design(ds, es)
    Z0 = np.zeros((des.d, es.k_max)) if Z0 is None else Z0
    st = _bcd(des, _LqPenalty(mu, cfg.q, cfg.max_inner), Z0, cfg.max_outer, cfg.tol)
    return _make_result(des, ds, st.Z, "lq_penalized", cfg, iterations=st.iterations,
                        converged=st.converged, objective_trace=st.trace,
                        objective=st.objective, mu=mu, mass=_mass(st.Z, cfg.q))


# -- mixed penalty -----------------------------------------------------------------------


def default_a_n(n: int, alpha: float) -> float:
    """``n^(-alpha / (2 alpha + 1))``."""
    return n ** (-alpha / (2 * alpha + 1))


def fit_mixed_penalty(ds: Dataset, cfg: FitConfig = FitConfig(),
                      es: EigenSystem | None = None) -> FitResult:
    """Block coordinate descent for risk plus the convex mixed penalty."""
    es = _resolve_es(ds, cfg, es)
    a = cfg.a_n if cfg.a_n is not None else cfg.a_mult * default_a_n(ds.n, es.alpha)
    if not a > 0:
        raise DomainError("a_n must be positive")
    des = _Design(ds, es)
    st = _bcd(des, _MixedPenalty(a, cfg.max_inner), np.zeros((des.d, es.k_max)),
              cfg.max_outer, cfg.tol)
    return _make_result(des, ds, st.Z, "mixed_penalty", cfg, iterations=st.iterations,
                        converged=st.converged, objective_trace=st.trace,
                        objective=st.objective, mass=_mass(st.Z, cfg.q))


def mixed_objective(fit: FitResult, ds: Dataset, a: float) -> float:
    """Evaluate the mixed-penalty objective of an arbitrary fit."""
    es = fit.fhat.es
    Phi = es.basis(ds.X.T)  # (d, n, k)
    parts = np.einsum("jnk,jk->jn", Phi, fit.fhat.theta)
    risk = _risk(ds.Y, parts.sum(axis=0))
    emp = np.sqrt(np.mean(parts**2, axis=1))
    return risk + a**2 * float(fit.fhat.component_rkhs_norms().sum()) + a * float(emp.sum())


# -- oracle ridge --------------------------------------------------------------------------


def fit_oracle_single(ds: Dataset, j: int, ridge: float,
                      es: EigenSystem | None = None) -> FitResult:
    """Generalized ridge of ``Y`` on the basis of coordinate ``j`` (0-based)."""
    es = _resolve_es(ds, None, es)
    if not 0 <= j < ds.d:
        raise DomainError(f"coordinate {j} out of range")
    if ridge < 0:
        raise DomainError("ridge must be nonnegative")
    Phi = es.basis(ds.X[:, j])
    A = Phi.T @ Phi / ds.n + ridge * np.diag(es.rkhs_weights)
    rhs = Phi.T @ ds.Y / ds.n
    if ridge == 0 and np.linalg.matrix_rank(A) < es.k_max:
        raise SingularSystemError("singular system with ridge = 0")
    theta = np.zeros((ds.d, es.k_max))
    theta[j] = np.linalg.solve(A, rhs)
    fhat = AdditiveFunction(es, theta)
    risk = _risk(ds.Y, Phi @ theta[j])
    pop = l2_pi_distance_sq(fhat, ds.truth) if ds.truth is not None else None
    return FitResult(fhat=fhat, empirical_risk=risk, population_error_sq=pop,
                     active_set=fhat.active_set(), iterations=1, converged=True,
                     estimator="oracle_single", objective=risk)


# -- brute force oracle ---------------------------------------------------------------------


BRUTE_FORCE_GUARD = 10**8


def brute_force_lse(ds: Dataset, grid_step: float, q: float, R: float, bounds=None,
                    es: EigenSystem | None = None, chunk: int = 2**20) -> FitResult:
    """Exact minimizer of the empirical risk over a coefficient grid within the ball.

    ``bounds`` gives the half-width per basis coefficient (length ``k_max`` or
    ``d * k_max``); by default it is ``R^(1/q) sqrt(lambda_k / Z)``, the
    largest magnitude any coefficient can take inside the ball.  The grid is
    symmetric and contains zero.
    """
    es = _resolve_es(ds, None, es)
    if not 0 < q <= 1:
        raise DomainError("q must lie in (0,1]")
    d, k = ds.d, es.k_max
    if bounds is None:
        bounds = np.tile((R ** (1 / q) if R > 0 else 0.0) * np.sqrt(es.eff_lambdas), d)
    bounds = np.broadcast_to(np.asarray(bounds, dtype=float), (d * k,)) if np.size(bounds) in (1, d * k) \
        else np.tile(np.asarray(bounds, dtype=float), d)
    axes = [np.arange(-math.floor(b / grid_step + 1e-9), math.floor(b / grid_step + 1e-9) + 1)
            * grid_step for b in bounds]

    # per-block grids filtered to the ball, then their product
    w = es.rkhs_weights
    for j in range(d):
        raw = math.prod(len(a) for a in axes[j * k:(j + 1) * k])
        if raw > BRUTE_FORCE_GUARD:
            raise DomainError(f"block grid has {raw} points, above the guard {BRUTE_FORCE_GUARD}")
    blocks = []
    for j in range(d):
        pts = np.array(list(itertools.product(*axes[j * k:(j + 1) * k])))
        mass = np.sqrt(pts**2 @ w) ** q
        keep = mass <= R * (1 + 1e-12)
        blocks.append((pts[keep], mass[keep]))
    total = math.prod(len(p) for p, _ in blocks)
    if total > BRUTE_FORCE_GUARD:
        raise DomainError(f"grid has {total} points, above the guard {BRUTE_FORCE_GUARD}")

    Phi = np.concatenate([es.basis(ds.X[:, j]) for j in range(d)], axis=1)
    Aq = Phi.T @ Phi / ds.n
    bq = Phi.T @ ds.Y / ds.n
    y2 = float(ds.Y @ ds.Y) / ds.n
    shape = [len(p) for p, _ in blocks]
    best_val, best_theta = math.inf, None
    for start in range(0, total, chunk):
        idx = np.unravel_index(np.arange(start, min(total, start + chunk)), shape)
        mass = sum(blocks[j][1][idx[j]] for j in range(d))
        theta = np.concatenate([blocks[j][0][idx[j]] for j in range(d)], axis=1)
        ok = mass <= R * (1 + 1e-12)
        if not np.any(ok):
            continue
        theta = theta[ok]
        risk = y2 - 2 * theta @ bq + np.einsum("ij,jk,ik->i", theta, Aq, theta)
        i = int(np.argmin(risk))
        if risk[i] < best_val:
            best_val, best_theta = float(risk[i]), theta[i]
    fhat = AdditiveFunction(es, best_theta.reshape(d, k))
    risk = _risk(ds.Y, Phi @ best_theta)
    pop = l2_pi_distance_sq(fhat, ds.truth) if ds.truth is not None else None
    return FitResult(fhat=fhat, empirical_risk=risk, population_error_sq=pop,
                     active_set=fhat.active_set(), iterations=total, converged=True,
                     estimator="brute_force", objective=risk, mass=lq_mass(fhat, q))


# -- diagnostics -------------------------------------------------------------------------------


def basic_inequality_check(fit: FitResult, ds: Dataset, q: float | None = None,
                           R: float | None = None, tol: float = 1e-10) -> bool | None:
    """Whether the fit's empirical risk is no worse than the truth's.

    Returns None (with a warning) when the truth lies outside the ball the
    fit was constrained to, since the inequality then need not hold.
    """
    if ds.truth is None:
        raise DomainError("dataset carries no truth")
    if fit.config is not None:
        q = fit.config.q if q is None else q
        R = fit.config.R if R is None else R
    if q is not None and R is not None and lq_mass(ds.truth, q) > R * (1 + 1e-9):
        warnings.warn("truth lies outside the constraint ball; check skipped", stacklevel=2)
        return None
    truth_risk = float(np.mean(ds.noise() ** 2))
    return fit.empirical_risk <= truth_risk + tol
