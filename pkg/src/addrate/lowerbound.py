"""Packing constructions behind the minimax lower bound.

A packing member is a ``d x N`` sign matrix ``A`` with ``s`` full +-1 rows.
It induces

    g_A(x) = N^(-1/2) s^(-1/q) sum_j sum_k a_jk sqrt(lambda_{N+k}) phi_{N+k}(x_j)

which sits on the unit l_q(H_d) sphere.  The support patterns come from a
binary Varshamov-Gilbert packing and the sign fills from a +-1 packing; both
are built greedily at random and verified before being returned, since the
lemma only asserts existence.

All bounds are evaluated with the normalized eigenvalues ``lambda_k / Z`` used
to build ``g_A``, so the two sides of every inequality share one scale.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import as_generator
from .additive import AdditiveFunction, l2_pi_distance_sq, lq_mass
from .eigenbasis import DomainError, EigenSystem
from .synthgen import Dataset, empirical_l2_sq

BUDGET_FACTOR = 100
_CEIL_TOL = 1e-9
DEFAULT_C1 = 0.25


class PackingConstructionError(RuntimeError):
    """The greedy search ran out of attempts before reaching the target size."""

    def __init__(self, achieved: int, target: int):
        super().__init__(f"packing reached {achieved} of {target} members")
        self.achieved = achieved
        self.target = target


class InvariantViolation(AssertionError):
    """A constructed object fails a property it holds by construction."""


def _ceil(x: float) -> int:
    return math.ceil(x - _CEIL_TOL)


def binary_target(d: int, s: int) -> int:
    """Smallest cardinality with ``log M >= s log(d/s) / 4``."""
    return _ceil(math.exp(0.25 * s * math.log(d / s)))


def sign_target(s: int, N: int) -> int:
    """Smallest cardinality with ``log M >= N s / 8``."""
    return _ceil(math.exp(N * s / 8.0))


def _greedy(draw, far_enough, target: int, budget: int) -> list:
    kept: list = []
    for _ in range(budget):
        if len(kept) >= target:
            break
        cand = draw()
        if all(far_enough(cand, other) for other in kept):
            kept.append(cand)
    if len(kept) < target:
        raise PackingConstructionError(len(kept), target)
    return kept


def vg_binary_packing(d: int, s: int, rng=None, size: int | None = None) -> np.ndarray:
    """Rows of the result are weight-``s`` vectors in ``{0,1}^d``.

    Pairwise l1 distances are at least ``s/2`` and the row count reaches
    ``exp(s log(d/s) / 4)`` (or ``size`` when larger).
    """
    if not (1 <= s and 4 * s <= d):
        raise DomainError(f"need 1 <= s <= d/4, got d={d}, s={s}")
    rng = as_generator(rng)
    target = max(binary_target(d, s), size or 0)
    if target > math.comb(d, s):
        raise PackingConstructionError(0, target)

    def draw():
        v = np.zeros(d, dtype=np.int8)
        v[rng.choice(d, size=s, replace=False)] = 1
        return v

    kept = _greedy(draw, lambda a, b: np.abs(a - b).sum() >= s / 2,
                   target, BUDGET_FACTOR * target)
    out = np.array(kept)
    check_binary_packing(out, d, s)
    return out


def vg_sign_packing(s: int, N: int, rng=None, size: int | None = None) -> np.ndarray:
    """Array of shape ``(M2, s, N)`` with entries +-1.

    Pairwise squared Frobenius distances are at least ``N s / 2`` and
    ``M2 >= exp(N s / 8)`` (or ``size`` when larger).
    """
    if s < 1 or N < 1:
        raise DomainError("s and N must be positive")
    rng = as_generator(rng)
    target = max(sign_target(s, N), size or 0)
    if target > 2 ** (s * N):
        raise PackingConstructionError(0, target)

    def draw():
        return rng.choice(np.array([-1, 1], dtype=np.int8), size=(s, N))

    kept = _greedy(draw, lambda a, b: _frob_sq(a, b) >= N * s / 2,
                   target, BUDGET_FACTOR * target)
    out = np.array(kept)
    check_sign_packing(out, s, N)
    return out


def _frob_sq(a, b) -> int:
    diff = a.astype(np.int64) - b.astype(np.int64)
    return int(np.sum(diff * diff))


def check_binary_packing(thetas: np.ndarray, d: int, s: int) -> dict:
    """Properties (a) weight ``s``, (b) separation ``s/2``, (c) cardinality."""
    rows = thetas.astype(np.int64)
    props = {
        "a": bool(np.all(rows.sum(axis=1) == s) and np.all((rows == 0) | (rows == 1))),
        "b": all(np.abs(u - v).sum() >= s / 2 for u, v in itertools.combinations(rows, 2)),
        "c": math.log(len(rows)) >= 0.25 * s * math.log(d / s) - _CEIL_TOL,
    }
    if not all(props.values()):
        raise InvariantViolation(f"binary packing fails {props}")
    return props


def check_sign_packing(gammas: np.ndarray, s: int, N: int) -> dict:
    """Properties (a') separation ``Ns/2`` and (b') cardinality."""
    props = {
        "a'": bool(np.all(np.abs(gammas) == 1))
        and all(_frob_sq(u, v) >= N * s / 2 for u, v in itertools.combinations(gammas, 2)),
        "b'": math.log(len(gammas)) >= N * s / 8 - _CEIL_TOL,
    }
    if not all(props.values()):
        raise InvariantViolation(f"sign packing fails {props}")
    return props


@dataclass(frozen=True, eq=False)
class PackingMatrix:
    A: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=np.int8)
        if A.ndim != 2 or not np.all(np.isin(A, (-1, 0, 1))):
            raise DomainError("A must be a matrix with entries in {-1, 0, 1}")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)

    def __eq__(self, other):
        return isinstance(other, PackingMatrix) and np.array_equal(self.A, other.A)

    def __hash__(self):
        return hash((self.A.shape, self.A.tobytes()))

    @property
    def s_A(self) -> int:
        return int(np.count_nonzero(np.any(self.A != 0, axis=1)))

    @property
    def full_rows(self) -> bool:
        nz = np.any(self.A != 0, axis=1)
        return bool(np.all(self.A[nz] != 0))

    def to_string(self) -> str:
        lut = {-1: "-", 0: "0", 1: "+"}
        return "\n".join("".join(lut[int(v)] for v in row) for row in self.A)

    @classmethod
    def from_string(cls, text: str) -> "PackingMatrix":
        lut = {"-": -1, "0": 0, "+": 1}
        return cls(np.array([[lut[c] for c in row] for row in text.split("\n")]))


def fill_matrix(theta: np.ndarray, gamma: np.ndarray) -> PackingMatrix:
    """``A(theta, Gamma)``: rows on the support of ``theta`` filled by ``Gamma``."""
    A = np.zeros((theta.shape[0], gamma.shape[1]), dtype=np.int8)
    A[np.flatnonzero(theta)] = gamma
    return PackingMatrix(A)


def build_g_A(A: PackingMatrix, q: float, es: EigenSystem, N: int | None = None) -> AdditiveFunction:
    """The perturbation function of one packing matrix, using indices ``N+1..2N``."""
    N = A.A.shape[1] if N is None else N
    if A.A.shape[1] != N:
        raise DomainError("A must have N columns")
    if 2 * N > es.k_max:
        raise DomainError(f"k_max={es.k_max} too small for N={N}")
    theta = np.zeros((A.A.shape[0], es.k_max))
    s = A.s_A
    if s == 0:
        return AdditiveFunction(es, theta)
    scale = N**-0.5 * s ** (-1.0 / q)
    theta[:, N:2 * N] = scale * A.A * np.sqrt(es.eff_lambdas[N:2 * N])
    return AdditiveFunction(es, theta)


@dataclass(frozen=True)
class PackingSet:
    members: list[PackingMatrix]
    d: int
    s: int
    N: int
    q: float
    es: EigenSystem
    M1: int
    M2: int
    functions: list[AdditiveFunction] = field(repr=False)

    @property
    def M(self) -> int:
        return len(self.members)

    def to_record(self) -> dict:
        return {
            "d": self.d, "N": self.N, "s": self.s, "q": self.q,
            "alpha": self.es.alpha, "k_max": self.es.k_max,
            "M1": self.M1, "M2": self.M2,
            "matrices": [m.to_string() for m in self.members],
        }

    @classmethod
    def from_record(cls, rec: dict) -> "PackingSet":
        es = EigenSystem(rec["alpha"], rec["k_max"])
        members = [PackingMatrix.from_string(t) for t in rec["matrices"]]
        funcs = [build_g_A(m, rec["q"], es, rec["N"]) for m in members]
        return cls(members, rec["d"], rec["s"], rec["N"], rec["q"], es,
                   rec["M1"], rec["M2"], funcs)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_record(), fh, indent=1)

    @classmethod
    def load(cls, path) -> "PackingSet":
        with open(path) as fh:
            return cls.from_record(json.load(fh))


def build_packing_set(d: int, s: int, N: int, q: float, es: EigenSystem, rng=None,
                      size1: int | None = None, size2: int | None = None) -> PackingSet:
    """Product of a support packing and a sign packing, with induced ``g_A``."""
    rng = as_generator(rng)
    thetas = vg_binary_packing(d, s, rng, size1)
    gammas = vg_sign_packing(s, N, rng, size2)
    members = [fill_matrix(t, g) for t in thetas for g in gammas]
    funcs = [build_g_A(m, q, es, N) for m in members]
    return PackingSet(members, d, s, N, q, es, len(thetas), len(gammas), funcs)


def verify_packing_set(ps: PackingSet, mass_tol: float = 1e-10) -> dict:
    """Check every structural property of a packing set; raise on failure."""
    supports = {}
    fills = {}
    for m in ps.members:
        nz = np.any(m.A != 0, axis=1)
        supports.setdefault(nz.tobytes(), nz.astype(np.int8))
        fills.setdefault(m.A[nz].tobytes(), m.A[nz])
    report = {}
    report.update(check_binary_packing(np.array(list(supports.values())), ps.d, ps.s))
    report.update(check_sign_packing(np.array(list(fills.values())), ps.s, ps.N))
    report["full_rows"] = all(m.full_rows and m.s_A == ps.s for m in ps.members)
    report["mass"] = all(lq_mass(g, ps.q) <= 1 + mass_tol for g in ps.functions)
    report["frobenius_all_pairs"] = all(
        _frob_sq(a.A, b.A) >= ps.N * ps.s / 2
        for a, b in itertools.combinations(ps.members, 2)
    )
    if not all(report.values()):
        raise InvariantViolation(f"packing set fails {report}")
    return report


def separation_bound(es: EigenSystem, q: float, s: int, N: int,
                     c_lambda: float = 1.0, eta_q: float = 1.0) -> float:
    """``(c_lambda eta_q)^-1 2^(-1-2a) N^(-2a) s^(1-2/q) / Z``."""
    a = es.alpha
    return 2.0 ** (-1 - 2 * a) * N ** (-2 * a) * s ** (1 - 2 / q) / (
        c_lambda * eta_q * es.norm_const)


def norm_bound(es: EigenSystem, q: float, s: int, N: int,
               c_lambda: float = 1.0, eta_q: float = 1.0) -> float:
    """Upper bound ``c_lambda eta_q N^(-2a) s^(1-2/q) / Z`` on ``||g_A||^2``."""
    a = es.alpha
    return c_lambda * eta_q * N ** (-2 * a) * s ** (1 - 2 / q) / es.norm_const


def pairwise_distances(ps: PackingSet) -> list[tuple[int, int, float]]:
    return [
        (i, j, l2_pi_distance_sq(ps.functions[i], ps.functions[j]))
        for i, j in itertools.combinations(range(ps.M), 2)
    ]


def pairwise_separation(ps: PackingSet, c_lambda: float = 1.0, eta_q: float = 1.0):
    """Return ``(min_sep_sq, bound)``; raise if the bound is violated."""
    if ps.M == 0:
        raise DomainError("empty packing set")
    bound = separation_bound(ps.es, ps.q, ps.s, ps.N, c_lambda, eta_q)
    if ps.M == 1:
        return math.inf, bound
    min_sep = min(dist for _, _, dist in pairwise_distances(ps))
    if min_sep < bound * (1 - 1e-12):
        raise InvariantViolation(f"min separation {min_sep} below bound {bound}")
    return min_sep, bound


def write_separation_report(ps: PackingSet, path) -> int:
    """CSV ``pair_id,distance_sq,bound,pass``; returns the number of failures."""
    bound = separation_bound(ps.es, ps.q, ps.s, ps.N)
    failures = 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair_id", "distance_sq", "bound", "pass"])
        for i, j, dist in pairwise_distances(ps):
            ok = dist >= bound * (1 - 1e-12)
            failures += not ok
            w.writerow([f"{i}-{j}", repr(dist), repr(bound), int(ok)])
    return failures


def kl_pairwise(f: AdditiveFunction, g: AdditiveFunction, ds: Dataset, sigma: float) -> float:
    """KL divergence between the Gaussian laws of ``Y | X`` under ``f`` and ``g``."""
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    return ds.n / (2.0 * sigma**2) * empirical_l2_sq(f - g, ds)


def fano_from(log_m: float, info_bound: float) -> float:
    """``1 - (I + log 2) / log M`` clipped to ``[0, 1]``."""
    if log_m < math.log(2) - 1e-12:
        raise DomainError("Fano's bound needs at least two hypotheses")
    return float(min(1.0, max(0.0, 1.0 - (info_bound + math.log(2)) / log_m)))


def mutual_info_bound(es: EigenSystem, q: float, s: int, N: int, n: int,
                      sigma: float = 1.0, c_lambda: float = 1.0, eta_q: float = 1.0) -> float:
    """``2 n max ||g_A||^2 / sigma^2`` using :func:`norm_bound`."""
    return 2.0 * n * norm_bound(es, q, s, N, c_lambda, eta_q) / sigma**2


def fano_bound(ps: PackingSet, n: int, sigma: float = 1.0,
               c_lambda: float = 1.0, eta_q: float = 1.0) -> float:
    """Lower bound on the testing error over the packing set."""
    if ps.M < 2:
        raise DomainError("Fano's bound needs at least two hypotheses")
    info = mutual_info_bound(ps.es, ps.q, ps.s, ps.N, n, sigma, c_lambda, eta_q)
    return fano_from(math.log(ps.M), info)


@dataclass(frozen=True)
class Witness:
    sparse_s: int
    sparse_N: int
    smooth_s: int
    smooth_N: int
    sparse_rate: float
    smooth_rate: float
    branch: str

    @property
    def s(self) -> int:
        return self.sparse_s if self.branch == "sparse" else self.smooth_s

    @property
    def N(self) -> int:
        return self.sparse_N if self.branch == "sparse" else self.smooth_N

    @property
    def rate_value(self) -> float:
        return self.sparse_rate if self.branch == "sparse" else self.smooth_rate


def lower_rate_witness(n: int, d: int, q: float, alpha: float,
                       C1: float = DEFAULT_C1) -> Witness:
    """Packing parameters of the two lower-bound branches and their rates.

    Sparse branch: ``N = 1``, ``s = C1 (n / log d)^(q/2)``.  Smooth branch:
    ``s = 1``, ``N = C1 n^(1/(2 alpha + 1))``.  Both are floored and kept at
    least 1.
    """
    if d < 2 or n < 2:
        raise DomainError("need n >= 2 and d >= 2")
    log_d = math.log(d)
    sparse_rate = (log_d / n) ** (1 - q / 2)
    smooth_rate = n ** (-2 * alpha / (2 * alpha + 1))
    s = max(1, math.floor(C1 * (n / log_d) ** (q / 2)))
    N = max(1, math.floor(C1 * n ** (1 / (2 * alpha + 1))))
    branch = "sparse" if sparse_rate >= smooth_rate else "smooth"
    return Witness(s, 1, 1, N, sparse_rate, smooth_rate, branch)
