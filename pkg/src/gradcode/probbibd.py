"""Probabilistic BIBD gradient codes.

Rows of the encoding matrix are drawn i.i.d. from a law p on {0,1}^n chosen so
that, in expectation, every column has l ones and every pair of columns
shares lambda ones.  Those requirements are linear in p; their coefficient
matrix is the generator of the order-2 Reed-Muller code of length 2^n.  We
use the structured solution that puts mass alpha on the all-zero row, gamma on
the all-one row and beta on every other row.

Random streams: a single integer seed drives everything.  ``sample_code``
feeds it straight to ``numpy.random.default_rng`` (PCG64); Monte-Carlo trial
``i`` uses child ``i`` of ``SeedSequence(seed).spawn(trials)``.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

from .bounds import bibd_error
from .codes import EncodingMatrix
from .config import DEFAULT_RM_MAX_N, EXPANDED_VERIFY_MAX_N, TOL
from .decoding import stacked_min_squared_errors
from .errors import CapExceeded, Infeasible, InvalidParams


@dataclass(frozen=True)
class RowDistribution:
    n: int
    k: int
    l: int
    lam: int
    alpha: float
    beta: float
    gamma: float

    @property
    def nonconstant_mass(self) -> float:
        return (2**self.n - 2) * self.beta

    def expand(self) -> np.ndarray:
        """Full probability vector indexed by the integer whose bit j is x_{j+1}."""
        p = np.full(2**self.n, self.beta, dtype=np.float64)
        p[0] = self.alpha
        p[-1] = self.gamma
        return p


def rm2_generator(n: int, max_n: int = DEFAULT_RM_MAX_N) -> np.ndarray:
    """Coefficient matrix of the probability, marginal and pair constraints.

    Row order: all-ones, then x_1..x_n, then x_i x_j for i < j in
    lexicographic order.  Column t is the row pattern whose bit j (least
    significant first) is x_{j+1}.
    """
    if n < 1:
        raise InvalidParams(f"need n >= 1, got {n}")
    if n > max_n:
        raise CapExceeded(f"n = {n} exceeds the cap {max_n}", count=n, cap=max_n)
    t = np.arange(2**n)
    x = ((t[None, :] >> np.arange(n)[:, None]) & 1).astype(np.uint8)
    rows = [np.ones(2**n, dtype=np.uint8)]
    rows.extend(x[j] for j in range(n))
    rows.extend(x[i] & x[j] for i, j in combinations(range(n), 2))
    return np.vstack(rows)


def rm2_rhs(n: int, k: int, l: int, lam: int) -> np.ndarray:
    return np.concatenate([[1.0], np.full(n, l / k), np.full(math.comb(n, 2), lam / k)])


def real_rank(a, tol: float = 1e-9) -> int:
    """Rank by Gaussian elimination with partial pivoting."""
    a = np.array(a, dtype=np.float64)
    rows, cols = a.shape
    rank = 0
    for c in range(cols):
        if rank == rows:
            break
        p = rank + int(np.argmax(np.abs(a[rank:, c])))
        if abs(a[p, c]) <= tol:
            continue
        a[[rank, p]] = a[[p, rank]]
        a[rank] /= a[rank, c]
        a[rank + 1:] -= np.outer(a[rank + 1:, c], a[rank])
        rank += 1
    return rank


def solve_distribution(n: int, k: int, l: int, lam: int) -> RowDistribution:
    """Closed-form (alpha, beta, gamma) meeting the row constraints in expectation."""
    checks = [
        ("k >= 1", k >= 1),
        ("n >= l", n >= l),
        ("l >= lambda", l >= lam),
        ("lambda >= 0", lam >= 0),
        ("2*lambda >= l", 2 * lam >= l),
        ("k >= 3*l - 2*lambda", k >= 3 * l - 2 * lam),
    ]
    for name, ok in checks:
        if not ok:
            raise Infeasible(name, f"no non-negative row law for n={n} k={k} l={l} lambda={lam}: {name} fails")
    scale = Fraction(2) ** (n - 2)
    beta = Fraction(l - lam) / (k * scale)
    gamma = (2 * lam - l + Fraction(l - lam) / scale) / k
    alpha = 1 + Fraction(2 * lam - 3 * l, k) + Fraction(l - lam) / (k * scale)
    if min(alpha, beta, gamma) < 0:
        raise Infeasible("alpha, beta, gamma >= 0")
    return RowDistribution(n, k, l, lam, float(alpha), float(beta), float(gamma))


@dataclass(frozen=True)
class SystemReport:
    method: str
    total_residual: float
    marginal_residual: float
    pair_residual: float

    @property
    def max_residual(self) -> float:
        return max(self.total_residual, self.marginal_residual, self.pair_residual)

    @property
    def ok(self) -> bool:
        return self.max_residual <= TOL.system_residual


def verify_system(dist: RowDistribution) -> SystemReport:
    """Residual of A p = b, by full expansion for small n and analytically otherwise."""
    n, k = dist.n, dist.k
    if n <= EXPANDED_VERIFY_MAX_N:
        A = rm2_generator(n).astype(np.float64)
        resid = np.abs(A @ dist.expand() - rm2_rhs(n, k, dist.l, dist.lam))
        pair = resid[1 + n:]
        return SystemReport(
            "expanded",
            float(resid[0]),
            float(resid[1:1 + n].max()),
            float(pair.max()) if pair.size else 0.0,
        )
    a, b, g = dist.alpha, dist.beta, dist.gamma
    total = abs(a + b * (2**n - 2) + g - 1)
    marginal = abs(b * (2 ** (n - 1) - 1) + g - dist.l / k)
    pair = abs(b * (2 ** (n - 2) - 1) + g - dist.lam / k) if n >= 2 else 0.0
    return SystemReport("reduced", total, marginal, pair)


def _draw_rows(dist: RowDistribution, k: int, rng: np.random.Generator) -> np.ndarray:
    n = dist.n
    u = rng.random(k)
    rows = np.zeros((k, n), dtype=np.uint8)
    t0 = dist.alpha
    t1 = dist.alpha + dist.gamma if dist.nonconstant_mass > 0 and n >= 2 else 1.0
    rows[(u >= t0) & (u < t1)] = 1
    need = np.flatnonzero(u >= t1)
    while need.size:
        bits = rng.integers(0, 2, size=(need.size, n), dtype=np.uint8)
        weight = bits.sum(axis=1)
        good = (weight > 0) & (weight < n)
        rows[need[good]] = bits[good]
        need = need[~good]
    return rows


def sample_code(dist: RowDistribution, k: int, seed) -> EncodingMatrix:
    """k i.i.d. rows from ``dist``; bitwise reproducible for a fixed seed."""
    if k != dist.k:
        raise InvalidParams(f"distribution was solved for k={dist.k}, asked for k={k}")
    return EncodingMatrix(_draw_rows(dist, k, np.random.default_rng(seed)))


# ---------------------------------------------------------------------------
# Monte-Carlo error
# ---------------------------------------------------------------------------

DECODERS = ("optimal", "bibd_constant")


@dataclass(frozen=True)
class MCResult:
    params: dict
    s: int
    trials: int
    mean: float
    stderr: float
    bound: float
    decoder: str

    def to_dict(self) -> dict:
        return asdict(self)


def mc_trial_errors(dist: RowDistribution, k: int, s: int, trials: int, seed: int) -> dict[str, np.ndarray]:
    """Per-trial normalised errors of both decoders on the same sampled matrices.

    Survivors are the first n - s columns; the row law is exchangeable over
    columns so every survivor set of that size has the same expectation.
    """
    n = dist.n
    if not 0 <= s <= n:
        raise InvalidParams(f"need 0 <= s <= n, got s={s} n={n}")
    if trials < 1:
        raise InvalidParams("need at least one trial")
    if k != dist.k:
        raise InvalidParams(f"distribution was solved for k={dist.k}, asked for k={k}")
    m = n - s
    if m == 0:
        ones = np.ones(trials)
        return {"optimal": ones, "bibd_constant": ones.copy()}
    children = np.random.SeedSequence(seed).spawn(trials)
    mats = np.stack([_draw_rows(dist, k, np.random.default_rng(c))[:, :m] for c in children]).astype(np.float64)
    gram = np.einsum("tki,tkj->tij", mats, mats)
    w = mats.sum(axis=1)

    opt = stacked_min_squared_errors(gram, w, k) / k

    denom = dist.l + dist.lam * (m - 1)
    v = dist.l / denom if denom > 0 else 0.0
    const = (k - 2.0 * v * w.sum(axis=1) + v * v * gram.sum(axis=(1, 2))) / k
    return {"optimal": opt, "bibd_constant": const}


def expected_error_mc(dist: RowDistribution, k: int, s: int, trials: int, seed: int,
                      decoder: str = "optimal") -> MCResult:
    if decoder not in DECODERS:
        raise InvalidParams(f"decoder must be one of {DECODERS}, got {decoder!r}")
    errs = mc_trial_errors(dist, k, s, trials, seed)[decoder]
    mean = float(errs.mean())
    stderr = float(errs.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    params = {"n": dist.n, "k": dist.k, "l": dist.l, "lambda": dist.lam}
    bound = bibd_error(dist.n, dist.k, dist.l, dist.lam, s)
    return MCResult(params, s, trials, mean, stderr, bound, decoder)
