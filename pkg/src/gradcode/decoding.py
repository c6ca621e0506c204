"""Decoding vectors and squared errors for a fixed set of surviving workers.

Given surviving workers U, the master sees f G_U and approximates the full
gradient sum f 1_k by f G_U v.  Everything here works with the Gram route

    ||G_U v - 1_k||^2 = k - 2 v^T G_U^T 1_k + v^T G_U^T G_U v,

so the k x |U| sub-matrix is never needed once the integer Gram matrix of the
code is cached.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import linalg as sla

from .bounds import kron_bibd_d
from .codes import CodeParams, EncodingMatrix
from .config import TOL
from .errors import InvalidParams, NumericalFailure


@dataclass(frozen=True)
class StragglerScenario:
    """Which of the n workers failed (0-based, sorted)."""

    n: int
    stragglers: tuple[int, ...]

    def __post_init__(self):
        st = tuple(sorted(int(i) for i in self.stragglers))
        if len(set(st)) != len(st):
            raise InvalidParams(f"duplicate straggler indices {st}")
        if st and (st[0] < 0 or st[-1] >= self.n):
            raise InvalidParams(f"straggler indices {st} outside [0, {self.n})")
        object.__setattr__(self, "stragglers", st)

    @classmethod
    def from_survivors(cls, n: int, survivors) -> "StragglerScenario":
        alive = set(int(i) for i in survivors)
        return cls(n, tuple(i for i in range(n) if i not in alive))

    @property
    def s(self) -> int:
        return len(self.stragglers)

    @property
    def survivors(self) -> tuple[int, ...]:
        dead = set(self.stragglers)
        return tuple(i for i in range(self.n) if i not in dead)

    # conventional name for the non-straggler set
    U = survivors


def _as_index(U) -> np.ndarray:
    if isinstance(U, StragglerScenario):
        U = U.survivors
    return np.asarray(U, dtype=np.intp).ravel()


def optimal_decoding(g: EncodingMatrix, U) -> np.ndarray:
    """Least-squares decoding vector minimising ||G_U v - 1_k||^2.

    A Cholesky solve of the normal equations is used when the Gram matrix is
    comfortably positive definite; otherwise the minimum-norm solution is
    returned.  Only the attained error is unique when G_U is rank deficient.
    """
    idx = _as_index(U)
    if idx.size == 0:
        raise InvalidParams("optimal decoding needs at least one surviving worker")
    gram = g.gram[np.ix_(idx, idx)].astype(np.float64)
    rhs = g.column_weights[idx].astype(np.float64)
    limit = TOL.normal_eq_residual * g.k

    v = None
    try:
        c, lower = sla.cho_factor(gram, lower=True, check_finite=False)
        piv = np.diag(c) ** 2
        if piv.min() > TOL.cholesky_pivot_rel * piv.max():
            v = sla.cho_solve((c, lower), rhs, check_finite=False)
            if np.abs(gram @ v - rhs).max() > limit:
                v = None
    except sla.LinAlgError:
        v = None
    if v is None:
        v = np.linalg.lstsq(g.columns(idx), np.ones(g.k), rcond=None)[0]
        resid = np.abs(gram @ v - rhs).max()
        if resid > limit:
            raise NumericalFailure(f"normal-equation residual {resid:.3e} exceeds {limit:.3e}")
    return v


def closed_form_decoding(l: int, lam: int, n: int, s: int) -> np.ndarray:
    """Constant vector l / (l + lambda (n-s-1)) for codes with uniform intersections."""
    if not l > lam >= 0:
        raise InvalidParams(f"closed-form decoding needs l > lambda >= 0, got l={l} lambda={lam}")
    if not 0 <= s < n:
        raise InvalidParams(f"need 0 <= s < n, got s={s} n={n}")
    return np.full(n - s, l / (l + lam * (n - s - 1)))


def kron_constant_decoder(p1: CodeParams, p2: CodeParams, s: int) -> np.ndarray:
    """Constant decoder a* = l1 l2 / (d + (n1 n2 - s) lambda1 lambda2) for a product of two lambda-codes."""
    if p1.lam is None or p2.lam is None:
        raise InvalidParams("both factors need a lambda")
    if p1.l < p1.lam or p2.l < p2.lam:
        raise InvalidParams("need l >= lambda in both factors")
    big_n = p1.n * p2.n
    if not 0 <= s < big_n:
        raise InvalidParams(f"need 0 <= s < {big_n}, got {s}")
    alive = big_n - s
    a = p1.l * p2.l / (kron_bibd_d(p1, p2) + alive * p1.lam * p2.lam)
    return np.full(alive, a)


def _clamp(err: float, k: int) -> float:
    if err < 0:
        if err < -TOL.error_clamp * max(k, 1):
            raise NumericalFailure(f"negative squared error {err:.3e}")
        return 0.0
    return err


def squared_error(g: EncodingMatrix, U, v) -> float:
    """||G_U v - 1_k||^2 via the Gram expansion."""
    idx = _as_index(U)
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size != idx.size:
        raise InvalidParams(f"decoding vector has length {v.size}, expected {idx.size}")
    gram = g.gram[np.ix_(idx, idx)].astype(np.float64)
    w = g.column_weights[idx].astype(np.float64)
    err = g.k - 2.0 * v @ w + v @ gram @ v
    return _clamp(float(err), g.k)


def min_squared_error(g: EncodingMatrix, U) -> float:
    """Squared error attained by the optimal decoder (k when no worker survives)."""
    idx = _as_index(U)
    if idx.size == 0:
        return float(g.k)
    return squared_error(g, idx, optimal_decoding(g, idx))


def normalized_error(g: EncodingMatrix, U) -> float:
    return min_squared_error(g, U) / g.k


# ---------------------------------------------------------------------------
# Exact rational route
# ---------------------------------------------------------------------------

def _solve_consistent(mat: list[list[Fraction]], rhs: list[Fraction]) -> list[Fraction]:
    """Gauss-Jordan solve of a consistent (possibly singular) system; free variables set to 0."""
    m = len(rhs)
    a = [row[:] + [rhs[i]] for i, row in enumerate(mat)]
    pivots = []
    row = 0
    for col in range(m):
        p = next((i for i in range(row, m) if a[i][col] != 0), None)
        if p is None:
            continue
        a[row], a[p] = a[p], a[row]
        inv = 1 / a[row][col]
        a[row] = [x * inv for x in a[row]]
        for i in range(m):
            if i != row and a[i][col] != 0:
                f = a[i][col]
                a[i] = [x - f * y for x, y in zip(a[i], a[row])]
        pivots.append(col)
        row += 1
        if row == m:
            break
    for i in range(row, m):
        if a[i][m] != 0:
            raise NumericalFailure("normal equations are inconsistent")
    x = [Fraction(0)] * m
    for i, col in enumerate(pivots):
        x[col] = a[i][m]
    return x


def exact_min_squared_error(g: EncodingMatrix, U) -> Fraction:
    """Optimal squared error as an exact rational, k - b^T x with (G_U^T G_U) x = G_U^T 1.

    Identical columns are merged first; they span the same space.
    """
    idx = _as_index(U)
    if idx.size == 0:
        return Fraction(g.k)
    classes = g.column_classes[idx]
    _, first = np.unique(classes, return_index=True)
    rep = idx[np.sort(first)]
    gram = g.gram[np.ix_(rep, rep)]
    b = [Fraction(int(x)) for x in g.column_weights[rep]]
    mat = [[Fraction(int(x)) for x in row] for row in gram]
    x = _solve_consistent(mat, b)
    return Fraction(g.k) - sum((bi * xi for bi, xi in zip(b, x)), Fraction(0))


# ---------------------------------------------------------------------------
# Batched float route
# ---------------------------------------------------------------------------

def batch_min_squared_errors(gram: np.ndarray, weights: np.ndarray, k: int, U: np.ndarray) -> np.ndarray:
    """Optimal squared errors for a stack of survivor sets of equal size.

    ``U`` has shape (B, m).  Positive-definite Gram blocks go through a
    batched Cholesky solve; anything else through a pseudo-inverse built from
    the eigen-decomposition.
    """
    U = np.asarray(U, dtype=np.intp)
    batch, m = U.shape
    if m == 0:
        return np.full(batch, float(k))
    gram = np.asarray(gram, dtype=np.float64)
    M = gram[U[:, :, None], U[:, None, :]]
    b = np.asarray(weights, dtype=np.float64)[U]
    return stacked_min_squared_errors(M, b, k)


def stacked_min_squared_errors(M: np.ndarray, b: np.ndarray, k: int) -> np.ndarray:
    """k - b^T M^+ b for each (M[i], b[i]) in a stack of PSD Gram blocks."""
    batch, m = b.shape
    if m == 0:
        return np.full(batch, float(k))
    quad = None
    try:
        L = np.linalg.cholesky(M)
        piv = np.diagonal(L, axis1=1, axis2=2) ** 2
        ok = piv.min(axis=1) > TOL.cholesky_pivot_rel * piv.max(axis=1)
        if ok.all():
            y = np.linalg.solve(L, b[..., None])[..., 0]
            quad = np.einsum("bi,bi->b", y, y)
    except np.linalg.LinAlgError:
        quad = None
    if quad is None:
        w, Q = np.linalg.eigh(M)
        proj = np.einsum("bij,bi->bj", Q, b)
        cut = TOL.rank_rel * np.maximum(w[:, -1:], 1.0)
        keep = w > cut
        safe = np.where(keep, w, 1.0)
        quad = np.where(keep, proj**2 / safe, 0.0).sum(axis=1)

    err = k - quad
    if (err < -TOL.error_clamp * max(k, 1)).any():
        raise NumericalFailure(f"negative squared error {err.min():.3e} in batch")
    return np.maximum(err, 0.0)
