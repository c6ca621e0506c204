"""Adversarial straggler search.

The normalised worst-case error of a code with s stragglers is

    err(G, s) = max over |U| = n - s of min_v ||G_U v - 1_k||^2 / k.

``exhaustive_worst_case`` evaluates it exactly by enumerating straggler sets
in lexicographic order.  ``sampled_worst_case`` gives a lower bound from
random sets plus the structured adversaries that are known to be (near)
worst for FRCs and FRC x BIBD products.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations, islice
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

from .bounds import bound_for
from .codes import (
    CatalogBIBD,
    CodeDescriptor,
    CodeParams,
    EncodingMatrix,
    FRC,
    Kronecker,
    build_frc,
    commutation_permutations,
    frc_structure,
)
from .config import TOL, subset_cap
from .decoding import StragglerScenario, batch_min_squared_errors, exact_min_squared_error
from .errors import CapExceeded, DimensionMismatch, InvalidParams, NotAnFRC, ShapeMismatch

METHODS = ("exhaustive", "sampled", "structured")


@dataclass(frozen=True)
class WorstCaseResult:
    s: int
    error: float
    witness: StragglerScenario
    method: str
    subsets_evaluated: int
    # smallest error over the evaluated sets (equal to ``error`` for lambda-uniform codes)
    min_error: float | None = None
    exact_error: Fraction | None = None

    def __post_init__(self):
        if not -TOL.error_clamp <= self.error <= 1 + TOL.error_clamp:
            raise InvalidParams(f"normalised error {self.error} outside [0, 1]")
        if self.witness.s != self.s:
            raise InvalidParams("witness size does not match s")


# ---------------------------------------------------------------------------
# Evaluation of many survivor sets
# ---------------------------------------------------------------------------

class _Evaluator:
    """Optimal squared errors (unnormalised) for stacks of survivor sets.

    When the code has repeated columns the error only depends on which column
    classes survive, so results are cached per class bitmask.
    """

    def __init__(self, g: EncodingMatrix, exact: bool = False):
        self.g = g
        self.exact = exact
        self.classes = g.column_classes
        n_classes = int(self.classes.max()) + 1
        self.use_keys = n_classes <= 62 and (n_classes < g.n or exact)
        self.cache: dict[int, object] = {}
        self.gram = g.gram.astype(np.float64)
        self.weights = g.column_weights.astype(np.float64)

    def _direct(self, U: np.ndarray):
        if self.exact:
            return [exact_min_squared_error(self.g, u) for u in U]
        return list(batch_min_squared_errors(self.gram, self.weights, self.g.k, U))

    def __call__(self, U: np.ndarray) -> list:
        if not self.use_keys or U.shape[1] == 0:
            return self._direct(U)
        bits = np.left_shift(np.int64(1), self.classes[U].astype(np.int64))
        keys = np.bitwise_or.reduce(bits, axis=1)
        uniq, first, inv = np.unique(keys, return_index=True, return_inverse=True)
        missing = [i for i, key in enumerate(uniq.tolist()) if key not in self.cache]
        if missing:
            vals = self._direct(U[first[missing]])
            for i, v in zip(missing, vals):
                self.cache[int(uniq[i])] = v
        table = [self.cache[int(key)] for key in uniq.tolist()]
        return [table[j] for j in np.asarray(inv).ravel()]


def _survivors(stragglers: np.ndarray, n: int) -> np.ndarray:
    batch, s = stragglers.shape
    mask = np.ones((batch, n), dtype=bool)
    if s:
        mask[np.arange(batch)[:, None], stragglers] = False
    return np.nonzero(mask)[1].reshape(batch, n - s)


def _straggler_chunks(n: int, s: int, chunk: int) -> Iterator[np.ndarray]:
    it = combinations(range(n), s)
    if s == 0:
        yield np.zeros((1, 0), dtype=np.intp)
        return
    while True:
        flat = np.fromiter((i for c in islice(it, chunk) for i in c), dtype=np.intp)
        if flat.size == 0:
            return
        yield flat.reshape(-1, s)


class _Reducer:
    """Running max with lexicographic tie-break over sets fed in order."""

    def __init__(self, exact: bool):
        self.exact = exact
        self.best = None
        self.best_set: tuple[int, ...] | None = None
        self.lowest = None
        self.count = 0

    def _ahead(self, a, b) -> bool:
        return a > b if self.exact else a > b + TOL.tie * 10  # compare raw squared errors

    def feed(self, sets: Sequence[tuple[int, ...]], errs: Sequence) -> None:
        for st, e in zip(sets, errs):
            self.count += 1
            if self.lowest is None or e < self.lowest:
                self.lowest = e
            if self.best is None or self._ahead(e, self.best):
                self.best, self.best_set = e, st
            elif not self.exact and abs(e - self.best) <= TOL.tie * 10 and st < self.best_set:
                self.best_set = st
            elif self.exact and e == self.best and st < self.best_set:
                self.best_set = st


def _result(g: EncodingMatrix, s: int, red: _Reducer, method: str, exact: bool) -> WorstCaseResult:
    k = g.k
    if exact:
        exact_err = Fraction(red.best) / k
        return WorstCaseResult(s, float(exact_err), StragglerScenario(g.n, red.best_set), method, red.count,
                               float(Fraction(red.lowest) / k), exact_err)
    return WorstCaseResult(s, float(red.best) / k, StragglerScenario(g.n, red.best_set), method, red.count,
                           float(red.lowest) / k)


def exhaustive_worst_case(
    g: EncodingMatrix,
    s: int,
    cap: int | None = None,
    exact: bool = False,
    chunk: int = 20000,
    workers: int = 1,
    on_batch: Callable[[np.ndarray, np.ndarray], None] | None = None,
) -> WorstCaseResult:
    """Exact worst case over all C(n, s) straggler sets.

    ``exact=True`` evaluates every set in rational arithmetic.  ``on_batch``
    receives each chunk of survivor sets with their normalised errors.
    ``workers > 1`` evaluates chunks on a thread pool; the reduction is
    still done in enumeration order so the witness does not depend on it.
    """
    n = g.n
    if not 0 <= s <= n:
        raise InvalidParams(f"need 0 <= s <= n, got s={s} n={n}")
    total = math.comb(n, s)
    limit = subset_cap(cap)
    if total > limit:
        raise CapExceeded(f"C({n},{s}) = {total} straggler sets exceed the cap {limit}", count=total, cap=limit)
    ev = _Evaluator(g, exact)
    red = _Reducer(exact)

    def work(S: np.ndarray):
        U = _survivors(S, n)
        return S, U, ev(U)

    chunks = _straggler_chunks(n, s, chunk)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results: Iterable = pool.map(work, chunks)
            _consume(results, red, on_batch, g.k)
    else:
        _consume(map(work, chunks), red, on_batch, g.k)
    return _result(g, s, red, "exhaustive", exact)


def _consume(results, red: _Reducer, on_batch, k: int) -> None:
    for S, U, errs in results:
        if on_batch is not None:
            on_batch(U, np.array([float(e) for e in errs]) / k)
        red.feed([tuple(int(i) for i in row) for row in S], errs)


# ---------------------------------------------------------------------------
# Structured adversaries
# ---------------------------------------------------------------------------

def frc_adversary(params: CodeParams, s: int, g: EncodingMatrix | None = None) -> StragglerScenario:
    """Fill whole FRC blocks first: workers 0..s-1 in the block-diagonal layout."""
    try:
        frc = build_frc(params.n, params.k, params.l, params.r)
    except DimensionMismatch as exc:
        raise NotAnFRC(str(exc)) from None
    if g is not None and g != frc:
        raise NotAnFRC("matrix is not the block-diagonal FRC for these parameters")
    if not 0 <= s <= params.n:
        raise InvalidParams(f"need 0 <= s <= n, got s={s} n={params.n}")
    return StragglerScenario(params.n, tuple(range(s)))


def kron_frc_bibd_adversary(f: CodeParams, b: CodeParams, s: int,
                            g: EncodingMatrix | None = None) -> StragglerScenario:
    """Stragglers for FRC x BIBD: whole product blocks first, then the rest spread evenly
    over the r1 sub-blocks of the next block."""
    n = f.n * b.n
    if g is not None and g.shape != (f.k * b.k, n):
        raise ShapeMismatch(f"matrix shape {g.shape} does not match {(f.k * b.k, n)}")
    if not 0 <= s <= n:
        raise InvalidParams(f"need 0 <= s <= n, got s={s} n={n}")
    block = f.r * b.n
    full = s // block
    out = list(range(full * block))
    rem = s - full * block
    if rem:
        base = full * block
        q, extra = divmod(rem, f.r)
        for j in range(f.r):
            cnt = q + (1 if j < extra else 0)
            out.extend(base + j * b.n + t for t in range(cnt))
    return StragglerScenario(n, tuple(out))


def _frc_params(desc) -> CodeParams | None:
    return desc.params if isinstance(desc, FRC) else None


def structured_candidates(g: EncodingMatrix, s: int, descriptor: CodeDescriptor | None = None) -> list[StragglerScenario]:
    n = g.n
    cands = [StragglerScenario(n, tuple(range(s)))]
    try:
        _, _, col_perm = frc_structure(g)
        cands.append(StragglerScenario(n, tuple(int(c) for c in col_perm[:s])))
    except NotAnFRC:
        pass
    if isinstance(descriptor, Kronecker):
        left, right = descriptor.left, descriptor.right
        lp = _frc_params(left)
        rp = _frc_params(right)
        if lp is not None and isinstance(right, CatalogBIBD):
            cands.append(kron_frc_bibd_adversary(lp, right.params, s, g))
        if rp is not None and isinstance(left, CatalogBIBD):
            fb = kron_frc_bibd_adversary(rp, left.params, s)
            bp = left.params
            # column j of F x B is column cp[j] of B x F
            _, cp = commutation_permutations(rp.k, rp.n, bp.k, bp.n)
            cands.append(StragglerScenario(n, tuple(int(cp[j]) for j in fb.stragglers)))
        n2 = _leaf_n(right)
        if n2 is not None and n % n2 == 0:
            n1 = n // n2
            class_order = [j1 * n2 + j2 for j2 in range(n2) for j1 in range(n1)]
            cands.append(StragglerScenario(n, tuple(class_order[:s])))
    uniq = {c.stragglers: c for c in cands}
    return [uniq[key] for key in sorted(uniq)]


def _leaf_n(desc) -> int | None:
    if isinstance(desc, (FRC, CatalogBIBD)):
        return desc.params.n
    if isinstance(desc, Kronecker):
        a, b = _leaf_n(desc.left), _leaf_n(desc.right)
        return None if a is None or b is None else a * b
    return getattr(desc, "n", None)


def evaluate_scenarios(g: EncodingMatrix, scenarios: Sequence[StragglerScenario]) -> np.ndarray:
    """Normalised optimal errors for an arbitrary list of equal-size scenarios."""
    if not scenarios:
        return np.zeros(0)
    S = np.array([sc.stragglers for sc in scenarios], dtype=np.intp).reshape(len(scenarios), -1)
    ev = _Evaluator(g)
    return np.array(ev(_survivors(S, g.n)), dtype=np.float64) / g.k


def sampled_worst_case(
    g: EncodingMatrix,
    s: int,
    trials: int,
    seed: int,
    descriptor: CodeDescriptor | None = None,
    extra: Sequence[StragglerScenario] = (),
    chunk: int = 20000,
    on_batch: Callable[[np.ndarray, np.ndarray], None] | None = None,
) -> WorstCaseResult:
    """Lower bound on the worst case from random sets and structured candidates.

    ``method`` is reported as ``structured`` when a structured (or supplied)
    candidate attains the maximum, ``sampled`` otherwise.
    """
    n = g.n
    if trials < 1:
        raise InvalidParams("need at least one trial")
    if not 0 <= s <= n:
        raise InvalidParams(f"need 0 <= s <= n, got s={s} n={n}")
    ev = _Evaluator(g)
    red = _Reducer(exact=False)
    rng = np.random.default_rng(seed)
    done = 0
    while done < trials:
        b = min(chunk, trials - done)
        S = np.sort(np.argsort(rng.random((b, n)), axis=1)[:, :s], axis=1)
        U = _survivors(S, n)
        errs = ev(U)
        if on_batch is not None:
            on_batch(U, np.asarray(errs, dtype=np.float64) / g.k)
        red.feed([tuple(int(i) for i in row) for row in S], errs)
        done += b
    random_best = red.best

    cands = structured_candidates(g, s, descriptor) + [c for c in extra if c.s == s]
    if cands:
        S = np.array([c.stragglers for c in cands], dtype=np.intp).reshape(len(cands), s)
        U = _survivors(S, n)
        errs = ev(U)
        if on_batch is not None:
            on_batch(U, np.asarray(errs, dtype=np.float64) / g.k)
        red.feed([c.stragglers for c in cands], errs)
    method = "structured" if red.best > random_best + TOL.tie * 10 else "sampled"
    return _result(g, s, red, method, exact=False)


def worst_case(
    g: EncodingMatrix,
    s: int,
    method: str = "auto",
    trials: int = 10_000,
    seed: int = 0,
    cap: int | None = None,
    descriptor: CodeDescriptor | None = None,
    extra: Sequence[StragglerScenario] = (),
    exact: bool = False,
    strict: bool = False,
) -> tuple[WorstCaseResult, bool]:
    """Dispatch on ``method``; returns the result and whether it was downgraded.

    ``auto`` is exhaustive when C(n, s) is within the cap and sampled
    otherwise.  An explicit ``exhaustive`` request over the cap is downgraded
    to sampling (flagged) unless ``strict`` is set.
    """
    if method not in ("auto", "exhaustive", "sampled"):
        raise InvalidParams(f"unknown method {method!r}")
    limit = subset_cap(cap)
    if method == "sampled":
        return sampled_worst_case(g, s, trials, seed, descriptor, extra), False
    over = math.comb(g.n, s) > limit
    if not over:
        return exhaustive_worst_case(g, s, cap=limit, exact=exact), False
    if strict:
        raise CapExceeded(f"C({g.n},{s}) = {math.comb(g.n, s)} straggler sets exceed the cap {limit}",
                          count=math.comb(g.n, s), cap=limit)
    return sampled_worst_case(g, s, trials, seed, descriptor, extra), method == "exhaustive"


# ---------------------------------------------------------------------------
# Error curves
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurveRecord:
    s: int
    fraction_straggled: float
    measured_error: float
    method: str
    formula_or_bound: float | None
    bound_name: str
    witness: tuple[int, ...]
    downgraded: bool = False
    bound_clamped: bool = False

    def row(self) -> dict:
        return {
            "s": self.s,
            "fraction_straggled": self.fraction_straggled,
            "measured_error": self.measured_error,
            "method": self.method,
            "formula_or_bound": "" if self.formula_or_bound is None else self.formula_or_bound,
            "bound_name": self.bound_name,
            "witness": " ".join(str(i) for i in self.witness),
            "downgraded": int(self.downgraded),
        }


CURVE_COLUMNS = ("s", "fraction_straggled", "measured_error", "method", "formula_or_bound",
                 "bound_name", "witness", "downgraded")


def error_curve(
    g: EncodingMatrix,
    s_values: Iterable[int],
    method: str = "auto",
    trials: int = 10_000,
    seed: int = 0,
    cap: int | None = None,
    descriptor: CodeDescriptor | None = None,
    strict: bool = False,
    exact: bool = False,
) -> list[CurveRecord]:
    """Measured worst case next to the matching closed form for each s.

    When s follows s - 1 in the list, every one-worker extension of the
    previous witness is added as a candidate, so sampled curves stay
    nondecreasing in s.  ``exact`` makes exhaustive rows rational-exact.
    """
    out: list[CurveRecord] = []
    prev: StragglerScenario | None = None
    for s in s_values:
        s = int(s)
        extra: list[StragglerScenario] = []
        if prev is not None and prev.s == s - 1:
            dead = set(prev.stragglers)
            extra = [StragglerScenario(g.n, prev.stragglers + (j,)) for j in range(g.n) if j not in dead]
        sub_seed = int(np.random.SeedSequence([seed, s]).generate_state(1)[0])
        res, down = worst_case(g, s, method, trials, sub_seed, cap, descriptor, extra, exact=exact, strict=strict)
        rec = bound_for(descriptor, s) if descriptor is not None else None
        out.append(CurveRecord(
            s=s,
            fraction_straggled=s / g.n,
            measured_error=res.error,
            method=res.method,
            formula_or_bound=None if rec is None else rec.value,
            bound_name="" if rec is None else rec.name,
            witness=res.witness.stragglers,
            downgraded=down,
            bound_clamped=False if rec is None else rec.clamped,
        ))
        prev = res.witness
    return out
