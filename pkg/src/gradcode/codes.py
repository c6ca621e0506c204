"""Encoding matrices for gradient codes: FRCs, catalog BIBDs and Kronecker products.

An encoding matrix is a k x n binary matrix whose rows are data pieces and
whose columns are workers; entry (i, j) is 1 when worker j computes the
gradient of piece i.  Codes can also be described declaratively with the
descriptor classes at the bottom of this module, which round-trip through
JSON.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from functools import cached_property
from typing import Any, Union

import numpy as np

from .config import DEFAULT_MATRIX_CAP
from .errors import ConfigError, DimensionMismatch, InvalidParams, NotAnFRC, SizeOverflow, UnknownDesign


class EncodingMatrix:
    """Immutable k x n binary assignment of data pieces (rows) to workers (columns)."""

    def __init__(self, bits):
        arr = np.array(bits, dtype=np.int64, copy=True)
        if arr.ndim != 2:
            raise DimensionMismatch(f"encoding matrix must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionMismatch(f"encoding matrix must have k, n >= 1, got {arr.shape}")
        if not np.isin(arr, (0, 1)).all():
            raise InvalidParams("encoding matrix entries must be 0 or 1")
        arr = arr.astype(np.uint8)
        arr.setflags(write=False)
        self._bits = arr

    @property
    def bits(self) -> np.ndarray:
        return self._bits

    @property
    def k(self) -> int:
        return self._bits.shape[0]

    @property
    def n(self) -> int:
        return self._bits.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self._bits.shape

    @cached_property
    def column_weights(self) -> np.ndarray:
        w = self._bits.sum(axis=0, dtype=np.int64)
        w.setflags(write=False)
        return w

    @cached_property
    def row_weights(self) -> np.ndarray:
        w = self._bits.sum(axis=1, dtype=np.int64)
        w.setflags(write=False)
        return w

    @cached_property
    def gram(self) -> np.ndarray:
        """Integer matrix of pairwise column intersections, G^T G."""
        b = self._bits.astype(np.int64)
        g = b.T @ b
        g.setflags(write=False)
        return g

    @cached_property
    def column_classes(self) -> np.ndarray:
        """Class id per column; equal ids mean identical columns."""
        _, inv = np.unique(self._bits.T, axis=0, return_inverse=True)
        inv = np.asarray(inv, dtype=np.int64).ravel()
        inv.setflags(write=False)
        return inv

    def columns(self, cols) -> np.ndarray:
        """Float copy of the sub-matrix G_U for the given column indices."""
        return self._bits[:, np.asarray(cols, dtype=np.intp)].astype(np.float64)

    def permuted(self, row_perm, col_perm) -> "EncodingMatrix":
        return EncodingMatrix(self._bits[np.ix_(np.asarray(row_perm), np.asarray(col_perm))])

    def to_text(self) -> str:
        lines = [f"{self.k} {self.n}"]
        lines.extend("".join("1" if x else "0" for x in row) for row in self._bits)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "EncodingMatrix":
        lines = [ln.strip() for ln in text.strip().splitlines() if ln.strip()]
        if not lines:
            raise DimensionMismatch("empty matrix file")
        try:
            k, n = (int(t) for t in lines[0].split())
        except ValueError as exc:
            raise DimensionMismatch(f"bad header line {lines[0]!r}; expected 'k n'") from exc
        rows = lines[1:]
        if len(rows) != k or any(len(r) != n for r in rows):
            raise DimensionMismatch(f"matrix body does not match header {k} x {n}")
        if any(set(r) - {"0", "1"} for r in rows):
            raise InvalidParams("matrix file rows may only contain 0 and 1")
        return cls([[int(c) for c in r] for r in rows])

    def __eq__(self, other) -> bool:
        if not isinstance(other, EncodingMatrix):
            return NotImplemented
        return self.shape == other.shape and bool(np.array_equal(self._bits, other._bits))

    def __hash__(self) -> int:
        return hash((self.shape, self._bits.tobytes()))

    def __repr__(self) -> str:
        return f"EncodingMatrix(k={self.k}, n={self.n}, ones={int(self.column_weights.sum())})"


@dataclass(frozen=True)
class CodeParams:
    """Parameters (n, k, l, r[, lambda]) of a regular gradient code."""

    n: int
    k: int
    l: int
    r: int
    lam: int | None = None

    def __post_init__(self):
        if min(self.n, self.k) < 1 or min(self.l, self.r) < 0:
            raise InvalidParams(f"invalid code parameters {self}")
        if self.n * self.l != self.k * self.r:
            raise InvalidParams(f"counting identity n*l = k*r fails for {self}")
        if self.lam is not None and not (self.l >= self.lam >= 0):
            raise InvalidParams(f"need l >= lambda >= 0, got {self}")

    @property
    def fractional_redundancy(self) -> float:
        return self.r / self.n


# ---------------------------------------------------------------------------
# Constructions
# ---------------------------------------------------------------------------

def build_frc(n: int, k: int, l: int, r: int) -> EncodingMatrix:
    """Fractional repetition code: k/l diagonal all-one blocks of size l x r."""
    if min(n, k, l, r) < 1:
        raise DimensionMismatch(f"FRC parameters must be positive, got n={n} k={k} l={l} r={r}")
    if k % l or n % r:
        raise DimensionMismatch(f"FRC needs l | k and r | n, got n={n} k={k} l={l} r={r}")
    if k // l != n // r:
        raise DimensionMismatch(f"FRC block counts differ: k/l={k // l}, n/r={n // r}")
    blocks = k // l
    return EncodingMatrix(np.kron(np.eye(blocks, dtype=np.int64), np.ones((l, r), dtype=np.int64)))


# name -> (modulus, difference set, lambda)
BIBD_CATALOG: dict[str, tuple[int, tuple[int, ...], int]] = {
    "fano": (7, (1, 2, 4), 1),
    "biplane11": (11, (1, 3, 4, 5, 9), 2),
    "pg2_3": (13, (0, 1, 3, 9), 1),
    "pg2_4": (21, (3, 6, 7, 12, 14), 1),
}


def _cyclic_incidence(v: int, diffs) -> np.ndarray:
    m = np.zeros((v, v), dtype=np.int64)
    for j in range(v):
        for d in diffs:
            m[(d + j) % v, j] = 1
    return m


def catalog_params(name: str) -> CodeParams:
    try:
        v, diffs, lam = BIBD_CATALOG[name]
    except KeyError:
        raise UnknownDesign(f"unknown design {name!r}; catalog has {sorted(BIBD_CATALOG)}") from None
    return CodeParams(n=v, k=v, l=len(diffs), r=len(diffs), lam=lam)


def build_catalog_bibd(name: str) -> tuple[EncodingMatrix, CodeParams]:
    """Symmetric BIBD from a cyclic difference set; column j is D + j mod v."""
    params = catalog_params(name)
    v, diffs, _ = BIBD_CATALOG[name]
    return EncodingMatrix(_cyclic_incidence(v, diffs)), params


def kronecker(a: EncodingMatrix, b: EncodingMatrix, cap: int = DEFAULT_MATRIX_CAP) -> EncodingMatrix:
    """Kronecker product; entry ((i1, i2), (j1, j2)) lives at (i1*k2 + i2, j1*n2 + j2)."""
    k, n = a.k * b.k, a.n * b.n
    if k * n > cap:
        raise SizeOverflow(f"Kronecker product would be {k} x {n} = {k * n} entries (cap {cap})")
    return EncodingMatrix(np.kron(a.bits.astype(np.int64), b.bits.astype(np.int64)))


def commutation_permutations(ka: int, na: int, kb: int, nb: int) -> tuple[np.ndarray, np.ndarray]:
    """Index maps with kron(A, B) == kron(B, A)[row_perm][:, col_perm]."""
    i1, i2 = np.divmod(np.arange(ka * kb), kb)
    j1, j2 = np.divmod(np.arange(na * nb), nb)
    return i2 * ka + i1, j2 * na + j1


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    k: int
    n: int
    column_weights: tuple[int, ...]
    row_weights: tuple[int, ...]
    intersections: dict[int, int]
    zero_columns: int
    total_ones: int
    is_gc: bool
    is_lambda_gc: bool
    params: CodeParams | None = None

    @property
    def lam(self) -> int | None:
        if len(self.intersections) == 1:
            return next(iter(self.intersections))
        return None

    def to_dict(self) -> dict[str, Any]:
        return {
            "k": self.k,
            "n": self.n,
            "column_weights": list(self.column_weights),
            "row_weights": list(self.row_weights),
            "intersections": {str(v): c for v, c in sorted(self.intersections.items())},
            "zero_columns": self.zero_columns,
            "total_ones": self.total_ones,
            "is_gc": self.is_gc,
            "is_lambda_gc": self.is_lambda_gc,
            "params": None if self.params is None else {
                "n": self.params.n, "k": self.params.k, "l": self.params.l,
                "r": self.params.r, "lambda": self.params.lam,
            },
        }


def validate(g: EncodingMatrix) -> ValidationReport:
    """Weight sets, pairwise column intersections, and GC / lambda-GC flags."""
    cw = g.column_weights
    rw = g.row_weights
    col_set = tuple(sorted(set(int(x) for x in cw)))
    row_set = tuple(sorted(set(int(x) for x in rw)))
    iu = np.triu_indices(g.n, k=1)
    inter = Counter(int(x) for x in g.gram[iu])
    is_gc = len(col_set) == 1 and len(row_set) == 1
    is_lambda = is_gc and len(inter) <= 1 and g.n >= 2
    params = None
    if is_gc:
        lam = next(iter(inter)) if is_lambda else None
        try:
            params = CodeParams(n=g.n, k=g.k, l=col_set[0], r=row_set[0], lam=lam)
        except InvalidParams:
            params = None
    return ValidationReport(
        k=g.k,
        n=g.n,
        column_weights=col_set,
        row_weights=row_set,
        intersections=dict(sorted(inter.items())),
        zero_columns=int((cw == 0).sum()),
        total_ones=int(cw.sum()),
        is_gc=is_gc,
        is_lambda_gc=is_lambda,
        params=params,
    )


def frc_structure(g: EncodingMatrix) -> tuple[CodeParams, np.ndarray, np.ndarray]:
    """Recognise an FRC up to row/column permutation.

    Returns ``(params, row_perm, col_perm)`` such that
    ``g.permuted(row_perm, col_perm) == build_frc(*params)``.
    """
    bits = g.bits
    _, cls, counts = np.unique(bits.T, axis=0, return_inverse=True, return_counts=True)
    cls = np.asarray(cls).ravel()
    supports = []
    for c in range(len(counts)):
        col = bits[:, int(np.flatnonzero(cls == c)[0])]
        supports.append(np.flatnonzero(col))
    sizes = {len(s) for s in supports}
    if len(set(counts.tolist())) != 1 or len(sizes) != 1 or 0 in sizes:
        raise NotAnFRC("columns do not split into equal classes of equal weight")
    covered = np.concatenate(supports)
    if len(covered) != g.k or len(np.unique(covered)) != g.k:
        raise NotAnFRC("column class supports are not a partition of the rows")
    order = sorted(range(len(supports)), key=lambda c: int(supports[c][0]))
    row_perm = np.concatenate([supports[c] for c in order])
    col_perm = np.concatenate([np.flatnonzero(cls == c) for c in order])
    l, r = sizes.pop(), int(counts[0])
    params = CodeParams(n=g.n, k=g.k, l=l, r=r)
    return params, row_perm, col_perm


# ---------------------------------------------------------------------------
# Descriptors
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FRC:
    n: int
    k: int
    l: int
    r: int

    @property
    def params(self) -> CodeParams:
        return CodeParams(self.n, self.k, self.l, self.r)


@dataclass(frozen=True)
class CatalogBIBD:
    name: str

    @property
    def params(self) -> CodeParams:
        return catalog_params(self.name)


@dataclass(frozen=True)
class ProbabilisticBIBD:
    n: int
    k: int
    l: int
    lam: int
    seed: int = 0


@dataclass(frozen=True)
class Kronecker:
    left: "CodeDescriptor"
    right: "CodeDescriptor"


CodeDescriptor = Union[FRC, CatalogBIBD, ProbabilisticBIBD, Kronecker]

_INT_FIELDS = {
    "frc": ("n", "k", "l", "r"),
    "pbibd": ("n", "k", "l", "lambda"),
}


def descriptor_from_dict(d: Any) -> CodeDescriptor:
    if isinstance(d, str):
        d = {"type": "bibd", "name": d}
    if not isinstance(d, dict) or "type" not in d:
        raise ConfigError("descriptor must be an object with a 'type' field")
    kind = d["type"]
    try:
        if kind == "frc":
            vals = _ints(d, _INT_FIELDS["frc"])
            return FRC(*vals)
        if kind == "bibd":
            name = d["name"]
            if not isinstance(name, str):
                raise ConfigError("bibd 'name' must be a string")
            return CatalogBIBD(name)
        if kind == "pbibd":
            n, k, l, lam = _ints(d, _INT_FIELDS["pbibd"])
            seed = d.get("seed", 0)
            if not isinstance(seed, int):
                raise ConfigError("pbibd 'seed' must be an integer")
            return ProbabilisticBIBD(n, k, l, lam, seed)
        if kind == "kron":
            return Kronecker(descriptor_from_dict(d["left"]), descriptor_from_dict(d["right"]))
    except KeyError as exc:
        raise ConfigError(f"descriptor of type {kind!r} is missing field {exc.args[0]!r}") from None
    raise ConfigError(f"unknown descriptor type {kind!r}; expected frc, bibd, pbibd or kron")


def _ints(d: dict, names) -> list[int]:
    out = []
    for name in names:
        v = d[name]
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"field {name!r} must be an integer, got {v!r}")
        out.append(v)
    return out


def descriptor_to_dict(desc: CodeDescriptor) -> dict[str, Any]:
    if isinstance(desc, FRC):
        return {"type": "frc", "n": desc.n, "k": desc.k, "l": desc.l, "r": desc.r}
    if isinstance(desc, CatalogBIBD):
        return {"type": "bibd", "name": desc.name}
    if isinstance(desc, ProbabilisticBIBD):
        return {"type": "pbibd", "n": desc.n, "k": desc.k, "l": desc.l, "lambda": desc.lam, "seed": desc.seed}
    if isinstance(desc, Kronecker):
        return {"type": "kron", "left": descriptor_to_dict(desc.left), "right": descriptor_to_dict(desc.right)}
    raise TypeError(f"not a code descriptor: {desc!r}")


def descriptor_from_json(text: str) -> CodeDescriptor:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed descriptor JSON: {exc}") from None
    return descriptor_from_dict(data)


def descriptor_to_json(desc: CodeDescriptor) -> str:
    return json.dumps(descriptor_to_dict(desc), sort_keys=True)


def descriptor_label(desc: CodeDescriptor) -> str:
    if isinstance(desc, FRC):
        return f"FRC({desc.n},{desc.k},{desc.l},{desc.r})"
    if isinstance(desc, CatalogBIBD):
        return desc.name
    if isinstance(desc, ProbabilisticBIBD):
        return f"PBIBD({desc.n},{desc.k},{desc.l},{desc.lam};seed={desc.seed})"
    return f"({descriptor_label(desc.left)} x {descriptor_label(desc.right)})"


def build(desc: CodeDescriptor, cap: int = DEFAULT_MATRIX_CAP) -> EncodingMatrix:
    """Materialise the encoding matrix a descriptor describes."""
    if isinstance(desc, FRC):
        return build_frc(desc.n, desc.k, desc.l, desc.r)
    if isinstance(desc, CatalogBIBD):
        return build_catalog_bibd(desc.name)[0]
    if isinstance(desc, ProbabilisticBIBD):
        from .probbibd import sample_code, solve_distribution

        dist = solve_distribution(desc.n, desc.k, desc.l, desc.lam)
        return sample_code(dist, desc.k, desc.seed)
    if isinstance(desc, Kronecker):
        return kronecker(build(desc.left, cap), build(desc.right, cap), cap)
    raise TypeError(f"not a code descriptor: {desc!r}")


def descriptor_params(desc: CodeDescriptor) -> CodeParams | None:
    """Nominal parameters for deterministic leaf descriptors (None otherwise)."""
    if isinstance(desc, (FRC, CatalogBIBD)):
        return desc.params
    return None
