"""Closed-form worst-case errors, upper bounds and feasibility predicates.

Formulas are evaluated in exact rational arithmetic and returned as floats;
the ``*_exact`` variants return the :class:`fractions.Fraction` itself.  The
straggler count ``s`` may be real only for the FRC error, whose floor form
extends naturally to the reals and is used that way inside the Kronecker
product bounds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Any

from .codes import CatalogBIBD, CodeDescriptor, CodeParams, FRC, Kronecker, ProbabilisticBIBD
from .errors import InternalInconsistency, InvalidParams


@dataclass(frozen=True)
class BoundRecord:
    name: str
    s: float
    value: float
    inputs: dict[str, Any] = field(default_factory=dict)
    clamped: bool = False


def _frac(s) -> Fraction:
    if isinstance(s, Fraction):
        return s
    if isinstance(s, bool) or not isinstance(s, Real):
        raise InvalidParams(f"straggler count must be a real number, got {s!r}")
    if isinstance(s, float) and not math.isfinite(s):
        raise InvalidParams(f"straggler count must be finite, got {s!r}")
    return Fraction(s)


def _int_s(s) -> int:
    if isinstance(s, bool) or int(s) != s:
        raise InvalidParams(f"straggler count must be an integer here, got {s!r}")
    return int(s)


def frc_error_exact(l: int, k: int, r: int, s) -> Fraction:
    if min(l, k, r) <= 0:
        raise InvalidParams(f"FRC error needs positive l, k, r; got l={l} k={k} r={r}")
    s = _frac(s)
    if s < 0:
        raise InvalidParams(f"negative straggler count {s}")
    return Fraction(l, k) * math.floor(s / r)


def frc_error(l: int, k: int, r: int, s) -> float:
    """(l/k) * floor(s/r); s may be any real in [0, n]."""
    return float(frc_error_exact(l, k, r, s))


def bibd_error_exact(n: int, k: int, l: int, lam: int, s) -> Fraction:
    s = _int_s(s)
    if l <= 0 or k <= 0 or lam < 0:
        raise InvalidParams(f"BIBD error needs l, k > 0 and lambda >= 0; got l={l} k={k} lambda={lam}")
    if not 0 <= s <= n:
        raise InvalidParams(f"straggler count {s} outside [0, {n}]")
    if s == n:
        return Fraction(1)
    return 1 - Fraction(l * l * (n - s), k * l + k * lam * (n - s - 1))


def bibd_error(n: int, k: int, l: int, lam: int, s) -> float:
    """1 - l^2 (n-s) / (k l + k lambda (n-s-1)); equals 1 at s = n."""
    return float(bibd_error_exact(n, k, l, lam, s))


def frc_product_error_exact(f1: CodeParams, f2: CodeParams, s) -> Fraction:
    s = _frac(s)
    if not 0 <= s <= f1.n * f2.n:
        raise InvalidParams(f"straggler count {s} outside [0, {f1.n * f2.n}]")
    first = Fraction(f1.l, f1.k) * frc_error_exact(f2.l, f2.k, f2.r, s / f1.r)
    second = Fraction(f2.l, f2.k) * frc_error_exact(f1.l, f1.k, f1.r, s / f2.r)
    if first != second:
        raise InternalInconsistency(f"FRC product forms disagree: {first} vs {second}")
    return first


def frc_product_error(f1: CodeParams, f2: CodeParams, s) -> float:
    """Exact worst-case error of the product of two FRCs, both symmetric forms checked."""
    return float(frc_product_error_exact(f1, f2, s))


def frc_bibd_offset(f: CodeParams, b: CodeParams, s: int) -> int:
    """Per-sub-block straggler count left after filling whole product blocks."""
    block = f.r * b.n
    return (s - (s // block) * block) // f.r


def frc_bibd_raw(f: CodeParams, b: CodeParams, s) -> Fraction:
    s = _int_s(s)
    if not 0 <= s <= f.n * b.n:
        raise InvalidParams(f"straggler count {s} outside [0, {f.n * b.n}]")
    if b.lam is None:
        raise InvalidParams("BIBD factor needs lambda")
    off = frc_bibd_offset(f, b, s)
    return frc_error_exact(f.l, f.k, f.r, Fraction(s, b.n)) + Fraction(f.l, f.k) * bibd_error_exact(
        b.n, b.k, b.l, b.lam, off
    )


def frc_bibd_bound(f: CodeParams, b: CodeParams, s) -> float:
    """Upper bound on the error of FRC x BIBD (and BIBD x FRC), clamped to [0, 1]."""
    return float(min(max(frc_bibd_raw(f, b, s), Fraction(0)), Fraction(1)))


def kron_bibd_d(b1: CodeParams, b2: CodeParams) -> int:
    if b1.lam is None or b2.lam is None:
        raise InvalidParams("both factors need lambda")
    l1, l2, m1, m2 = b1.l, b2.l, b1.lam, b2.lam
    return (l1 - m1) * (l2 - m2) + b2.n * (l1 * m2 - m1 * m2) + b1.n * (m1 * l2 - m1 * m2)


def bibd_product_raw(b1: CodeParams, b2: CodeParams, s) -> Fraction:
    s = _int_s(s)
    big_n = b1.n * b2.n
    if not 0 <= s <= big_n:
        raise InvalidParams(f"straggler count {s} outside [0, {big_n}]")
    if s == big_n:
        return Fraction(1)
    d = kron_bibd_d(b1, b2)
    alive = big_n - s
    num = (b1.l * b2.l) ** 2 * alive
    den = b1.k * b2.k * (d + b1.lam * b2.lam * alive)
    return 1 - Fraction(num, den)


def bibd_product_bound(b1: CodeParams, b2: CodeParams, s) -> float:
    """Upper bound on the error of a product of two lambda-uniform codes."""
    return float(min(max(bibd_product_raw(b1, b2, s), Fraction(0)), Fraction(1)))


def exact_recovery_threshold(n: int, k: int, s: int) -> int:
    """Smallest load l with l >= k(s+1)/n."""
    if not 0 <= s < n:
        raise InvalidParams(f"need 0 <= s < n, got s={s} n={n}")
    return -(-k * (s + 1) // n)


def _params_snapshot(**named: CodeParams) -> dict[str, Any]:
    return {key: {"n": p.n, "k": p.k, "l": p.l, "r": p.r, "lambda": p.lam} for key, p in named.items()}


def _clamped(name: str, s, raw: Fraction, inputs) -> BoundRecord:
    value = min(max(raw, Fraction(0)), Fraction(1))
    return BoundRecord(name=name, s=float(s), value=float(value), inputs=inputs, clamped=value != raw)


def bound_for(desc: CodeDescriptor, s) -> BoundRecord | None:
    """The closed form (or bound) that applies to a descriptor at s stragglers."""
    if isinstance(desc, FRC):
        p = desc.params
        return BoundRecord("frc_exact", float(s), frc_error(p.l, p.k, p.r, s), _params_snapshot(frc=p))
    if isinstance(desc, CatalogBIBD):
        p = desc.params
        return BoundRecord("bibd_exact", float(s), bibd_error(p.n, p.k, p.l, p.lam, s), _params_snapshot(bibd=p))
    if isinstance(desc, ProbabilisticBIBD):
        value = bibd_error(desc.n, desc.k, desc.l, desc.lam, s)
        inputs = {"n": desc.n, "k": desc.k, "l": desc.l, "lambda": desc.lam}
        return BoundRecord("pbibd_expected_bound", float(s), value, inputs)
    if isinstance(desc, Kronecker):
        left, right = desc.left, desc.right
        if isinstance(left, FRC) and isinstance(right, FRC):
            f1, f2 = left.params, right.params
            return BoundRecord("frc_product_exact", float(s), frc_product_error(f1, f2, s), _params_snapshot(f1=f1, f2=f2))
        if isinstance(left, FRC) and isinstance(right, CatalogBIBD):
            f, b = left.params, right.params
            return _clamped("frc_bibd_bound", s, frc_bibd_raw(f, b, s), _params_snapshot(f=f, b=b))
        if isinstance(left, CatalogBIBD) and isinstance(right, FRC):
            f, b = right.params, left.params
            return _clamped("frc_bibd_bound", s, frc_bibd_raw(f, b, s), _params_snapshot(f=f, b=b))
        if isinstance(left, CatalogBIBD) and isinstance(right, CatalogBIBD):
            b1, b2 = left.params, right.params
            return _clamped("bibd_bibd_bound", s, bibd_product_raw(b1, b2, s), _params_snapshot(b1=b1, b2=b2))
    return None
