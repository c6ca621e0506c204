"""Tolerances and size caps used across the package.

All numeric knobs live here so tests and the CLI can reason about a single
record.  The subset-enumeration cap may be overridden with the
``GRADCODE_CAP`` environment variable.
"""
from __future__ import annotations

import os
from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    # ||G^T G v - G^T 1|| must not exceed this times k
    normal_eq_residual: float = 1e-8
    # squared errors in [-clamp * k, 0) are reported as 0; below that is a failure
    error_clamp: float = 1e-9
    # relative eigenvalue cutoff when pseudo-inverting a Gram matrix
    rank_rel: float = 1e-9
    # Cholesky pivots below this (relative) fall back to the eigen route
    cholesky_pivot_rel: float = 1e-8
    # errors closer than this are ties for witness selection
    tie: float = 1e-10
    # the two forms of the FRC product error must agree this closely
    formula_agreement: float = 1e-12
    # A p = b residual accepted by verify_system
    system_residual: float = 1e-10
    # alpha + (2^n - 2) beta + gamma = 1 check
    distribution_sum: float = 1e-12


TOL = Tolerances()

DEFAULT_SUBSET_CAP = 10**6
DEFAULT_MATRIX_CAP = 2**24
DEFAULT_RM_MAX_N = 20
EXPANDED_VERIFY_MAX_N = 14


def subset_cap(override: int | None = None) -> int:
    """Resolve the subset-enumeration cap: explicit value, then env var, then default."""
    if override is not None:
        return int(override)
    env = os.environ.get("GRADCODE_CAP")
    if env:
        return int(env)
    return DEFAULT_SUBSET_CAP
