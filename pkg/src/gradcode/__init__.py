"""Gradient codes: construction, worst-case error search, bounds and simulation."""
from .codes import (
    BIBD_CATALOG,
    CatalogBIBD,
    CodeParams,
    EncodingMatrix,
    FRC,
    Kronecker,
    ProbabilisticBIBD,
    build,
    build_catalog_bibd,
    build_frc,
    kronecker,
    validate,
)
from .decoding import StragglerScenario, optimal_decoding, normalized_error
from .errors import GradCodeError
from .bounds import bound_for
from .probbibd import sample_code, solve_distribution
from .sim import run_experiment
from .worstcase import error_curve, exhaustive_worst_case, sampled_worst_case, worst_case

__version__ = "0.1.0"

__all__ = [
    "BIBD_CATALOG", "CatalogBIBD", "CodeParams", "EncodingMatrix", "FRC", "Kronecker",
    "ProbabilisticBIBD", "build", "build_catalog_bibd", "build_frc", "kronecker", "validate",
    "StragglerScenario", "optimal_decoding", "normalized_error", "GradCodeError",
    "bound_for", "sample_code", "solve_distribution", "run_experiment",
    "error_curve", "exhaustive_worst_case", "sampled_worst_case", "worst_case", "__version__",
]
