"""REML estimation for random coefficient models.

Fits block linear mixed models y_k = X_k alpha + Z_k beta_k + e_k with
beta_k ~ N(0, D(theta)) by restricted maximum likelihood, reducing each
Fisher-scoring step to per-individual sufficient statistics so the cost
per step is O(N p^3) instead of O(sum_k n_k^3).
"""

from .errors import (
    ContainmentViolation,
    DegenerateIndividual,
    DimensionMismatch,
    InvalidConfig,
    NonPositiveDefiniteSigma,
    NonPositiveDeterminant,
    NotSymmetric,
    RankDeficientDesign,
    RcremlError,
    SingularInformation,
)
from .estimator import RandomCoefficientRegressor
from .likelihood import reml_full, reml_reduced
from .model import (
    Dataset,
    DispersionSpec,
    Individual,
    containment_factor,
    load_dataset,
    validate_dataset,
)
from .scoring import FitConfig, FitResult, fit, psd_project
from .simgen import SimConfig, generate
from .stats import compute_stats, projector, pseudo_inverse, sigma2_extended

__version__ = "0.1.0"

__all__ = [
    "ContainmentViolation",
    "Dataset",
    "DegenerateIndividual",
    "DimensionMismatch",
    "DispersionSpec",
    "FitConfig",
    "FitResult",
    "Individual",
    "InvalidConfig",
    "NonPositiveDefiniteSigma",
    "NonPositiveDeterminant",
    "NotSymmetric",
    "RandomCoefficientRegressor",
    "RankDeficientDesign",
    "RcremlError",
    "SimConfig",
    "SingularInformation",
    "compute_stats",
    "containment_factor",
    "fit",
    "generate",
    "load_dataset",
    "projector",
    "pseudo_inverse",
    "psd_project",
    "reml_full",
    "reml_reduced",
    "sigma2_extended",
    "validate_dataset",
]
