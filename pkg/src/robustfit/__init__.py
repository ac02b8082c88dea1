"""Robust fitting of sigmoid growth curves with the Tsallis score."""
from .errors import (
    ConfigError,
    ConvergenceError,
    DataFormatError,
    DegenerateDataError,
    DomainError,
    RobustFitError,
    SingularMatrixError,
)
from .estimation import FitOptions, FitResult, RegressionModel, fit, fit_mle, fit_tsallis
from .inference import sandwich, score_ratio_test, adjusted_score_ratio, wald_test
from .models import FAMILIES, CurveParams, get_family
from .scoring import Theta, TsallisConfig

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "ConvergenceError",
    "DataFormatError",
    "DegenerateDataError",
    "DomainError",
    "RobustFitError",
    "SingularMatrixError",
    "FitOptions",
    "FitResult",
    "RegressionModel",
    "fit",
    "fit_mle",
    "fit_tsallis",
    "sandwich",
    "score_ratio_test",
    "adjusted_score_ratio",
    "wald_test",
    "FAMILIES",
    "CurveParams",
    "get_family",
    "Theta",
    "TsallisConfig",
    "__version__",
]
