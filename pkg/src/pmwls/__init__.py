"""Penalized modified weighted least squares for nonlinear regression with
dependent, non-zero-mean or multiplicative errors."""
from .errors import NumericalError, PMWLSError, ValidationError
from .model import (Dataset, ModelSpec, Scale, get_model, linear_model,
                    log_logistic_model, log_model, logistic_model)
from .objective import ObjectiveContext, Penalty, q_n, s_n
from .solver import FitResult, SolverConfig, fit
from .tuning import TuningResult, bic, select_tau
from .weights import IDENTITY, WeightSpec, build_weight

__version__ = "0.1.0"

__all__ = [
    "Dataset", "FitResult", "IDENTITY", "ModelSpec", "NumericalError",
    "ObjectiveContext", "PMWLSError", "Penalty", "Scale", "SolverConfig",
    "TuningResult", "ValidationError", "WeightSpec", "bic", "build_weight",
    "fit", "get_model", "linear_model", "log_logistic_model", "log_model",
    "logistic_model", "q_n", "s_n", "select_tau",
]
