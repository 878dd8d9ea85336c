"""Norms, rate fits and epsilon-sweep experiments."""
from .norms import (
    BoundaryFunction,
    NormError,
    NormRequest,
    UndefinedRatioError,
    fit_rate,
    holder_seminorm,
    nontangential_max,
    norm,
    rellich_ratio,
    trace,
)

__all__ = [
    "BoundaryFunction", "NormError", "NormRequest", "UndefinedRatioError", "fit_rate",
    "holder_seminorm", "nontangential_max", "norm", "rellich_ratio", "trace",
]
