"""subsense: local-stability analysis of global sensitivity conclusions.

Estimates active subspaces of scalar quantities of interest from gradient
samples, ranks parameters by activity scores, and quantifies how stable
global sensitivity conclusions are across local subregions of parameter
space via a subspace-distance metric — alongside classical Morris and
Sobol' analyses, reduced-dimension polynomial surrogates, and
subset-restricted Bayesian calibration experiments.
"""

from __future__ import annotations

__version__ = "0.1.0"

from ._kernels import backend_name
from .errors import (
    ConfigError,
    DegenerateParameterError,
    DegenerateSpectrumError,
    DimensionMismatchError,
    EigenSolverError,
    GradientEvaluationError,
    InvalidAicError,
    NonOrthonormalError,
    RegionIndexError,
    SelectionError,
    SubsenseError,
    UnderDeterminedError,
    UndefinedIndicesError,
)
from .models import MODELS, LvParams, LvState, QoiModel, get_model, lv_qoi, lv_rhs, lv_solve
from .sampling import ParameterSpace, RegionGrid, SamplingPlan, derive_seed, lhs, rng_from_seed

__all__ = [
    "__version__",
    "backend_name",
    "SubsenseError",
    "ConfigError",
    "DegenerateParameterError",
    "DegenerateSpectrumError",
    "DimensionMismatchError",
    "EigenSolverError",
    "GradientEvaluationError",
    "InvalidAicError",
    "NonOrthonormalError",
    "RegionIndexError",
    "SelectionError",
    "UnderDeterminedError",
    "UndefinedIndicesError",
    "QoiModel",
    "LvParams",
    "LvState",
    "MODELS",
    "get_model",
    "lv_rhs",
    "lv_solve",
    "lv_qoi",
    "ParameterSpace",
    "RegionGrid",
    "SamplingPlan",
    "derive_seed",
    "lhs",
    "rng_from_seed",
]
