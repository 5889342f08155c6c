"""Sparse plus low-rank differential network estimation.

Estimates ``Delta = Omega_X - Omega_Y``, the difference of two precision
matrices, when both groups share hidden variables. The main entry points
are the scikit-learn style estimators :class:`LatentDifferentialNetwork`
(nonconvex, factored low-rank part) and :class:`ConvexDifferentialNetwork`
(l1 plus nuclear norm, solved by ADMM).
"""

from .admm import AdmmParams, AdmmResult, admm_fit
from .estimators import ConvexDifferentialNetwork, LatentDifferentialNetwork
from .exceptions import (DiffNetError, DivergenceError, InvalidArgumentError,
                         InvalidModelError, SampleTooSmallError,
                         SingularCovarianceError, SolverStalledError)
from .loss import LossContext
from .matops import Factor
from .nonconvex import FitReport, HyperParams, estimate_rank, fit_nonconvex
from .synthdata import (CovariancePair, GroundTruthModel, make_model_pair,
                        sample)
from .tuning import Grid, cross_validate, evaluate

__version__ = "0.1.0"

__all__ = [
    "AdmmParams", "AdmmResult", "admm_fit",
    "ConvexDifferentialNetwork", "LatentDifferentialNetwork",
    "DiffNetError", "DivergenceError", "InvalidArgumentError",
    "InvalidModelError", "SampleTooSmallError", "SingularCovarianceError",
    "SolverStalledError",
    "LossContext", "Factor",
    "FitReport", "HyperParams", "estimate_rank", "fit_nonconvex",
    "CovariancePair", "GroundTruthModel", "make_model_pair", "sample",
    "Grid", "cross_validate", "evaluate",
]
