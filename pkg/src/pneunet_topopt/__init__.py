"""Robust topology optimization of pressure-actuated soft-robot members.

Pipeline: raw design -> density filter -> eroded/intermediate/dilated
projections -> Darcy pressure with drainage -> consistent nodal loads ->
SIMP plane-stress elasticity -> multi-criteria objective, optimized in
min-max form by the Method of Moving Asymptotes.
"""

from ._validation import NumericalError, ValidationError
from .elasticity import MaterialLaw
from .estimator import PneuNetOptimizer
from .fields import FilterOperator, RobustProjector, RobustTriplet, make_triplet
from .flow import FlowParams, flow_params
from .mma import MMA
from .model import ProblemModel, RunConfig, build_model
from .optimizer import OptimizationResult, check_gradients, run

__all__ = [
    "FilterOperator", "FlowParams", "MMA", "MaterialLaw", "NumericalError", "OptimizationResult",
    "PneuNetOptimizer", "ProblemModel", "RobustProjector", "RobustTriplet", "RunConfig", "ValidationError",
    "build_model", "check_gradients", "flow_params", "make_triplet", "run",
]
__version__ = "0.1.0"
