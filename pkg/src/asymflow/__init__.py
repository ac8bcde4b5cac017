"""Gradient flows on asymmetric metric spaces via minimizing movements."""
from .envelope import ResolventResult, SolverConfig, resolvent
from .errors import (AsymflowError, ConfigError, ConvergenceError, CoercivityError,
                     DegenerateInputError, DomainError, ParameterError, SchemeError,
                     UnsupportedOperationError)
from .metric_core import SpaceHandle, check_axioms, reverse_metric, symmetrized_distance
from .mms import DiscreteSolution, Partition, limit_trajectory, run_scheme
from .potentials import Potential, build_potential
from .spaces import EuclideanSpace, FunkBall, MinkowskiSpace, RandersSpace
from .trajectory import Trajectory

__version__ = "0.1.0"

__all__ = [
    "AsymflowError", "ConfigError", "ConvergenceError", "CoercivityError", "DegenerateInputError",
    "DiscreteSolution", "DomainError", "EuclideanSpace", "FunkBall", "MinkowskiSpace",
    "ParameterError", "Partition", "Potential", "RandersSpace", "ResolventResult", "SchemeError",
    "SolverConfig", "SpaceHandle", "Trajectory", "UnsupportedOperationError", "build_potential",
    "check_axioms", "limit_trajectory", "resolvent", "reverse_metric", "run_scheme",
    "symmetrized_distance",
]
