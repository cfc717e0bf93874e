"""quadlift: learn lifted coordinates in which nonlinear dynamics become
(optionally globally stable) quadratic systems."""

from .estimators import (
    QuadEmbeds,
    LinearEmbeds,
    QuadOpInf,
    LinProjQOpInf,
    QuadProjQOpInf,
    make_estimator,
    METHODS,
)
from .qdyn import QuadraticModel, StableParams, realize_stable
from .odeint import IntegratorConfig, IntegrationFailure, integrate
from .systems import TrajectoryDataset, generate_split
from .evaluation import EvalReport, compare_methods, rollout

__version__ = "0.1.0"

__all__ = [
    "QuadEmbeds", "LinearEmbeds", "QuadOpInf", "LinProjQOpInf",
    "QuadProjQOpInf", "make_estimator", "METHODS",
    "QuadraticModel", "StableParams", "realize_stable",
    "IntegratorConfig", "IntegrationFailure", "integrate",
    "TrajectoryDataset", "generate_split",
    "EvalReport", "compare_methods", "rollout",
    "__version__",
]
