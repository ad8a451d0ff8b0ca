"""Bundle adjustment for cryo-ET tilt-series alignment.

Two solvers share one projection model: Levenberg-Marquardt with
trust-ratio damping (:mod:`tiltba.lm`) and the optimal control algorithm
with fixed or bisection-adapted weight (:mod:`tiltba.oca`).
"""

from .calculus import gradient, hessian, jacobian
from .lm import LMConfig, lm_solve
from .model import CameraParams, Dataset, Observation2D, Point3, cost, l1_residual, project
from .oca import AdaptiveConfig, OCAConfig, oca_adaptive_solve, oca_solve
from .params import pack, unpack
from .synth import SynthConfig, generate
from .trace import IterationRecord, SolverReport, Termination

__all__ = [
    "AdaptiveConfig",
    "CameraParams",
    "Dataset",
    "IterationRecord",
    "LMConfig",
    "OCAConfig",
    "Observation2D",
    "Point3",
    "SolverReport",
    "SynthConfig",
    "Termination",
    "cost",
    "generate",
    "gradient",
    "hessian",
    "jacobian",
    "l1_residual",
    "lm_solve",
    "oca_adaptive_solve",
    "oca_solve",
    "pack",
    "project",
    "unpack",
]

__version__ = "0.1.0"
