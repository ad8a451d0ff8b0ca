"""Objective wrappers consumed by the solvers.

A solver needs ``cost``, ``gradient`` and ``hessian`` (OCA) or ``residuals``
and ``linearize`` (L-M); ``metric`` feeds the L1 column of the trace. Any
object with these methods works, which keeps the solvers testable on toy
problems.
"""

from __future__ import annotations

import numpy as np

from . import calculus, model
from .errors import InvalidParametersError
from .model import Dataset
from .params import check_params


class BAProblem:
    def __init__(self, dataset: Dataset, l1_mode: str = "visible"):
        self.dataset = dataset
        self.l1_mode = l1_mode

    def check(self, x) -> np.ndarray:
        return check_params(x, self.dataset.m, self.dataset.n)

    def residuals(self, x) -> np.ndarray:
        return model.residual_vector(self.dataset, x)

    def linearize(self, x):
        return calculus.linearize(self.dataset, x)

    def cost(self, x) -> float:
        return model.cost(self.dataset, x)

    def gradient(self, x) -> np.ndarray:
        return calculus.gradient(self.dataset, x)

    def hessian(self, x, kind: str = "exact") -> np.ndarray:
        return calculus.hessian(self.dataset, x, kind)

    def metric(self, x) -> float:
        return model.l1_residual(self.dataset, x, self.l1_mode)


def as_problem(obj, l1_mode: str = "visible"):
    return BAProblem(obj, l1_mode) if isinstance(obj, Dataset) else obj


def safe_cost(problem, x) -> float:
    """Cost at ``x``, or ``inf`` when the point is invalid or overflows."""
    try:
        value = problem.cost(x)
    except (InvalidParametersError, FloatingPointError):
        return np.inf
    return value if np.isfinite(value) else np.inf
