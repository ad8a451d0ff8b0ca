"""Per-iteration records and solver reports."""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np


class Termination(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITER = "max_iter"
    NUMERICAL_FAILURE = "numerical_failure"


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    cost: float
    l1: float
    step_norm: float
    damping_or_weight: float
    elapsed_ms: float


@dataclass
class SolverReport:
    params: np.ndarray
    termination: Termination
    trace: list[IterationRecord] = field(default_factory=list)
    message: str = ""

    @property
    def iterations(self) -> int:
        return len(self.trace)

    @property
    def converged(self) -> bool:
        return self.termination is Termination.CONVERGED

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.trace])


class Stopwatch:
    """Monotonic elapsed-time source in milliseconds."""

    def __init__(self):
        self._t0 = time.perf_counter()

    def ms(self) -> float:
        return (time.perf_counter() - self._t0) * 1e3
