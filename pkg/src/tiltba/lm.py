"""Levenberg-Marquardt with trust-ratio damping control.

The main loop takes every step unconditionally; the damping ``mu`` is then
rescaled by 10, 1 or 0.1 depending on how well the Gauss-Newton quadratic
predicted the actual cost change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import FactorizationError, InvalidParametersError
from .problem import as_problem, safe_cost
from .trace import IterationRecord, SolverReport, Stopwatch, Termination


@dataclass(frozen=True)
class LMConfig:
    mu0: float = 0.1
    epsilon: float = 1e-6
    max_iter: int = 500
    ratio_low: float = 0.25
    ratio_high: float = 0.75
    factor_up: float = 10.0
    factor_down: float = 0.1
    # off: every step is taken, whatever the trust ratio
    reject_increase: bool = False

    def __post_init__(self):
        if not self.mu0 > 0:
            raise ValueError("mu0 must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")
        if not 0 < self.ratio_low < self.ratio_high < 1:
            raise ValueError("need 0 < ratio_low < ratio_high < 1")


def lm_step(J: np.ndarray, phi: np.ndarray, mu: float) -> np.ndarray:
    """Solve ``(J^T J + mu I) d = -J^T phi`` by Cholesky."""
    if not mu > 0:
        raise ValueError("damping mu must be positive")
    J = np.atleast_2d(np.asarray(J, dtype=float))
    A = J.T @ J
    A[np.diag_indices_from(A)] += mu
    try:
        factor = scipy.linalg.cho_factor(A, lower=True)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(f"J^T J + mu I is not positive definite (mu={mu:g})") from exc
    return scipy.linalg.cho_solve(factor, -(J.T @ phi))


def predicted_change(J: np.ndarray, phi: np.ndarray, d: np.ndarray) -> float:
    """``P(d) - Phi(x)`` for the Gauss-Newton quadratic model."""
    Jd = J @ d
    return float((J.T @ phi) @ d + 0.5 * (Jd @ Jd))


def trust_ratio(cost_old: float, cost_new: float, J, phi, d) -> float:
    """Actual over predicted cost change; 1 when the prediction is zero."""
    J = np.atleast_2d(np.asarray(J, dtype=float))
    denom = predicted_change(J, np.asarray(phi, dtype=float), np.asarray(d, dtype=float))
    if abs(denom) < 1e-300:
        return 1.0
    return (cost_new - cost_old) / denom


def mu_update(mu: float, xi: float, config: LMConfig = LMConfig()) -> float:
    if xi < config.ratio_low:
        return mu * config.factor_up
    if xi > config.ratio_high:
        return mu * config.factor_down
    return mu


def lm_solve(dataset, x0, config: LMConfig = LMConfig(), l1_mode: str = "visible") -> SolverReport:
    """Run Levenberg-Marquardt from ``x0``.

    ``dataset`` is a :class:`~tiltba.model.Dataset` or any object exposing
    ``linearize(x) -> (phi, J)`` and ``cost(x)``.
    """
    problem = as_problem(dataset, l1_mode)
    check = getattr(problem, "check", None)
    x = check(x0) if check else np.array(x0, dtype=float)
    x = np.array(x, dtype=float)
    metric = getattr(problem, "metric", None)

    mu = config.mu0
    trace: list[IterationRecord] = []
    clock = Stopwatch()
    for k in range(1, config.max_iter + 1):
        try:
            phi, J = problem.linearize(x)
            d = lm_step(J, phi, mu)
        except (FactorizationError, InvalidParametersError) as exc:
            return SolverReport(x, Termination.NUMERICAL_FAILURE, trace, str(exc))
        cost_old = 0.5 * float(phi @ phi)
        x_new = x + d
        cost_new = safe_cost(problem, x_new)
        if not math.isfinite(cost_new):
            return SolverReport(
                x, Termination.NUMERICAL_FAILURE, trace, f"non-finite cost at iteration {k}"
            )
        step_norm = float(np.linalg.norm(d))
        xi = trust_ratio(cost_old, cost_new, J, phi, d)
        accept = not (config.reject_increase and xi <= 0)
        if accept:
            x = x_new
        trace.append(
            IterationRecord(
                iter=k,
                cost=cost_new if accept else cost_old,
                l1=metric(x) if metric else math.nan,
                step_norm=step_norm,
                damping_or_weight=mu,
                elapsed_ms=clock.ms(),
            )
        )
        if step_norm < config.epsilon:
            return SolverReport(x, Termination.CONVERGED, trace)
        mu = mu_update(mu, xi, config)
    return SolverReport(x, Termination.MAX_ITER, trace)
