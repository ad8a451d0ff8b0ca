"""Optimal control algorithm (OCA) with fixed or bisection-adapted weight.

At outer iteration ``k`` the step is built by the forward recurrence::

    g_0 = (R + H)^-1 grad
    g_l = (R + H)^-1 (grad + R g_{l-1}),   l = 1..k

with ``R = lam * I`` and ``grad``, ``H`` evaluated once at ``x_k``. The
update is ``x_{k+1} = x_k - g_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from .errors import FactorizationError, InvalidParametersError
from .problem import as_problem, safe_cost
from .trace import IterationRecord, SolverReport, Stopwatch, Termination


@dataclass(frozen=True)
class OCAConfig:
    lambda0: float = 1.0
    epsilon: float = 1e-6
    max_iter: int = 500
    inner_cap: Optional[int] = None
    hessian_kind: str = "exact"

    def __post_init__(self):
        if not self.lambda0 > 0:
            raise ValueError("lambda0 must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")
        if self.inner_cap is not None and self.inner_cap < 1:
            raise ValueError("inner_cap must be a positive integer or None")


@dataclass(frozen=True)
class AdaptiveConfig(OCAConfig):
    lambda1: float = 1.0
    bisect_threshold: float = 0.1
    # keep the best probe instead of chasing the last one
    strict: bool = False

    def __post_init__(self):
        super().__post_init__()
        if not self.lambda0 >= self.lambda1 > 0:
            raise ValueError("need lambda0 >= lambda1 > 0")
        if not self.bisect_threshold > 0:
            raise ValueError("bisect_threshold must be positive")


def direction_recurrence(
    grad: np.ndarray, H: np.ndarray, lam: float, k: int, inner_cap: Optional[int] = None
) -> np.ndarray:
    """Run the inner recurrence for ``l = 0..min(k, inner_cap)``; return the last direction."""
    if not lam > 0:
        raise ValueError("lambda must be positive")
    A = np.array(H, dtype=float, copy=True)
    A[np.diag_indices_from(A)] += lam
    try:
        factor = scipy.linalg.cho_factor(A, lower=True)
    except np.linalg.LinAlgError as exc:
        raise FactorizationError(
            f"lambda*I + H is not positive definite for lambda={lam:g}; increase lambda"
        ) from exc
    steps = k if inner_cap is None else min(k, inner_cap)
    g = scipy.linalg.cho_solve(factor, grad)
    for _ in range(steps):
        g = scipy.linalg.cho_solve(factor, grad + lam * g)
    return g


def oca_directions(
    dataset,
    x_k,
    k: int,
    lam: float,
    inner_cap: Optional[int] = None,
    hessian_kind: str = "exact",
) -> np.ndarray:
    """Step ``g_k`` at ``x_k`` for weight ``lam`` (gradient and Hessian evaluated here)."""
    problem = as_problem(dataset)
    x = np.asarray(x_k, dtype=float)
    return direction_recurrence(
        problem.gradient(x), problem.hessian(x, hessian_kind), lam, k, inner_cap
    )


class _Solver:
    """Shared loop bookkeeping for the fixed and adaptive variants."""

    def __init__(self, dataset, x0, config: OCAConfig, l1_mode: str):
        self.problem = as_problem(dataset, l1_mode)
        check = getattr(self.problem, "check", None)
        self.x = np.array(check(x0) if check else x0, dtype=float)
        self.config = config
        self.metric = getattr(self.problem, "metric", None)
        self.trace: list[IterationRecord] = []
        self.clock = Stopwatch()

    def linear_model(self):
        return self.problem.gradient(self.x), self.problem.hessian(self.x, self.config.hessian_kind)

    def advance(self, k: int, g: np.ndarray, lam: float) -> Optional[SolverReport]:
        """Apply ``x <- x - g``; return a report if the run has ended."""
        x_new = self.x - g
        cost_new = safe_cost(self.problem, x_new)
        if not math.isfinite(cost_new):
            return self.finish(Termination.NUMERICAL_FAILURE, f"non-finite cost at iteration {k + 1}")
        step_norm = float(np.linalg.norm(g))
        self.x = x_new
        self.trace.append(
            IterationRecord(
                iter=k + 1,
                cost=cost_new,
                l1=self.metric(x_new) if self.metric else math.nan,
                step_norm=step_norm,
                damping_or_weight=lam,
                elapsed_ms=self.clock.ms(),
            )
        )
        if step_norm < self.config.epsilon:
            return self.finish(Termination.CONVERGED)
        return None

    def finish(self, termination: Termination, message: str = "") -> SolverReport:
        return SolverReport(self.x, termination, self.trace, message)


def oca_solve(dataset, x0, config: OCAConfig = OCAConfig(), l1_mode: str = "visible") -> SolverReport:
    """OCA with a constant weight ``R = lambda0 * I``."""
    run = _Solver(dataset, x0, config, l1_mode)
    for k in range(config.max_iter):
        try:
            grad, H = run.linear_model()
            g = direction_recurrence(grad, H, config.lambda0, k, config.inner_cap)
        except (FactorizationError, InvalidParametersError) as exc:
            return run.finish(Termination.NUMERICAL_FAILURE, str(exc))
        report = run.advance(k, g, config.lambda0)
        if report is not None:
            return report
    return run.finish(Termination.MAX_ITER)


def _bisect(problem, x, grad, H, k, lam_prev, cost1, threshold, inner_cap, strict,
            fallback=None, probes=None):
    """Bisection on the weight over ``(0, lam_prev]``; see :func:`bisect_lambda`."""

    def probe(c):
        try:
            g = direction_recurrence(grad, H, c, k, inner_cap)
        except FactorizationError:
            g, value = None, math.inf
        else:
            value = safe_cost(problem, x - g)
        if probes is not None:
            probes.append((c, value))
        return g, value

    a, b = 0.0, lam_prev
    if not (b - a) > threshold:
        c = lam_prev / 2
        g, _ = probe(c)
        if g is None:
            return fallback
        return c, g

    best = fallback
    best_cost = cost1 if fallback is not None else math.inf
    c, g = None, None
    while (b - a) > threshold:
        c = (a + b) / 2
        g, cost2 = probe(c)
        if g is not None and cost2 < best_cost:
            best, best_cost = (c, g), cost2
        if strict:
            if cost2 < cost1:
                b, cost1 = c, cost2
            else:
                a = c
            continue
        if cost1 > cost2:
            b = c
            cost1 = cost2
        elif cost1 < cost2:
            a = c
            cost1 = cost2
        else:
            break
    if strict or g is None:
        return best
    return c, g


def bisect_lambda(
    dataset,
    x_k,
    k: int,
    lambda_prev: float,
    cost1: float,
    threshold: float = 0.1,
    inner_cap: Optional[int] = None,
    hessian_kind: str = "exact",
    strict: bool = False,
    probes: Optional[list] = None,
):
    """Search a new weight in ``(0, lambda_prev]`` by bisection on the trial cost.

    ``cost1`` is the cost of the trial step taken with ``lambda_prev``. Each
    probe ``c`` recomputes the full direction with ``R = c I`` and compares
    ``f(x_k - g)`` against the running ``cost1``: a lower cost moves the upper
    bound to ``c``, a higher one moves the lower bound, and a tie stops the
    search. A probe whose factorization fails counts as infinite cost. When
    the interval is already narrower than ``threshold`` a single probe at
    ``lambda_prev / 2`` is returned.

    Returns ``(lambda_new, g_new)``. If the last probe could not be factored
    the best successful probe is returned instead; ``None`` when none was.
    ``probes``, if given, collects ``(c, cost)`` pairs in visiting order.
    """
    problem = as_problem(dataset)
    x = np.asarray(x_k, dtype=float)
    grad, H = problem.gradient(x), problem.hessian(x, hessian_kind)
    return _bisect(problem, x, grad, H, k, lambda_prev, cost1, threshold, inner_cap, strict,
                   probes=probes)


def oca_adaptive_solve(
    dataset, x0, config: AdaptiveConfig = AdaptiveConfig(), l1_mode: str = "visible"
) -> SolverReport:
    """OCA whose weight is fixed for the first two iterations, then bisected downward."""
    run = _Solver(dataset, x0, config, l1_mode)
    lam_prev = None
    for k in range(config.max_iter):
        try:
            grad, H = run.linear_model()
            if k <= 1:
                lam = config.lambda0 if k == 0 else config.lambda1
                g = direction_recurrence(grad, H, lam, k, config.inner_cap)
            else:
                g_trial = direction_recurrence(grad, H, lam_prev, k, config.inner_cap)
                cost1 = safe_cost(run.problem, run.x - g_trial)
                lam, g = _bisect(
                    run.problem, run.x, grad, H, k, lam_prev, cost1,
                    config.bisect_threshold, config.inner_cap, config.strict,
                    fallback=(lam_prev, g_trial),
                )
        except (FactorizationError, InvalidParametersError) as exc:
            return run.finish(Termination.NUMERICAL_FAILURE, str(exc))
        report = run.advance(k, g, lam)
        if report is not None:
            return report
        lam_prev = lam
    return run.finish(Termination.MAX_ITER)
