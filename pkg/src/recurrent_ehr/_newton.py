"""Damped Newton iterations shared by the estimating-equation solvers."""

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import ConvergenceError, SingularInformationError


@dataclass(frozen=True)
class SolverConfig:
    """Stopping rules for the Newton solvers.

    ``tolerance`` applies to the sup-norm of the score.
    """

    tolerance: float = 1e-8
    max_iterations: int = 50
    max_step_halvings: int = 20
    initial_beta: Optional[Sequence[float]] = None

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("solver tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.max_step_halvings < 0:
            raise ValueError("max_step_halvings must be nonnegative")


@dataclass
class NewtonResult:
    x: np.ndarray
    score: np.ndarray
    score_norm: float
    iterations: int
    merit: float
    halvings: list = field(default_factory=list)


def _solve(jac, rhs):
    if jac.size == 0:
        return np.zeros(0)
    cond = np.linalg.cond(jac)
    if not np.isfinite(cond) or cond > 1e12:
        raise SingularInformationError(
            f"singular Jacobian (condition number {cond:.3g})")
    return np.linalg.solve(jac, rhs)


def newton(evaluate: Callable, x0, config: SolverConfig,
           fallback_jacobian: Optional[Callable] = None) -> NewtonResult:
    """Solve ``score(x) = 0`` by Newton's method with step halving.

    ``evaluate(x)`` returns ``(score, jacobian, merit)`` where larger merit is
    better (a log-likelihood, or minus the squared score norm for a plain
    estimating equation). A trial step is halved until the merit does not
    decrease. ``fallback_jacobian(x)`` is tried when the analytic Jacobian is
    singular.
    """
    x = np.array(x0, dtype=float)
    score, jac, merit = evaluate(x)
    norm = float(np.max(np.abs(score))) if score.size else 0.0
    halvings = []
    it = 0
    while norm >= config.tolerance:
        if it >= config.max_iterations:
            raise ConvergenceError(
                f"no convergence after {it} Newton iterations "
                f"(score sup-norm {norm:.3g})", x=x, score_norm=norm,
                iterations=it)
        try:
            step = _solve(jac, -score)
        except SingularInformationError:
            if fallback_jacobian is None:
                raise
            step = _solve(fallback_jacobian(x), -score)
        it += 1
        scale = 1.0
        for k in range(config.max_step_halvings + 1):
            trial = x + scale * step
            try:
                t_score, t_jac, t_merit = evaluate(trial)
            except FloatingPointError:
                t_merit = -np.inf
            if np.isfinite(t_merit) and t_merit >= merit - 1e-12 * abs(merit):
                break
            scale *= 0.5
        else:
            raise ConvergenceError(
                f"step halving failed at iteration {it} "
                f"(score sup-norm {norm:.3g})", x=x, score_norm=norm,
                iterations=it)
        halvings.append(k)
        x, score, jac, merit = trial, t_score, t_jac, t_merit
        norm = float(np.max(np.abs(score))) if score.size else 0.0
    return NewtonResult(x=x, score=score, score_norm=norm, iterations=it,
                        merit=merit, halvings=halvings)


def central_difference_jacobian(score: Callable, x, rel_step=1e-5):
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        step = rel_step * (1.0 + abs(x[j]))
        up, down = x.copy(), x.copy()
        up[j] += step
        down[j] -= step
        cols.append((score(up) - score(down)) / (2 * step))
    return np.column_stack(cols) if cols else np.zeros((0, 0))
