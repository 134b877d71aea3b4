"""Cox-type model for the non-event visit process.

The rate of non-event visits given the observed history is modelled as
``lambda0(t) exp(a'X(t))``. The coefficients solve the partial score over
non-event visit times up to ``tau``; the baseline rate is recovered by
kernel smoothing the visit counts divided by the weighted risk-set size.
"""

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from ._newton import SolverConfig, _solve, newton
from .cohort import Cohort, HistoryFeatureSpec
from .design import Design, build_design, require_finite
from .errors import NoEventsError
from .smoothing import (KernelConfig, KernelWindows, clamp, design_visit_sums,
                        resolve_bandwidth)


@dataclass
class VisitModelFit:
    alpha_hat: np.ndarray
    labels: List[str]
    score_norm: float
    iterations: int
    log_pseudo_likelihood: float
    baseline_grid: Optional[Tuple[np.ndarray, np.ndarray]] = None
    h: Optional[float] = None

    def to_dict(self):
        out = {
            "alpha": dict(zip(self.labels, map(float, self.alpha_hat))),
            "score_norm": self.score_norm,
            "iterations": self.iterations,
            "log_pseudo_likelihood": self.log_pseudo_likelihood,
        }
        if self.baseline_grid is not None:
            out["baseline_rate"] = {"t": self.baseline_grid[0].tolist(),
                                    "rate": self.baseline_grid[1].tolist()}
        return out


def _visit_objective(design: Design):
    keep = design.nonevents_in_window()
    if not np.any(keep):
        raise NoEventsError(
            f"no non-event visits in (0, tau={design.tau:g}]")
    u = design.ne_time[keep]
    Xu = design.ne_X[keep]
    require_finite(Xu, "visit-model features")
    require_finite(design.seg_X, "visit-model features")
    n = design.n

    def evaluate(alpha):
        r0, r1, r2, shift, _ = design_visit_sums(design, alpha, u)
        xbar = r1 / r0[:, None]
        score = (Xu - xbar).sum(axis=0) / n
        info = (r2 / r0[:, None, None]
                - xbar[:, :, None] * xbar[:, None, :]).sum(axis=0) / n
        logpl = float((Xu @ alpha - np.log(r0) - shift).sum() / n)
        return score, -info, logpl

    return evaluate


def fit_alpha(design: Design, solver: SolverConfig):
    evaluate = _visit_objective(design)
    res = newton(evaluate, np.zeros(design.q), solver)
    # a zero score can also mean a feature with no variation on any risk
    # set; the information at the root must be invertible
    _, neg_info, _ = evaluate(res.x)
    if design.q:
        _solve(neg_info, np.zeros(design.q))
    return res


def visit_baseline_rates(design: Design, alpha, h, times):
    """Kernel estimate of the baseline visit rate at each of ``times``."""
    tc = clamp(times, h)
    r0, _, _, shift, _ = design_visit_sums(design, alpha, design.ne_time)
    inv_risk = np.exp(-shift) / r0
    win = KernelWindows(tc, design.ne_time, h)
    return np.bincount(win.rows, win.kern * inv_risk[win.cols],
                       minlength=len(tc))


def fit_visit_model(cohort: Cohort, spec: HistoryFeatureSpec,
                    solver: Optional[SolverConfig] = None,
                    kernel: Optional[KernelConfig] = None,
                    grid_points: int = 101) -> VisitModelFit:
    """Estimate the visit-model coefficients.

    When ``kernel`` is given the baseline visit rate is also tabulated on an
    even grid of ``grid_points`` times over ``[0, tau]``.
    """
    solver = solver or SolverConfig()
    design = build_design(cohort, (), spec)
    return _fit_from_design(design, spec, solver, kernel, grid_points)


def _fit_from_design(design, spec, solver, kernel=None, grid_points=101):
    res = fit_alpha(design, solver)
    fit = VisitModelFit(alpha_hat=res.x, labels=spec.labels(),
                        score_norm=res.score_norm, iterations=res.iterations,
                        log_pseudo_likelihood=res.merit)
    if kernel is not None:
        h = resolve_bandwidth(kernel, design.n)
        grid = np.linspace(0.0, design.tau, grid_points)
        fit.h = h
        fit.baseline_grid = (grid, visit_baseline_rates(design, res.x, h,
                                                        grid))
    return fit


def visit_score(cohort: Cohort, spec: HistoryFeatureSpec, alpha):
    """Partial score of the visit model at ``alpha``."""
    design = build_design(cohort, (), spec)
    return _visit_objective(design)(np.asarray(alpha, dtype=float))[0]


def baseline_visit_rate(cohort: Cohort, spec: HistoryFeatureSpec, alpha_hat,
                        h, t) -> float:
    design = build_design(cohort, (), spec)
    return float(visit_baseline_rates(design, np.asarray(alpha_hat, float), h,
                                      [t])[0])
