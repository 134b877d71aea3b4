"""Estimators of the proportional rate model for recurrent events.

All four estimators solve a pseudo-partial score of the form

    U(b) = n^-1 sum_{events T <= tau} { Z_i(T) - E(T, b) } = 0

and differ only in how the risk-set covariate mean ``E(T, b)`` is obtained:

* ``proposed``    kernel smoothing over non-event visits, each weighted by
                  the inverse of its fitted visit rate ``exp(-a'X(V))``;
* ``ppl``         the same smoother with unit weights;
* ``locf``        risk-set sums over covariates carried forward from the
                  last visit (backward from the first visit);
* ``full_oracle`` risk-set sums over the true covariate paths, available
                  only for simulated data.
"""

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from ._newton import SolverConfig, central_difference_jacobian, newton
from .cohort import Cohort, CohortError, HistoryFeatureSpec
from .design import (Design, StepSums, _columns, build_design,
                     require_finite, visit_covariates)
from .errors import NoEventsError, ZeroDenominatorError
from .smoothing import (KernelConfig, KernelWindows, clamp, outer_rows,
                        resolve_bandwidth)
from .visitfit import VisitModelFit, _fit_from_design, visit_baseline_rates

METHODS = ("proposed", "ppl", "locf", "full_oracle")


@dataclass
class RateModelFit:
    method: str
    beta_hat: np.ndarray
    covariates: Tuple[str, ...]
    score_norm: float
    iterations: int
    dropped_event_terms: int = 0
    baseline_cumulative: Optional[Tuple[np.ndarray, np.ndarray]] = None
    visit_fit: Optional[VisitModelFit] = None
    h: Optional[float] = None
    n: int = 0

    def baseline_at(self, t):
        times, values = self.baseline_cumulative
        return float(values[np.searchsorted(times, t, side="right") - 1])

    def to_dict(self):
        out = {
            "method": self.method,
            "beta": dict(zip(self.covariates, map(float, self.beta_hat))),
            "score_norm": self.score_norm,
            "iterations": self.iterations,
            "dropped_event_terms": self.dropped_event_terms,
            "bandwidth": self.h,
        }
        if self.baseline_cumulative is not None:
            out["baseline_cumulative"] = {
                "t": self.baseline_cumulative[0].tolist(),
                "value": self.baseline_cumulative[1].tolist()}
        if self.visit_fit is not None:
            out["visit_model"] = self.visit_fit.to_dict()
        return out


def _event_terms(design: Design):
    keep = design.events_in_window()
    if not np.any(keep):
        raise NoEventsError(f"no event visits in (0, tau={design.tau:g}]")
    T = design.ev_time[keep]
    Ze = design.ev_Z[keep]
    require_finite(Ze, "event-visit covariates")
    return T, Ze


def _initial(solver, p):
    if solver.initial_beta is None:
        return np.zeros(p)
    x0 = np.asarray(solver.initial_beta, dtype=float).reshape(-1)
    if len(x0) != p:
        raise ValueError(f"initial_beta has length {len(x0)}, expected {p}")
    return x0


class SmoothedScore:
    """Kernel-smoothed score and Jacobian for fixed visit-model weights."""

    def __init__(self, design: Design, alpha, h, policy="error"):
        T, Ze = _event_terms(design)
        require_finite(design.ne_Z, "non-event visit covariates")
        require_finite(design.ne_X, "visit-model features")
        self.design = design
        self.h = h
        self.T = T
        self.Ze = Ze
        self.tc = clamp(T, h)
        self.win = KernelWindows(self.tc, design.ne_time, h)
        kern_sum = np.bincount(self.win.rows, self.win.kern,
                               minlength=len(T))
        zero = kern_sum <= 0
        if np.any(zero) and policy == "error":
            k = int(np.flatnonzero(zero)[0])
            raise ZeroDenominatorError(self.tc[k], self.win.counts[k])
        self.use = ~zero
        self.dropped = int(zero.sum())
        self.outer = outer_rows(design.ne_Z)
        alpha = np.asarray(alpha, dtype=float)
        self.offset = -(design.ne_X @ alpha) if design.q else \
            np.zeros(len(design.ne_time))

    def moments(self, beta, second=True):
        lw = self.design.ne_Z @ beta + self.offset
        return self.win.moments(lw, self.design.ne_Z,
                                self.outer if second else None)

    def score(self, beta):
        s0, s1, _, _ = self.moments(beta, second=False)
        u = self.use
        return (self.Ze[u] - s1[u] / s0[u, None]).sum(axis=0) / self.design.n

    def evaluate(self, beta):
        s0, s1, s2, _ = self.moments(beta)
        u = self.use
        p = self.design.p
        ebar = s1[u] / s0[u, None]
        U = (self.Ze[u] - ebar).sum(axis=0) / self.design.n
        V = (s2[u].reshape(-1, p, p) / s0[u, None, None]
             - ebar[:, :, None] * ebar[:, None, :]).sum(axis=0) / self.design.n
        return U, -V, -float(U @ U)

    def solve(self, solver):
        x0 = _initial(solver, self.design.p)
        return newton(self.evaluate, x0, solver,
                      fallback_jacobian=lambda b: central_difference_jacobian(
                          self.score, b))

    def baseline_curve(self, beta, alpha):
        """Breslow-type cumulative baseline rate at the scored event times."""
        s0, _, _, shift = self.moments(beta, second=False)
        lam = visit_baseline_rates(self.design, alpha, self.h, self.T)
        jumps = np.zeros(len(self.T))
        u = self.use
        jumps[u] = lam[u] / (s0[u] * np.exp(shift[u]))
        return (np.concatenate([[0.0], self.T]),
                np.concatenate([[0.0], np.cumsum(jumps)]))


def _smoothed_fit(design, alpha, kernel, solver, method, visit_fit=None):
    h = resolve_bandwidth(kernel, design.n)
    problem = SmoothedScore(design, alpha, h, kernel.zero_denominator_policy)
    res = problem.solve(solver)
    return RateModelFit(
        method=method, beta_hat=res.x, covariates=design.z_names,
        score_norm=res.score_norm, iterations=res.iterations,
        dropped_event_terms=problem.dropped,
        baseline_cumulative=problem.baseline_curve(res.x, alpha),
        visit_fit=visit_fit, h=h, n=design.n)


def _event_names(cohort, covariates):
    return tuple(covariates) if covariates is not None else \
        cohort.covariate_registry


def fit_proposed(cohort: Cohort, spec: HistoryFeatureSpec,
                 kernel: Optional[KernelConfig] = None,
                 solver: Optional[SolverConfig] = None,
                 covariates: Optional[Sequence[str]] = None) -> RateModelFit:
    """Two-step inverse-rate-weighted kernel estimator.

    Step one fits the visit model on the history features described by
    ``spec``; step two solves the smoothed score with each non-event visit
    weighted by ``exp(-alpha_hat'X(V))``.
    """
    kernel = kernel or KernelConfig()
    solver = solver or SolverConfig()
    design = build_design(cohort, _event_names(cohort, covariates), spec)
    visit_fit = _fit_from_design(design, spec, SolverConfig(
        tolerance=solver.tolerance, max_iterations=solver.max_iterations,
        max_step_halvings=solver.max_step_halvings), kernel)
    return _smoothed_fit(design, visit_fit.alpha_hat, kernel, solver,
                         "proposed", visit_fit)


def fit_ppl(cohort: Cohort, kernel: Optional[KernelConfig] = None,
            solver: Optional[SolverConfig] = None,
            covariates: Optional[Sequence[str]] = None) -> RateModelFit:
    """Unweighted kernel-smoothing estimator (valid when visits are
    completely at random)."""
    kernel = kernel or KernelConfig()
    solver = solver or SolverConfig()
    design = build_design(cohort, _event_names(cohort, covariates))
    return _smoothed_fit(design, np.zeros(0), kernel, solver, "ppl")


def smoothed_score(cohort, spec, beta, alpha, kernel=None, covariates=None):
    """Score of the smoothed estimating equation at ``(beta, alpha)``."""
    kernel = kernel or KernelConfig()
    design = build_design(cohort, _event_names(cohort, covariates), spec)
    h = resolve_bandwidth(kernel, design.n)
    problem = SmoothedScore(design, alpha, h, kernel.zero_denominator_policy)
    return problem.score(np.asarray(beta, dtype=float))


def baseline_cumulative_proposed(cohort: Cohort, spec, fit: RateModelFit,
                                 kernel: Optional[KernelConfig],
                                 t) -> float:
    """Cumulative baseline event rate at ``t`` for a smoothed fit."""
    kernel = kernel or KernelConfig()
    if fit.method not in ("proposed", "ppl"):
        raise ValueError("baseline_cumulative_proposed needs a proposed or "
                         "ppl fit")
    if fit.method == "ppl":
        spec = None
    alpha = fit.visit_fit.alpha_hat if fit.visit_fit is not None else \
        np.zeros(0)
    design = build_design(cohort, fit.covariates, spec)
    h = resolve_bandwidth(kernel, design.n)
    problem = SmoothedScore(design, alpha, h, kernel.zero_denominator_policy)
    times, values = problem.baseline_curve(fit.beta_hat, alpha)
    return float(values[np.searchsorted(times, t, side="right") - 1])


# ---------------------------------------------------------------------------
# full-data score: LOCF imputation and the simulation oracle

class FullDataScore:
    """Score with risk-set sums supplied by ``risk_sums(beta)``.

    ``risk_sums`` returns ``(S0, S1, S2)`` at the event times, already
    scaled by a common factor (which cancels in every ratio).
    """

    def __init__(self, T, Ze, n, risk_sums):
        self.T = T
        self.Ze = Ze
        self.n = n
        self.risk_sums = risk_sums

    def evaluate(self, beta):
        S0, S1, S2 = self.risk_sums(beta)
        p = len(beta)
        ebar = S1 / S0[:, None]
        U = (self.Ze - ebar).sum(axis=0) / self.n
        V = (S2.reshape(-1, p, p) / S0[:, None, None]
             - ebar[:, :, None] * ebar[:, None, :]).sum(axis=0) / self.n
        return U, -V, -float(U @ U)

    def score(self, beta):
        return self.evaluate(beta)[0]

    def solve(self, solver, p):
        return newton(self.evaluate, _initial(solver, p), solver,
                      fallback_jacobian=lambda b: central_difference_jacobian(
                          self.score, b))


def _breslow(T, S0_true, n):
    jumps = 1.0 / S0_true
    return (np.concatenate([[0.0], T]),
            np.concatenate([[0.0], np.cumsum(jumps) / n]))


def _locf_paths(cohort, names, fill, initial):
    """Per subject: knot times and the imputed value before/after each."""
    cols = _columns(cohort, names)
    fill = dict(fill or {})
    initial = dict(initial or {})

    def resolve(s, src):
        return s.baseline[s.baseline_names.index(src)] \
            if isinstance(src, str) else float(src)

    for s in cohort.subjects:
        z = visit_covariates(s, cols)
        first = np.empty(len(names))
        for j, (name, (where, k)) in enumerate(zip(names, cols)):
            if where == "b":
                first[j] = s.baseline[k]
            elif name in initial:
                first[j] = resolve(s, initial[name])
            elif len(s.times):
                first[j] = z[0, j]
            elif name in fill:
                first[j] = resolve(s, fill[name])
            else:
                raise CohortError(f"subject {s.id} has no visits and no "
                                  f"fill for {name!r}")
        # Two visits of different kinds may share a time; the later row
        # (the non-event record) supersedes the earlier one.
        yield s, np.vstack([first, z])


def _locf_segments(cohort, names, fill, initial, continuity):
    """Segments of the carried-forward paths plus the value at each event.

    Right-continuous paths take the value observed at ``t`` itself;
    left-continuous paths use only visits strictly before ``t``.
    """
    p = len(names)
    a, b, zs, subj, ev_vals, ev_times = [], [], [], [], [], []
    for i, (s, values) in enumerate(_locf_paths(cohort, names, fill,
                                                initial)):
        knots = np.concatenate([[0.0], s.times, [s.censor_time]])
        a.extend(knots[:-1])
        b.extend(knots[1:])
        zs.extend(values)
        subj.extend([i] * len(values))
        t_ev = s.times[s.is_event]
        side = "right" if continuity == "right" else "left"
        ev_vals.append(values[np.searchsorted(s.times, t_ev, side=side)])
        ev_times.append(t_ev)
    closed_start = continuity == "right"
    seg = StepSums(a, b, closed_start=closed_start,
                   closed_end=not closed_start)
    return seg, np.array(zs, dtype=float).reshape(-1, p), ev_vals, ev_times


def fit_locf(cohort: Cohort, solver: Optional[SolverConfig] = None,
             covariates: Optional[Sequence[str]] = None, fill=None,
             initial=None, continuity: str = "left") -> RateModelFit:
    """Last observation carried forward, then the full-data score.

    Before a subject's first visit the first observed value is carried
    backward. ``initial`` maps time-dependent covariate names to a number or
    baseline column giving the value before the first visit instead;
    ``fill`` does the same only for subjects with no visits at all.

    With ``continuity="left"`` (the default) the imputed value at ``t`` is
    the last one recorded strictly before ``t``, as in counting-process
    ``(start, stop]`` data; ``"right"`` also uses a value recorded at ``t``.
    """
    if continuity not in ("left", "right"):
        raise ValueError("continuity must be 'left' or 'right'")
    solver = solver or SolverConfig()
    names = _event_names(cohort, covariates)
    design = build_design(cohort, names)
    T, _ = _event_terms(design)
    seg, zo, ev_vals, ev_times = _locf_segments(cohort, names, fill, initial,
                                                continuity)
    require_finite(zo, "carried-forward covariates")
    p = len(names)
    allT = np.concatenate(ev_times)
    allZ = np.concatenate(ev_vals).reshape(-1, p)
    keep = allT <= design.tau
    order = np.argsort(allT[keep], kind="stable")
    Ze = allZ[keep][order]
    loc = seg.locate(T)
    vals_static = np.concatenate(
        [np.ones((len(zo), 1)), zo, outer_rows(zo)], axis=1)

    def risk_sums(beta):
        eta = zo @ beta
        w = np.exp(eta - eta.max())
        tot = seg.sums(vals_static * w[:, None], loc)
        return tot[:, 0], tot[:, 1:1 + p], tot[:, 1 + p:]

    problem = FullDataScore(T, Ze, design.n, risk_sums)
    res = problem.solve(solver, p)
    shift = (zo @ res.x).max()
    S0 = risk_sums(res.x)[0] * np.exp(shift) / design.n
    return RateModelFit(
        method="locf", beta_hat=res.x, covariates=names,
        score_norm=res.score_norm, iterations=res.iterations,
        baseline_cumulative=_breslow(T, S0, design.n), n=design.n)


def fit_full_oracle(simulated, solver: Optional[SolverConfig] = None
                    ) -> RateModelFit:
    """Full-data estimator using the true covariate paths of a simulation."""
    solver = solver or SolverConfig()
    cohort = simulated.cohort
    names = simulated.z_names
    design = build_design(cohort, names)
    T, Ze = _event_terms(design)
    Zt = simulated.true_covariates(T)              # (E, n, p)
    at_risk = design.censor[None, :] >= T[:, None]
    p = len(names)

    def risk_sums(beta):
        eta = Zt @ beta
        eta = np.where(at_risk, eta, -np.inf)
        shift = eta.max(axis=1, keepdims=True)
        w = np.exp(eta - shift)
        S0 = w.sum(axis=1)
        S1 = np.einsum("en,enp->ep", w, Zt)
        S2 = np.einsum("en,enp,enr->epr", w, Zt, Zt).reshape(len(T), -1)
        return S0, S1, S2

    problem = FullDataScore(T, Ze, design.n, risk_sums)
    res = problem.solve(solver, p)
    eta = np.where(at_risk, Zt @ res.x, -np.inf)
    S0 = np.exp(eta).sum(axis=1) / design.n
    return RateModelFit(
        method="full_oracle", beta_hat=res.x, covariates=names,
        score_norm=res.score_norm, iterations=res.iterations,
        baseline_cumulative=_breslow(T, S0, design.n), n=design.n)


def baseline_cumulative_oracle(simulated, fit: RateModelFit, t) -> float:
    """Breslow estimate from the true covariate paths at ``t``."""
    design = build_design(simulated.cohort, simulated.z_names)
    T, _ = _event_terms(design)
    Zt = simulated.true_covariates(T)
    at_risk = design.censor[None, :] >= T[:, None]
    eta = np.where(at_risk, Zt @ fit.beta_hat, -np.inf)
    S0 = np.exp(eta).sum(axis=1) / design.n
    times, values = _breslow(T, S0, design.n)
    return float(values[np.searchsorted(times, t, side="right") - 1])
