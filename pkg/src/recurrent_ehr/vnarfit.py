"""Joint estimation when event and non-event visits depend on disjoint
covariate sets.

Events follow ``mu0(t) exp(b'Z(t))`` and non-event visits follow
``lambda0(t) exp(th'W(t))`` with no covariate shared between ``Z`` and
``W``. Two smoothed scores identify ``(b, th)`` jointly:

* the event score smooths covariates at non-event visits with weights
  ``exp(b'Z - th'W)``;
* the visit score exchanges the roles of the two processes, smoothing
  covariates at event visits with weights ``exp(th'W - b'Z)``.
"""

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from ._newton import SolverConfig, newton
from .cohort import Cohort, CohortError
from .design import build_design, require_finite
from .errors import ConvergenceError, NoEventsError, ZeroDenominatorError
from .smoothing import (KernelConfig, KernelWindows, clamp, outer_rows,
                        resolve_bandwidth)


@dataclass(frozen=True)
class DisjointPartition:
    z_names: Tuple[str, ...]
    w_names: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "z_names", tuple(self.z_names))
        object.__setattr__(self, "w_names", tuple(self.w_names))
        if not self.z_names or not self.w_names:
            raise ValueError("both covariate lists must be nonempty")
        shared = set(self.z_names) & set(self.w_names)
        if shared:
            raise ValueError(f"covariates in both lists: {sorted(shared)}")

    def swapped(self):
        return DisjointPartition(self.w_names, self.z_names)


@dataclass
class DisjointFit:
    beta_hat: np.ndarray
    theta_hat: np.ndarray
    z_names: Tuple[str, ...]
    w_names: Tuple[str, ...]
    score_norms: Tuple[float, float]
    iterations: int
    h: float
    collinearity_warning: bool = False

    @property
    def coefficients(self):
        return np.concatenate([self.beta_hat, self.theta_hat])

    @property
    def score_norm(self):
        return max(self.score_norms)

    def to_dict(self):
        return {
            "method": "disjoint",
            "beta": dict(zip(self.z_names, map(float, self.beta_hat))),
            "theta": dict(zip(self.w_names, map(float, self.theta_hat))),
            "score_norms": list(self.score_norms),
            "iterations": self.iterations,
            "bandwidth": self.h,
            "collinearity_warning": self.collinearity_warning,
        }


class _Direction:
    """One smoothed score: targets at scored times against pooled sources.

    ``tgt`` and ``src`` hold the full stacked vector ``(Z, W)`` at the scored
    visits and at the smoothing visits; ``sign`` is +1 for the event score
    (weights ``exp(b'Z - th'W)``) and -1 for the exchanged score. ``block``
    selects the columns entering this score.
    """

    def __init__(self, times, tgt, src_times, src, h, block, sign, n,
                 policy):
        self.tc = clamp(times, h)
        self.win = KernelWindows(self.tc, src_times, h)
        ksum = np.bincount(self.win.rows, self.win.kern,
                           minlength=len(self.tc))
        zero = ksum <= 0
        if np.any(zero) and policy == "error":
            k = int(np.flatnonzero(zero)[0])
            raise ZeroDenominatorError(self.tc[k], self.win.counts[k])
        self.use = ~zero
        self.tgt = tgt[self.use]
        self.src = src
        self.outer = outer_rows(src)
        self.block = block
        self.sign = sign
        self.n = n

    def evaluate(self, coef):
        """Score (over ``block``) and the full weighted covariance sum."""
        d = self.src.shape[1]
        signs = np.where(self.block_mask(d), 1.0, -1.0) * self.sign
        lw = self.src @ (signs * coef)
        s0, s1, s2, _ = self.win.moments(lw, self.src, self.outer)
        u = self.use
        m = s1[u] / s0[u, None]
        cov = (s2[u].reshape(-1, d, d) / s0[u, None, None]
               - m[:, :, None] * m[:, None, :]).sum(axis=0) / self.n
        score = (self.tgt - m).sum(axis=0) / self.n
        return score[self.block], cov, signs

    def block_mask(self, d):
        mask = np.zeros(d, dtype=bool)
        mask[self.block] = True
        return mask


class DisjointScores:
    def __init__(self, cohort: Cohort, partition: DisjointPartition, h,
                 policy="error"):
        names = partition.z_names + partition.w_names
        design = build_design(cohort, names)
        p = len(partition.z_names)
        d = len(names)
        ev = design.events_in_window()
        ne = design.nonevents_in_window()
        if not ev.any():
            raise NoEventsError(f"no event visits in (0, tau={design.tau:g}]")
        if not ne.any():
            raise NoEventsError(
                f"no non-event visits in (0, tau={design.tau:g}]")
        require_finite(design.ev_Z, "event-visit covariates")
        require_finite(design.ne_Z, "non-event visit covariates")
        self.p, self.d = p, d
        zb = np.arange(p)
        wb = np.arange(p, d)
        # event score: Z block positive, W block negative
        self.u4 = _Direction(design.ev_time[ev], design.ev_Z[ev],
                             design.ne_time, design.ne_Z, h, zb, 1.0,
                             design.n, policy)
        # exchanged score: W block positive, Z block negative
        self.u5 = _Direction(design.ne_time[ne], design.ne_Z[ne],
                             design.ev_time, design.ev_Z, h, wb, 1.0,
                             design.n, policy)
        self.design = design

    def scores(self, coef):
        s4, c4, _ = self.u4.evaluate(coef)
        s5, c5, _ = self.u5.evaluate(coef)
        return s4, c4, s5, c5

    def joint(self, coef):
        """Stacked score and its Jacobian in ``(b, th)``."""
        p = self.p
        s4, c4, s5, c5 = self.scores(coef)
        jac = np.zeros((self.d, self.d))
        jac[:p, :p] = -c4[:p, :p]
        jac[:p, p:] = c4[:p, p:]
        jac[p:, p:] = -c5[p:, p:]
        jac[p:, :p] = c5[p:, :p]
        score = np.concatenate([s4, s5])
        return score, jac, -float(score @ score)


def _block_step(scores, coef, which, max_halvings):
    """Newton step in one block holding the other fixed."""
    p = scores.p
    sl = slice(0, p) if which == 0 else slice(p, scores.d)

    def block_eval(c):
        s4, c4, s5, c5 = scores.scores(c)
        if which == 0:
            return s4, -c4[:p, :p]
        return s5, -c5[p:, p:]

    s, j = block_eval(coef)
    step = np.linalg.solve(j, -s)
    base = float(s @ s)
    scale = 1.0
    for _ in range(max_halvings + 1):
        trial = coef.copy()
        trial[sl] += scale * step
        ts, _ = block_eval(trial)
        if float(ts @ ts) <= base:
            return trial
        scale *= 0.5
    return coef


def fit_disjoint(cohort: Cohort, partition: DisjointPartition,
                 kernel: Optional[KernelConfig] = None,
                 solver: Optional[SolverConfig] = None,
                 sweeps: int = 200) -> DisjointFit:
    """Solve both smoothed scores for ``(beta, theta)``.

    Alternating block Newton sweeps (a ``beta`` step, then a ``theta``
    step) run until the stacked score is below tolerance; if the sweeps
    stall, full Newton on the stacked system finishes the solve.
    """
    from .eventfit import fit_ppl

    kernel = kernel or KernelConfig()
    solver = solver or SolverConfig()
    names = set(cohort.covariate_registry)
    missing = (set(partition.z_names) | set(partition.w_names)) - names
    if missing:
        raise CohortError(f"unknown covariates {sorted(missing)}")
    h = resolve_bandwidth(kernel, cohort.n)
    scores = DisjointScores(cohort, partition, h,
                            kernel.zero_denominator_policy)
    flagged = _collinearity(scores)

    if solver.initial_beta is not None:
        coef = np.asarray(solver.initial_beta, dtype=float).reshape(-1)
    else:
        init = SolverConfig(tolerance=solver.tolerance,
                            max_iterations=solver.max_iterations,
                            max_step_halvings=solver.max_step_halvings)
        b0 = fit_ppl(cohort, kernel, init, partition.z_names).beta_hat
        t0 = fit_ppl(cohort.swap_kinds(), kernel, init,
                     partition.w_names).beta_hat
        coef = np.concatenate([b0, t0])

    it = 0
    norm = _norm(scores, coef)
    prev = np.inf
    while norm >= solver.tolerance and it < sweeps:
        coef = _block_step(scores, coef, 0, solver.max_step_halvings)
        coef = _block_step(scores, coef, 1, solver.max_step_halvings)
        it += 1
        prev, norm = norm, _norm(scores, coef)
        if norm > 0.9 * prev:
            break
    if norm >= solver.tolerance:
        cfg = SolverConfig(tolerance=solver.tolerance,
                           max_iterations=solver.max_iterations,
                           max_step_halvings=solver.max_step_halvings)
        try:
            res = newton(scores.joint, coef, cfg)
        except ConvergenceError as exc:
            raise ConvergenceError(f"disjoint fit: {exc}", x=exc.x,
                                   score_norm=exc.score_norm,
                                   iterations=it + (exc.iterations or 0))
        coef = res.x
        it += res.iterations
    s4, _, s5, _ = scores.scores(coef)
    p = scores.p
    return DisjointFit(coef[:p], coef[p:], partition.z_names,
                       partition.w_names,
                       (float(np.max(np.abs(s4))), float(np.max(np.abs(s5)))),
                       it, h, flagged)


def _norm(scores, coef):
    s4, _, s5, _ = scores.scores(coef)
    return float(max(np.max(np.abs(s4)), np.max(np.abs(s5))))


def _collinearity(scores, threshold=0.9):
    allz = np.vstack([scores.design.ev_Z, scores.design.ne_Z])
    p = scores.p
    sd = allz.std(axis=0)
    ok = sd > 0
    if ok.sum() < 2:
        return False
    corr = np.corrcoef(allz[:, ok], rowvar=False)
    idx = np.flatnonzero(ok)
    zi = idx < p
    cross = np.abs(corr[np.ix_(zi, ~zi)])
    if cross.size and np.nanmax(cross) > threshold:
        warnings.warn("a Z covariate is nearly collinear with a W covariate; "
                      "estimates may be highly variable", RuntimeWarning)
        return True
    return False


def disjoint_scores(cohort, partition, beta, theta, kernel=None):
    """Both smoothed scores at ``(beta, theta)``."""
    kernel = kernel or KernelConfig()
    h = resolve_bandwidth(kernel, cohort.n)
    scores = DisjointScores(cohort, partition, h,
                            kernel.zero_denominator_policy)
    s4, _, s5, _ = scores.scores(np.concatenate([beta, theta]))
    return s4, s5
