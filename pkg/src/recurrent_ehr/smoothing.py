"""Kernel-smoothed, inverse-rate-weighted covariate moments.

For an evaluation time ``t`` the smoothed moments pool the covariates seen at
non-event visits ``V`` within one bandwidth of ``t``::

    s_k(t) = n^-1 sum_{i,k} K_h(t - V_ik) exp(b'Z_i(V_ik) - a'X_i(V_ik)) Z^{(k)}

with ``Z^{(0)} = 1``, ``Z^{(1)} = Z`` and ``Z^{(2)} = Z Z'``. The ratio
``s_1 / s_0`` replaces the unobservable risk-set mean of the covariates.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import sparse

from .cohort import Cohort, HistoryFeatureSpec
from .design import Design, build_design
from .errors import EmptyRiskSetError, ZeroDenominatorError

POLICIES = ("error", "drop_term")


def kernel_weight(u):
    """Epanechnikov kernel ``0.75 (1 - u^2)`` on ``|u| < 1``."""
    u = np.asarray(u, dtype=float)
    out = np.where(np.abs(u) < 1.0, 0.75 * (1.0 - u * u), 0.0)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class KernelConfig:
    """Kernel settings.

    Either a fixed bandwidth ``h`` or the rule ``h = c * n**(-nu)``; the rule
    is used when ``h`` is None.
    """

    h: Optional[float] = None
    c: float = 2.0
    nu: float = 1.0 / 3.0
    zero_denominator_policy: str = "error"
    kernel: str = "epanechnikov"

    def __post_init__(self):
        if self.kernel != "epanechnikov":
            raise ValueError("only the Epanechnikov kernel is supported")
        if self.zero_denominator_policy not in POLICIES:
            raise ValueError(f"zero_denominator_policy must be one of "
                             f"{POLICIES}")
        if self.h is not None:
            if not self.h > 0:
                raise ValueError("fixed bandwidth must be positive")
        else:
            if not self.c > 0:
                raise ValueError("bandwidth constant c must be positive")
            if not 0.25 < self.nu < 0.5:
                raise ValueError("bandwidth exponent nu must lie in (1/4, 1/2)")


def resolve_bandwidth(config: KernelConfig, n: int) -> float:
    if n < 1:
        raise ValueError("n must be at least 1")
    h = config.h if config.h is not None else config.c * n ** (-config.nu)
    if not h > 0:
        raise ValueError(f"nonpositive bandwidth {h!r}")
    return float(h)


class KernelWindows:
    """Sparse kernel weights between evaluation times and sorted observations.

    Observations within ``(t - h, t + h)`` of each evaluation time are found
    by binary search on the sorted observation times, so the cost is
    proportional to the number of (time, observation) pairs that actually
    overlap rather than to their product.
    """

    def __init__(self, eval_times, obs_times, h):
        t = np.asarray(eval_times, dtype=float)
        obs = np.asarray(obs_times, dtype=float)
        if np.any(np.diff(obs) < 0):
            raise ValueError("observation times must be sorted")
        lo = np.searchsorted(obs, t - h, side="right")
        hi = np.searchsorted(obs, t + h, side="left")
        counts = np.maximum(hi - lo, 0)
        indptr = np.zeros(len(t) + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        rows = np.repeat(np.arange(len(t)), counts)
        cols = lo[rows] + (np.arange(indptr[-1]) - indptr[rows])
        self.h = float(h)
        self.eval_times = t
        self.n_obs = len(obs)
        self.counts = counts
        self.indptr = indptr
        self.rows = rows
        self.cols = cols
        self.kern = kernel_weight((t[rows] - obs[cols]) / h) / h
        self._starts = indptr[:-1][counts > 0]
        self._nonempty = counts > 0

    def moments(self, logw, values, outer=None):
        """Shifted weighted sums per evaluation time.

        Returns ``(s0, s1, s2, shift)``; the true sums are the returned ones
        times ``exp(shift)``. ``outer`` holds pre-flattened ``Z Z'`` rows and
        may be None when the second moment is not needed.
        """
        m = len(self.eval_times)
        lw = logw[self.cols]
        shift = np.zeros(m)
        if len(lw):
            shift[self._nonempty] = np.maximum.reduceat(lw, self._starts)
        w = self.kern * np.exp(lw - shift[self.rows])
        mat = sparse.csr_matrix((w, self.cols, self.indptr),
                                shape=(m, self.n_obs))
        s0 = np.asarray(mat.sum(axis=1)).reshape(-1)
        s1 = mat @ values
        s2 = None if outer is None else mat @ outer
        return s0, s1, s2, shift


def outer_rows(Z):
    return (Z[:, :, None] * Z[:, None, :]).reshape(len(Z), -1)


def clamp(t, h):
    """Left-boundary rule: times in ``[0, h)`` are evaluated at ``h``."""
    return np.maximum(np.asarray(t, dtype=float), h)


class SmoothedMoments(NamedTuple):
    s0: float
    s1: np.ndarray
    s2: np.ndarray
    window_count: int


def _log_weights(design: Design, beta, alpha):
    lw = design.ne_Z @ np.asarray(beta, dtype=float)
    if design.q:
        lw = lw - design.ne_X @ np.asarray(alpha, dtype=float)
    return lw


def design_moments(design: Design, times, beta, alpha, h, second=True):
    """Moments of :class:`KernelWindows` for a compiled design."""
    win = KernelWindows(times, design.ne_time, h)
    outer = outer_rows(design.ne_Z) if second else None
    s0, s1, s2, shift = win.moments(_log_weights(design, beta, alpha),
                                    design.ne_Z, outer)
    return win, s0, s1, s2, shift


def _check(cohort, spec, beta, alpha, covariates):
    spec = spec or HistoryFeatureSpec()
    names = tuple(covariates) if covariates is not None else \
        cohort.covariate_registry
    beta = np.asarray(beta, dtype=float).reshape(-1)
    alpha = np.asarray(alpha, dtype=float).reshape(-1)
    if len(beta) != len(names):
        raise ValueError(f"beta has length {len(beta)}, expected {len(names)}")
    if len(alpha) != spec.q:
        raise ValueError(f"alpha has length {len(alpha)}, expected {spec.q}")
    return spec, names, beta, alpha


def smoothed_moments(cohort: Cohort, spec: Optional[HistoryFeatureSpec], t,
                     beta, alpha, h, covariates=None) -> SmoothedMoments:
    """Smoothed moments of order 0, 1 and 2 at a single time ``t``.

    ``covariates`` names the event-model covariates ``Z`` (default: every
    covariate in the cohort). No boundary clamp is applied here.
    """
    spec, names, beta, alpha = _check(cohort, spec, beta, alpha, covariates)
    design = build_design(cohort, names, spec)
    win, s0, s1, s2, shift = design_moments(design, [t], beta, alpha, h)
    scale = np.exp(shift[0]) / design.n
    p = len(names)
    return SmoothedMoments(float(s0[0] * scale), s1[0] * scale,
                           s2[0].reshape(p, p) * scale, int(win.counts[0]))


def weighted_covariate_mean(cohort: Cohort, spec, t, beta, alpha, h,
                            config: Optional[KernelConfig] = None,
                            covariates=None):
    """Inverse-rate-weighted smoothed covariate mean at ``max(t, h)``."""
    spec, names, beta, alpha = _check(cohort, spec, beta, alpha, covariates)
    design = build_design(cohort, names, spec)
    tc = float(clamp(t, h))
    win, s0, s1, _, _ = design_moments(design, [tc], beta, alpha, h,
                                       second=False)
    if not s0[0] > 0:
        raise ZeroDenominatorError(tc, win.counts[0])
    return s1[0] / s0[0]


def ppl_mean(cohort: Cohort, t, beta, h, config=None, covariates=None):
    """Unweighted smoothed covariate mean (all visit-model weights one)."""
    return weighted_covariate_mean(cohort, None, t, beta, [], h, config,
                                   covariates)


def design_visit_sums(design: Design, alpha, u):
    """Risk-set sums ``sum_i I(C_i >= u) exp(a'X_i(u)) X_i(u)^{(k)}``.

    Returns ``(r0, r1, r2, shift, at_risk)`` with the sums scaled by
    ``exp(-shift)``.
    """
    alpha = np.asarray(alpha, dtype=float)
    eta = design.seg_X @ alpha if design.q else np.zeros(len(design.seg_X))
    shift = float(eta.max()) if len(eta) else 0.0
    w = np.exp(eta - shift)
    loc = design.seg.locate(u)
    X = design.seg_X
    vals = np.concatenate([w[:, None], w[:, None] * X,
                           w[:, None] * outer_rows(X)], axis=1)
    tot = design.seg.sums(vals, loc)
    q = design.q
    r0 = tot[:, 0]
    r1 = tot[:, 1:1 + q]
    r2 = tot[:, 1 + q:].reshape(len(tot), q, q)
    return r0, r1, r2, shift, design.seg.counts(loc)


def visit_mean(cohort: Cohort, spec: HistoryFeatureSpec, u, alpha):
    """Risk-set weighted mean of the visit-model features at time ``u``."""
    spec = spec or HistoryFeatureSpec()
    design = build_design(cohort, (), spec)
    if not np.any(design.censor >= u):
        raise EmptyRiskSetError(f"no subject at risk at u={u!r}")
    r0, r1, _, _, _ = design_visit_sums(design, alpha, [u])
    return r1[0] / r0[0]
