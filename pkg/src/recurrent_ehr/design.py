"""Flattened arrays used by the estimators.

Fitting never walks subjects one by one: a :class:`Design` stacks every
event visit and every non-event visit of a cohort into sorted arrays, and
represents each subject's history-feature path ``X_i(u)`` (together with its
at-risk indicator ``I(C_i >= u)``) as a list of constant segments. Risk-set
sums such as ``sum_i I(C_i >= u) exp(a'X_i(u))`` then reduce to cumulative
sums over sorted segment endpoints (:class:`StepSums`).
"""

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from .cohort import Cohort, CohortError, HistoryFeatureSpec, feature_states


class StepSums:
    """Sum segment values over the segments active at query times.

    A segment is active at ``u`` when ``start < u`` (``start <= u`` if
    ``closed_start``) and ``u <= end`` (``u < end`` unless ``closed_end``).
    """

    def __init__(self, starts, ends, closed_start=False, closed_end=True):
        self.starts = np.asarray(starts, dtype=float)
        self.ends = np.asarray(ends, dtype=float)
        self._s_order = np.argsort(self.starts, kind="stable")
        self._e_order = np.argsort(self.ends, kind="stable")
        self._s_sorted = self.starts[self._s_order]
        self._e_sorted = self.ends[self._e_order]
        self._s_side = "right" if closed_start else "left"
        self._e_side = "left" if closed_end else "right"

    def __len__(self):
        return len(self.starts)

    def locate(self, u):
        u = np.asarray(u, dtype=float)
        return (np.searchsorted(self._s_sorted, u, side=self._s_side),
                np.searchsorted(self._e_sorted, u, side=self._e_side))

    def sums(self, values, located):
        """``values`` has one row per segment; returns one row per query."""
        values = np.asarray(values, dtype=float)
        ns, ne = located
        flat = values.reshape(len(values), -1)
        d = flat.shape[1]
        cs = np.zeros((len(flat) + 1, d))
        np.cumsum(flat[self._s_order], axis=0, out=cs[1:])
        ce = np.zeros((len(flat) + 1, d))
        np.cumsum(flat[self._e_order], axis=0, out=ce[1:])
        out = cs[ns] - ce[ne]
        return out.reshape((len(ns),) + values.shape[1:])

    def counts(self, located):
        ns, ne = located
        return ns - ne


def _columns(cohort, names):
    cols = []
    for name in names:
        if name in cohort.baseline_names:
            cols.append(("b", cohort.baseline_names.index(name)))
        elif name in cohort.visit_names:
            cols.append(("v", cohort.visit_names.index(name)))
        else:
            raise CohortError(f"unknown covariate {name!r}")
    return cols


def visit_covariates(subject, cols):
    m = len(subject.times)
    out = np.empty((m, len(cols)))
    for j, (where, k) in enumerate(cols):
        out[:, j] = subject.baseline[k] if where == "b" else \
            subject.covariates[:, k]
    return out


@dataclass
class Design:
    n: int
    tau: float
    censor: np.ndarray
    z_names: Tuple[str, ...]
    ev_time: np.ndarray
    ev_subject: np.ndarray
    ev_Z: np.ndarray
    ne_time: np.ndarray
    ne_subject: np.ndarray
    ne_Z: np.ndarray
    ne_X: np.ndarray
    seg: StepSums
    seg_X: np.ndarray
    seg_subject: np.ndarray

    @property
    def p(self):
        return self.ev_Z.shape[1]

    @property
    def q(self):
        return self.ne_X.shape[1]

    def events_in_window(self):
        """Mask of event visits at times ``<= tau``."""
        return self.ev_time <= self.tau

    def nonevents_in_window(self):
        return self.ne_time <= self.tau


def build_design(cohort: Cohort, z_names: Sequence[str],
                 spec: Optional[HistoryFeatureSpec] = None) -> Design:
    spec = spec or HistoryFeatureSpec()
    spec.validate(cohort.baseline_names, cohort.visit_names)
    z_names = tuple(z_names)
    cols = _columns(cohort, z_names)
    p, q = len(z_names), spec.q
    ev_t, ev_s, ev_z = [], [], []
    ne_t, ne_s, ne_z, ne_x = [], [], [], []
    seg_a, seg_b, seg_x, seg_s = [], [], [], []
    for i, s in enumerate(cohort.subjects):
        states = feature_states(s, spec)
        z = visit_covariates(s, cols)
        prior = np.searchsorted(s.times, s.times, side="left")
        ev = s.is_event
        ev_t.append(s.times[ev])
        ev_z.append(z[ev])
        ev_s.append(np.full(ev.sum(), i))
        ne = ~ev
        ne_t.append(s.times[ne])
        ne_z.append(z[ne])
        ne_x.append(states[prior[ne]])
        ne_s.append(np.full(ne.sum(), i))
        bounds = np.concatenate([[0.0], s.times, [s.censor_time]])
        seg_a.append(bounds[:-1])
        seg_b.append(bounds[1:])
        seg_x.append(states)
        seg_s.append(np.full(len(states), i))

    def stack(parts, width):
        parts = [np.asarray(x, dtype=float).reshape(len(x), width)
                 for x in parts]
        return np.concatenate(parts, axis=0) if parts else \
            np.zeros((0, width))

    ev_t = np.concatenate(ev_t)
    ne_t = np.concatenate(ne_t)
    eo = np.argsort(ev_t, kind="stable")
    no = np.argsort(ne_t, kind="stable")
    seg_a = np.concatenate(seg_a)
    seg_b = np.concatenate(seg_b)
    return Design(
        n=cohort.n, tau=cohort.tau, censor=cohort.censor_times,
        z_names=z_names,
        ev_time=ev_t[eo], ev_subject=np.concatenate(ev_s)[eo],
        ev_Z=stack(ev_z, p)[eo],
        ne_time=ne_t[no], ne_subject=np.concatenate(ne_s)[no],
        ne_Z=stack(ne_z, p)[no], ne_X=stack(ne_x, q)[no],
        seg=StepSums(seg_a, seg_b), seg_X=stack(seg_x, q),
        seg_subject=np.concatenate(seg_s))


def require_finite(array, what):
    if not np.all(np.isfinite(array)):
        raise CohortError(f"missing or nonfinite covariate values in {what}")
