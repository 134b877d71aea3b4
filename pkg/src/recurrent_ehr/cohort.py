"""Visit-level recurrent-event data and observed-history features.

A subject is followed on ``(0, C]``. Each clinical visit is either an *event*
visit (the recurrent event was declared) or a *non-event* visit, and every
visit carries a snapshot of the time-dependent covariates. Baseline
covariates are constant over follow-up.

History features ``X(t)`` only ever look at visits strictly before ``t``.
"""

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import CohortError

EVENT = "event"
NONEVENT = "nonevent"
_KINDS = (EVENT, NONEVENT)


class Visit(NamedTuple):
    time: float
    kind: str
    covariates: np.ndarray


@dataclass(frozen=True, eq=False)
class Subject:
    """One subject's follow-up.

    Visits are stored column-wise: ``times`` (sorted), ``is_event`` and the
    ``covariates`` matrix with one row per visit and one column per
    time-dependent covariate in ``visit_names``.
    """

    id: str
    censor_time: float
    baseline: np.ndarray
    times: np.ndarray
    is_event: np.ndarray
    covariates: np.ndarray
    baseline_names: Tuple[str, ...] = ()
    visit_names: Tuple[str, ...] = ()

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float).reshape(-1)
        is_event = np.asarray(self.is_event, dtype=bool).reshape(-1)
        cov = np.asarray(self.covariates, dtype=float).reshape(
            len(times), len(self.visit_names))
        base = np.asarray(self.baseline, dtype=float).reshape(-1)
        if len(is_event) != len(times):
            raise CohortError(f"subject {self.id}: kind/time length mismatch")
        if len(base) != len(self.baseline_names):
            raise CohortError(f"subject {self.id}: baseline length mismatch")
        if not (self.censor_time > 0 and math.isfinite(self.censor_time)):
            raise CohortError(
                f"subject {self.id}: censor_time must be positive and finite")
        if not np.all(np.isfinite(base)):
            raise CohortError(f"subject {self.id}: nonfinite baseline value")
        if len(times):
            if np.any(times <= 0) or not np.all(np.isfinite(times)):
                raise CohortError(f"subject {self.id}: visit times must be > 0")
            if np.any(times > self.censor_time):
                bad = float(times[times > self.censor_time][0])
                raise CohortError(
                    f"subject {self.id}: visit at t={bad!r} after censoring "
                    f"time {self.censor_time!r}")
            # event before nonevent at a shared timestamp
            order = np.lexsort((~is_event, times))
            times, is_event, cov = times[order], is_event[order], cov[order]
            same = (times[1:] == times[:-1]) & (is_event[1:] == is_event[:-1])
            if np.any(same):
                t = float(times[1:][same][0])
                raise CohortError(
                    f"subject {self.id}: duplicate visit kind at t={t!r}")
        for name, value in (("times", times), ("is_event", is_event),
                            ("covariates", cov), ("baseline", base)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        object.__setattr__(self, "censor_time", float(self.censor_time))

    @property
    def visits(self):
        return [Visit(float(t), EVENT if e else NONEVENT, z)
                for t, e, z in zip(self.times, self.is_event, self.covariates)]

    def n_prior(self, t):
        """Number of visits with time strictly less than ``t``."""
        return int(np.searchsorted(self.times, t, side="left"))

    def covariate_row(self, index):
        """Full covariate vector (baseline then time-dependent) at a visit."""
        return np.concatenate([self.baseline, self.covariates[index]])

    def with_visits(self, times, is_event, covariates):
        return Subject(self.id, self.censor_time, self.baseline, times,
                       is_event, covariates, self.baseline_names,
                       self.visit_names)


@dataclass(frozen=True, eq=False)
class Cohort:
    subjects: Tuple[Subject, ...]
    baseline_names: Tuple[str, ...]
    visit_names: Tuple[str, ...]
    tau: Optional[float] = None

    def __post_init__(self):
        subjects = tuple(self.subjects)
        if len(subjects) < 2:
            raise CohortError("a cohort needs at least two subjects")
        for s in subjects:
            if s.baseline_names != tuple(self.baseline_names) or \
                    s.visit_names != tuple(self.visit_names):
                raise CohortError(
                    f"subject {s.id}: covariate names differ from the cohort")
        overlap = set(self.baseline_names) & set(self.visit_names)
        if overlap:
            raise CohortError(
                f"covariate names appear in both files: {sorted(overlap)}")
        cmax = max(s.censor_time for s in subjects)
        tau = cmax if self.tau is None else float(self.tau)
        if not 0 < tau <= cmax:
            raise CohortError(
                f"tau={tau!r} must lie in (0, max censor_time={cmax!r}]")
        object.__setattr__(self, "subjects", subjects)
        object.__setattr__(self, "baseline_names", tuple(self.baseline_names))
        object.__setattr__(self, "visit_names", tuple(self.visit_names))
        object.__setattr__(self, "tau", tau)

    @property
    def n(self):
        return len(self.subjects)

    @property
    def covariate_registry(self):
        return self.baseline_names + self.visit_names

    @property
    def censor_times(self):
        return np.array([s.censor_time for s in self.subjects])

    def resample(self, index):
        """Cohort made of ``subjects[i] for i in index`` (same tau)."""
        subjects = tuple(self.subjects[i] for i in index)
        tau = min(self.tau, max(s.censor_time for s in subjects))
        return Cohort(subjects, self.baseline_names, self.visit_names, tau)

    def with_tau(self, tau):
        return Cohort(self.subjects, self.baseline_names, self.visit_names,
                      tau)

    def map_subjects(self, func, baseline_names=None, visit_names=None):
        subjects = tuple(func(s) for s in self.subjects)
        return Cohort(subjects,
                      self.baseline_names if baseline_names is None
                      else baseline_names,
                      self.visit_names if visit_names is None else visit_names,
                      self.tau)

    def scaled(self, name, factor):
        """Copy with covariate ``name`` multiplied by ``factor``."""
        return self.transformed(name, lambda v: v * factor)

    def shifted(self, name, offset):
        return self.transformed(name, lambda v: v + offset)

    def transformed(self, name, func):
        if name in self.baseline_names:
            j = self.baseline_names.index(name)

            def update(s):
                base = s.baseline.copy()
                base[j] = func(base[j])
                return Subject(s.id, s.censor_time, base, s.times, s.is_event,
                               s.covariates, s.baseline_names, s.visit_names)
        elif name in self.visit_names:
            j = self.visit_names.index(name)

            def update(s):
                cov = s.covariates.copy()
                cov[:, j] = func(cov[:, j])
                return s.with_visits(s.times, s.is_event, cov)
        else:
            raise CohortError(f"unknown covariate {name!r}")
        return self.map_subjects(update)

    def swap_kinds(self):
        """Exchange event and non-event visits for every subject."""
        return self.map_subjects(
            lambda s: s.with_visits(s.times, ~s.is_event, s.covariates))


def make_subject(id, censor_time, baseline=None, visits=(),
                 baseline_names=(), visit_names=()):
    """Build a :class:`Subject` from ``(time, kind, covariates)`` tuples."""
    visits = list(visits)
    if baseline is None:
        baseline = np.zeros(len(baseline_names))
    times = [float(v[0]) for v in visits]
    kinds = [v[1] for v in visits]
    for k in kinds:
        if k not in _KINDS:
            raise CohortError(f"subject {id}: unknown visit kind {k!r}")
    cov = np.array([np.asarray(v[2], dtype=float).reshape(-1) for v in visits],
                   dtype=float).reshape(len(visits), len(visit_names))
    return Subject(str(id), float(censor_time), np.asarray(baseline, float),
                   np.array(times), np.array([k == EVENT for k in kinds]),
                   cov, tuple(baseline_names), tuple(visit_names))


# ---------------------------------------------------------------------------
# counting processes and history features

class CountingState(NamedTuple):
    events_before: int
    nonevents_before: int
    last_observed: Optional[Tuple[float, np.ndarray]]


def counting_state(subject: Subject, t: float) -> CountingState:
    """``N*(t-)``, ``O*(t-)`` and the last covariate snapshot before ``t``."""
    k = subject.n_prior(t)
    events = int(np.count_nonzero(subject.is_event[:k]))
    last = None
    if k:
        last = (float(subject.times[k - 1]), subject.covariates[k - 1].copy())
    return CountingState(events, k - events, last)


@dataclass(frozen=True)
class Baseline:
    name: str


@dataclass(frozen=True)
class AnyPriorVisitIndicator:
    pass


@dataclass(frozen=True)
class InteractBaselineWithAnyPrior:
    name: str


@dataclass(frozen=True)
class LastObserved:
    """Last observed value of a time-dependent covariate.

    ``fill`` is used before the first visit; it is either a number or the
    name of a baseline column holding a per-subject value.
    """

    name: str
    fill: Union[float, str] = 0.0


@dataclass(frozen=True)
class InteractLastObservedWithAnyPrior:
    name: str


@dataclass(frozen=True)
class ThresholdLastObserved:
    name: str
    cutpoint: float
    fill: Union[float, str] = 0.0


_RULES = {cls.__name__: cls for cls in (
    Baseline, AnyPriorVisitIndicator, InteractBaselineWithAnyPrior,
    LastObserved, InteractLastObservedWithAnyPrior, ThresholdLastObserved)}


@dataclass(frozen=True)
class HistoryFeatureSpec:
    rules: Tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "rules", tuple(self.rules))

    @property
    def q(self):
        return len(self.rules)

    def labels(self):
        out = []
        for r in self.rules:
            name = getattr(r, "name", None)
            out.append(type(r).__name__ + (f"({name})" if name else ""))
        return out

    def validate(self, baseline_names, visit_names):
        for r in self.rules:
            if isinstance(r, (Baseline, InteractBaselineWithAnyPrior)):
                if r.name not in baseline_names:
                    raise CohortError(
                        f"{type(r).__name__}: {r.name!r} is not a baseline "
                        "covariate")
            elif isinstance(r, (LastObserved, InteractLastObservedWithAnyPrior,
                                ThresholdLastObserved)):
                if r.name not in visit_names:
                    raise CohortError(
                        f"{type(r).__name__}: {r.name!r} is not a "
                        "time-dependent covariate")
                fill = getattr(r, "fill", 0.0)
                if isinstance(fill, str):
                    if fill not in baseline_names:
                        raise CohortError(
                            f"fill column {fill!r} is not a baseline covariate")
                elif not math.isfinite(fill):
                    raise CohortError(f"{type(r).__name__}: fill must be finite")

    def to_dicts(self):
        out = []
        for r in self.rules:
            d = {"rule": type(r).__name__}
            d.update(r.__dict__)
            out.append(d)
        return out

    @classmethod
    def from_dicts(cls, items):
        rules = []
        for item in items:
            item = dict(item)
            kind = item.pop("rule", None)
            if kind not in _RULES:
                raise CohortError(f"unknown history rule {kind!r}")
            rules.append(_RULES[kind](**item))
        return cls(tuple(rules))


def _fill_value(subject, fill):
    if isinstance(fill, str):
        return subject.baseline[subject.baseline_names.index(fill)]
    return float(fill)


def feature_states(subject: Subject, spec: HistoryFeatureSpec) -> np.ndarray:
    """Feature vectors after each prefix of the visit list.

    Row ``k`` is ``X(t)`` for any ``t`` preceded by exactly ``k`` visits, so
    the result has shape ``(m + 1, q)``.
    """
    m = len(subject.times)
    out = np.empty((m + 1, spec.q))
    prior = (np.arange(m + 1) > 0).astype(float)
    for j, r in enumerate(spec.rules):
        if isinstance(r, Baseline):
            out[:, j] = subject.baseline[subject.baseline_names.index(r.name)]
        elif isinstance(r, AnyPriorVisitIndicator):
            out[:, j] = prior
        elif isinstance(r, InteractBaselineWithAnyPrior):
            out[:, j] = prior * subject.baseline[
                subject.baseline_names.index(r.name)]
        else:
            col = subject.covariates[:, subject.visit_names.index(r.name)]
            if isinstance(r, LastObserved):
                out[0, j] = _fill_value(subject, r.fill)
                out[1:, j] = col
            elif isinstance(r, InteractLastObservedWithAnyPrior):
                out[0, j] = 0.0
                out[1:, j] = col
            elif isinstance(r, ThresholdLastObserved):
                out[0, j] = _fill_value(subject, r.fill)
                out[1:, j] = (col > r.cutpoint).astype(float)
            else:
                raise CohortError(f"unsupported rule {r!r}")
    return out


def history_features(subject: Subject, spec: HistoryFeatureSpec,
                     t: float) -> np.ndarray:
    """``X(t)`` built from the visits strictly before ``t``."""
    return feature_states(subject, spec)[subject.n_prior(t)]


# ---------------------------------------------------------------------------
# CSV ingestion

def _parse_float(text, path, line, column):
    try:
        value = float(text)
    except ValueError:
        raise CohortError(
            f"{path}:{line}: column {column!r}: cannot parse {text!r}") from None
    return value


def _read_rows(source):
    if hasattr(source, "read"):
        return getattr(source, "name", "<stream>"), list(csv.reader(source))
    with open(source, newline="", encoding="utf-8") as fh:
        return str(source), list(csv.reader(fh))


def load_cohort(subjects_file, visits_file, tau=None) -> Cohort:
    """Read the subjects and visits CSV files.

    ``subjects_file`` has columns ``subject_id, censor_time`` followed by the
    baseline covariates; ``visits_file`` has ``subject_id, time, kind``
    followed by the time-dependent covariates. Empty visit covariate cells
    are read as missing (NaN). Row order in the visits file is irrelevant.
    """
    spath, srows = _read_rows(subjects_file)
    vpath, vrows = _read_rows(visits_file)
    if not srows or [c.strip() for c in srows[0][:2]] != ["subject_id",
                                                          "censor_time"]:
        raise CohortError(
            f"{spath}:1: header must start with subject_id,censor_time")
    if not vrows or [c.strip() for c in vrows[0][:3]] != ["subject_id", "time",
                                                          "kind"]:
        raise CohortError(f"{vpath}:1: header must start with "
                          "subject_id,time,kind")
    baseline_names = tuple(c.strip() for c in srows[0][2:])
    visit_names = tuple(c.strip() for c in vrows[0][3:])
    overlap = set(baseline_names) & set(visit_names)
    if overlap:
        raise CohortError(
            f"covariate columns present in both files: {sorted(overlap)}")

    base = {}
    order = []
    for line, row in enumerate(srows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(srows[0]):
            raise CohortError(f"{spath}:{line}: expected {len(srows[0])} "
                              f"fields, found {len(row)}")
        sid = row[0].strip()
        if sid in base:
            raise CohortError(f"{spath}:{line}: duplicate subject {sid!r}")
        c = _parse_float(row[1], spath, line, "censor_time")
        vals = [_parse_float(x, spath, line, n)
                for x, n in zip(row[2:], baseline_names)]
        base[sid] = (c, vals)
        order.append(sid)

    visits = {sid: [] for sid in order}
    for line, row in enumerate(vrows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != len(vrows[0]):
            raise CohortError(f"{vpath}:{line}: expected {len(vrows[0])} "
                              f"fields, found {len(row)}")
        sid = row[0].strip()
        if sid not in base:
            raise CohortError(f"{vpath}:{line}: unknown subject {sid!r}")
        t = _parse_float(row[1], vpath, line, "time")
        kind = row[2].strip()
        if kind not in _KINDS:
            raise CohortError(f"{vpath}:{line}: kind must be event or "
                              f"nonevent, found {kind!r}")
        if t > base[sid][0]:
            raise CohortError(
                f"{vpath}:{line}: subject {sid!r} visit at t={t!r} after "
                f"censoring time {base[sid][0]!r}")
        cov = [math.nan if not x.strip() else _parse_float(x, vpath, line, n)
               for x, n in zip(row[3:], visit_names)]
        visits[sid].append((t, kind, cov, line))

    subjects = []
    for sid in order:
        rows = visits[sid]
        seen = {}
        for t, kind, _, line in rows:
            if (t, kind) in seen:
                raise CohortError(
                    f"{vpath}:{line}: duplicate ({sid}, {t!r}, {kind}) "
                    f"(first at line {seen[(t, kind)]})")
            seen[(t, kind)] = line
        try:
            subjects.append(make_subject(
                sid, base[sid][0], base[sid][1],
                [(t, k, c) for t, k, c, _ in rows], baseline_names,
                visit_names))
        except CohortError as exc:
            raise CohortError(f"{spath}: {exc}") from None
    return Cohort(tuple(subjects), baseline_names, visit_names, tau)


def _fmt(x):
    return "" if math.isnan(x) else repr(float(x))


def save_cohort(cohort: Cohort, subjects_path, visits_path):
    """Write ``cohort`` in the format read by :func:`load_cohort`."""
    with open(subjects_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "censor_time", *cohort.baseline_names])
        for s in cohort.subjects:
            w.writerow([s.id, _fmt(s.censor_time), *map(_fmt, s.baseline)])
    with open(visits_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject_id", "time", "kind", *cohort.visit_names])
        for s in cohort.subjects:
            for t, e, z in zip(s.times, s.is_event, s.covariates):
                w.writerow([s.id, _fmt(t), EVENT if e else NONEVENT,
                            *map(_fmt, z)])


def cohorts_equal(a: Cohort, b: Cohort) -> bool:
    if (a.baseline_names, a.visit_names, a.tau, a.n) != \
            (b.baseline_names, b.visit_names, b.tau, b.n):
        return False
    for s, r in zip(a.subjects, b.subjects):
        if s.id != r.id or s.censor_time != r.censor_time:
            return False
        for x, y in ((s.baseline, r.baseline), (s.times, r.times),
                     (s.is_event, r.is_event), (s.covariates, r.covariates)):
            if x.shape != y.shape or not np.array_equal(x, y, equal_nan=True):
                return False
    return True
