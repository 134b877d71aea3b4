"""Simulation of informatively observed recurrent-event cohorts.

Each subject carries

* ``Z1 ~ U[-0.5, 0.5]``, a baseline covariate;
* ``Z2(t)``, a 0/1 renewal process with exponential sojourns of rate
  ``xi ~ Gamma(mean 1, var 0.2)`` and ``P(Z2(0) = 1) = 0.5``;
* ``Z3(t) = sin(pi t + w1)`` and the latent ``L(t) = sin(pi t + w2)`` with
  uniform phases;
* optionally ``W(t)``, an independent renewal process entering only the
  non-event visit intensity (``Disjoint`` preset).

Event visits follow the intensity
``t exp(bB Z1 + bT1 Z2(t) + bT2 Z3(t) + g1 L(t) - 1)`` and non-event visits
``exp(a1 Z1 + a2 X2(t) + a3 X3(t) + a4 Z2(t) + a5 Z3(t) + g2 L(t) + th W(t))``
where ``X2``, ``X3`` are the values of ``Z2``, ``Z3`` seen at the most recent
visit of either kind (their time-zero values before any visit). Both
processes are simulated together by competing thinning, refreshing the
observed state after every accepted point.
"""

import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ._newton import SolverConfig
from .cohort import (Baseline, Cohort, HistoryFeatureSpec, LastObserved,
                     Subject)
from .errors import FittingError, ThinningBoundError
from .smoothing import KernelConfig

Z_NAMES = ("Z1", "Z2", "Z3")
VISIT_SPEC = HistoryFeatureSpec((Baseline("Z1"), LastObserved("Z2", "Z2_0"),
                                 LastObserved("Z3", "Z3_0")))
LOCF_FILL = {"Z2": "Z2_0", "Z3": "Z3_0"}
METHODS = ("proposed", "ppl", "locf", "locf_true0", "disjoint")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "custom"
    alpha1: float = 0.0
    alpha2: float = 0.0
    alpha3: float = 0.0
    alpha4: float = 0.0
    alpha5: float = 0.0
    gamma1: float = 0.0
    gamma2: float = 0.0
    beta_B: float = -1.0
    beta_T1: float = -1.0
    beta_T2: float = 1.0
    theta: Optional[float] = None
    n: int = 200
    reps: int = 200
    seed: int = 2024
    kernel: KernelConfig = field(default_factory=lambda: KernelConfig(
        zero_denominator_policy="drop_term"))
    censor_max: float = 5.0
    frailty_mean: float = 1.0
    frailty_variance: float = 0.2
    tau: Optional[float] = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.reps < 1:
            raise ValueError("reps must be at least 1")
        if not self.censor_max > 0:
            raise ValueError("censor_max must be positive")
        if self.frailty_variance < 0 or not self.frailty_mean > 0:
            raise ValueError("invalid frailty distribution")

    @property
    def beta(self):
        return np.array([self.beta_B, self.beta_T1, self.beta_T2])

    @property
    def disjoint(self):
        return self.theta is not None


_VAR_LIST = {
    "I": {},
    "II": dict(alpha1=-0.5, alpha2=-0.5, alpha3=0.5),
    "III": dict(alpha1=-1.0, alpha2=-1.0, alpha3=1.0),
    "IV": dict(gamma1=1.0, gamma2=1.0),
    "V": dict(alpha1=-0.5, alpha2=-0.5, alpha3=0.5, gamma1=1.0, gamma2=1.0),
    "VI": dict(alpha1=-1.0, alpha2=-1.0, alpha3=1.0, gamma1=1.0, gamma2=1.0),
}
_VNAR_COMMON = dict(alpha1=-1.0, gamma1=1.0, gamma2=1.0)
_VNAR_LIST = {
    "VII": dict(alpha2=-1.0, alpha4=0.0, alpha3=0.5, alpha5=0.5),
    "VIII": dict(alpha2=-0.5, alpha4=-0.5, alpha3=1.0, alpha5=0.0),
    "IX": dict(alpha2=-0.5, alpha4=-0.5, alpha3=0.5, alpha5=0.5),
    "X": dict(alpha2=0.0, alpha3=0.0, alpha4=-0.5, alpha5=0.5),
}
PRESETS = tuple(_VAR_LIST) + tuple(_VNAR_LIST) + ("GammaShift", "Disjoint")


def scenario_preset(name: str, **overrides) -> ScenarioConfig:
    """Parameter set of a named scenario.

    ``GammaShift`` lets the non-event visit rate depend on the current
    covariates only, ``exp(0.5 Z1 + 0.5 Z2(t) + 0.5 Z3(t))``. ``Disjoint``
    drives non-event visits by an independent renewal process ``W(t)`` with
    coefficient ``theta = -0.5``.
    """
    if name in _VAR_LIST:
        params = dict(_VAR_LIST[name])
    elif name in _VNAR_LIST:
        params = dict(_VNAR_COMMON, **_VNAR_LIST[name])
    elif name == "GammaShift":
        params = dict(alpha1=0.5, alpha4=0.5, alpha5=0.5)
    elif name == "Disjoint":
        params = dict(theta=-0.5)
    else:
        raise ValueError(f"unknown scenario {name!r}; choose from "
                         f"{', '.join(PRESETS)}")
    params.update(overrides)
    return ScenarioConfig(name=name, **params)


def gamma_shift_target(config: ScenarioConfig):
    """Probability limit of the unweighted estimator when visits depend on
    the current covariates through ``gamma = (a1, a4, a5)``."""
    return config.beta - np.array([config.alpha1, config.alpha4,
                                   config.alpha5])


def true_cumulative_baseline(config: ScenarioConfig, t):
    """``M0(t) = int_0^t u E[exp(g1 L(u) - 1)] du = I0(g1) t^2 / (2e)``."""
    from scipy.special import i0
    return float(i0(config.gamma1)) * t * t / (2.0 * math.e)


def thinning_sample(intensity: Callable[[float], float], bound: float,
                    horizon: float, rng: np.random.Generator) -> np.ndarray:
    """Lewis-Shedler thinning on ``[0, horizon]``.

    ``intensity`` must not exceed ``bound``; a violation found at a proposal
    raises :class:`ThinningBoundError`.
    """
    out = []
    if bound <= 0:
        return np.zeros(0)
    t = 0.0
    while True:
        t += rng.exponential(1.0 / bound)
        if t > horizon:
            break
        lam = intensity(t)
        if lam > bound * (1 + 1e-12):
            raise ThinningBoundError(
                f"intensity {lam:.6g} exceeds bound {bound:.6g} at t={t:.6g}")
        if rng.random() * bound < lam:
            out.append(t)
    return np.array(out)


def _renewal_path(rng, rate, horizon):
    """Jump times of an alternating 0/1 process on ``[0, horizon]``."""
    jumps = []
    t = 0.0
    while True:
        t += rng.exponential(1.0 / rate)
        if t > horizon:
            return np.array(jumps)
        jumps.append(t)


def _frailty(rng, config):
    if config.frailty_variance == 0:
        return config.frailty_mean
    shape = config.frailty_mean ** 2 / config.frailty_variance
    return rng.gamma(shape, config.frailty_variance / config.frailty_mean)


def _state(init, jumps, t):
    """Left-continuous value of a renewal process at ``t``."""
    return (init + np.searchsorted(jumps, t, side="left")) % 2


@dataclass
class SimulatedCohort:
    """Observed cohort plus the latent paths needed to evaluate truth."""

    cohort: Cohort
    config: ScenarioConfig
    z1: np.ndarray
    z2_init: np.ndarray
    z2_jumps: List[np.ndarray]
    w1: np.ndarray
    w2: np.ndarray
    xi: np.ndarray
    w_init: Optional[np.ndarray] = None
    w_jumps: Optional[List[np.ndarray]] = None
    z_names: tuple = Z_NAMES

    @property
    def n(self):
        return self.cohort.n

    def true_covariates(self, times) -> np.ndarray:
        """``Z_j(t)`` for every time and subject, shape ``(len(t), n, 3)``."""
        times = np.asarray(times, dtype=float)
        out = np.empty((len(times), self.n, 3))
        out[:, :, 0] = self.z1[None, :]
        for j in range(self.n):
            out[:, j, 1] = _state(self.z2_init[j], self.z2_jumps[j], times)
        out[:, :, 2] = np.sin(np.pi * times[:, None] + self.w1[None, :])
        return out

    def true_w(self, times):
        times = np.asarray(times, dtype=float)
        return np.column_stack([_state(self.w_init[j], self.w_jumps[j], times)
                                for j in range(self.n)])

    def latent(self, times):
        times = np.asarray(times, dtype=float)
        return np.sin(np.pi * times[:, None] + self.w2[None, :])


def _bounds(config, z1, censor):
    ev = censor * math.exp(config.beta_B * z1 + max(config.beta_T1, 0.0)
                           + abs(config.beta_T2) + abs(config.gamma1) - 1.0)
    ne = math.exp(config.alpha1 * z1 + max(config.alpha2, 0.0)
                  + abs(config.alpha3) + max(config.alpha4, 0.0)
                  + abs(config.alpha5) + abs(config.gamma2)
                  + (max(config.theta, 0.0) if config.disjoint else 0.0))
    return ev, ne


def _simulate_subject(rng, config, z1, z2_0, z2_jumps, w1, w2, censor,
                      w_0=None, w_jumps=None):
    c = config
    ev_bound, ne_bound = _bounds(c, z1, censor)
    total = ev_bound + ne_bound
    times, kinds, rows = [], [], []
    x2 = float(z2_0)
    x3 = math.sin(w1)
    t = 0.0
    pi = math.pi
    while True:
        t += rng.exponential(1.0 / total)
        if t > censor:
            break
        z2 = float((z2_0 + np.searchsorted(z2_jumps, t, side="left")) % 2)
        z3 = math.sin(pi * t + w1)
        lat = math.sin(pi * t + w2)
        lam_ev = t * math.exp(c.beta_B * z1 + c.beta_T1 * z2 + c.beta_T2 * z3
                              + c.gamma1 * lat - 1.0)
        eta = (c.alpha1 * z1 + c.alpha2 * x2 + c.alpha3 * x3 + c.alpha4 * z2
               + c.alpha5 * z3 + c.gamma2 * lat)
        wv = 0.0
        if c.disjoint:
            wv = float((w_0 + np.searchsorted(w_jumps, t, side="left")) % 2)
            eta += c.theta * wv
        lam_ne = math.exp(eta)
        if lam_ev > ev_bound * (1 + 1e-12) or lam_ne > ne_bound * (1 + 1e-12):
            raise ThinningBoundError(
                f"intensity exceeds envelope at t={t:.6g}")
        u = rng.random() * total
        if u < lam_ev:
            kinds.append(True)
        elif u < lam_ev + lam_ne:
            kinds.append(False)
        else:
            continue
        times.append(t)
        rows.append((z2, z3, wv) if c.disjoint else (z2, z3))
        x2, x3 = z2, z3
    return times, kinds, rows


def replicate_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence(seed,
                                                        spawn_key=(index,)))


def generate_cohort(config: ScenarioConfig, rep_index: int = 0
                    ) -> SimulatedCohort:
    """Simulate one cohort; identical for identical ``(config, rep_index)``."""
    rng = replicate_rng(config.seed, rep_index)
    n = config.n
    z1 = rng.uniform(-0.5, 0.5, n)
    xi = np.array([_frailty(rng, config) for _ in range(n)])
    z2_init = (rng.random(n) < 0.5).astype(int)
    w1 = rng.uniform(0.0, 2 * np.pi, n)
    w2 = rng.uniform(0.0, 2 * np.pi, n)
    censor = rng.uniform(0.0, config.censor_max, n)
    z2_jumps = [_renewal_path(rng, xi[i], config.censor_max) for i in range(n)]
    w_init = w_jumps = None
    if config.disjoint:
        w_xi = np.array([_frailty(rng, config) for _ in range(n)])
        w_init = (rng.random(n) < 0.5).astype(int)
        w_jumps = [_renewal_path(rng, w_xi[i], config.censor_max)
                   for i in range(n)]
    baseline_names = ("Z1", "Z2_0", "Z3_0") + (("W_0",) if config.disjoint
                                               else ())
    visit_names = ("Z2", "Z3") + (("W",) if config.disjoint else ())
    subjects = []
    for i in range(n):
        c_i = max(censor[i], 1e-12)
        times, kinds, rows = _simulate_subject(
            rng, config, z1[i], z2_init[i], z2_jumps[i], w1[i], w2[i], c_i,
            None if w_init is None else w_init[i],
            None if w_jumps is None else w_jumps[i])
        base = [z1[i], z2_init[i], math.sin(w1[i])]
        if config.disjoint:
            base.append(w_init[i])
        subjects.append(Subject(
            f"s{i}", c_i, np.array(base, dtype=float), np.array(times),
            np.array(kinds, dtype=bool),
            np.array(rows, dtype=float).reshape(len(times), len(visit_names)),
            baseline_names, visit_names))
    cmax = max(s.censor_time for s in subjects)
    tau = cmax if config.tau is None else min(config.tau, cmax)
    cohort = Cohort(tuple(subjects), baseline_names, visit_names, tau)
    return SimulatedCohort(cohort, config, z1, z2_init, z2_jumps, w1, w2, xi,
                           w_init, w_jumps)


# ---------------------------------------------------------------------------
# replicated experiments

def method_fitter(method: str, config: ScenarioConfig,
                  solver: Optional[SolverConfig] = None):
    """Callable ``cohort -> beta_hat`` for a named method under a scenario."""
    from .eventfit import fit_locf, fit_ppl, fit_proposed
    from .vnarfit import DisjointPartition, fit_disjoint

    kernel = config.kernel
    solver = solver or SolverConfig()
    if method == "proposed":
        return lambda c: fit_proposed(c, VISIT_SPEC, kernel, solver,
                                      Z_NAMES).beta_hat
    if method == "ppl":
        return lambda c: fit_ppl(c, kernel, solver, Z_NAMES).beta_hat
    if method == "locf":
        return lambda c: fit_locf(c, solver, Z_NAMES, fill=LOCF_FILL).beta_hat
    if method == "locf_true0":
        # sensitivity variant: the true time-zero values replace the
        # backward fill before each subject's first visit
        return lambda c: fit_locf(c, solver, Z_NAMES, fill=LOCF_FILL,
                                  initial=LOCF_FILL).beta_hat
    if method == "disjoint":
        part = DisjointPartition(Z_NAMES, ("W",))
        return lambda c: fit_disjoint(c, part, kernel, solver).coefficients
    raise ValueError(f"unknown method {method!r}")


def true_coefficients(config: ScenarioConfig, method: str):
    if method == "disjoint":
        return np.append(config.beta, config.theta)
    return config.beta


def coefficient_names(method: str):
    names = ["beta_B", "beta_T1", "beta_T2"]
    return names + ["theta_W"] if method == "disjoint" else names


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    methods: List[str]
    estimates: Dict[str, np.ndarray]
    boot_se: Dict[str, np.ndarray]
    failures: Dict[str, List[str]]
    elapsed: float = 0.0

    def summary_rows(self):
        rows = []
        for m in self.methods:
            est = self.estimates[m]
            truth = true_coefficients(self.config, m)
            ok = ~np.isnan(est).any(axis=1)
            good = est[ok]
            se_boot = self.boot_se.get(m)
            for j, name in enumerate(coefficient_names(m)):
                bias = float(good[:, j].mean() - truth[j]) if len(good) else \
                    math.nan
                se = float(good[:, j].std(ddof=1)) if len(good) > 1 else \
                    math.nan
                see = cp = math.nan
                if se_boot is not None:
                    ok_b = ok & ~np.isnan(se_boot).any(axis=1)
                    if ok_b.any():
                        sb = se_boot[ok_b, j]
                        b = est[ok_b, j]
                        see = float(sb.mean())
                        cp = float(np.mean(np.abs(b - truth[j])
                                           <= 1.959963984540054 * sb))
                rows.append(dict(scenario=self.config.name, method=m,
                                 coefficient=name, bias=bias, se=se, see=see,
                                 cp=cp, failures=len(self.failures[m])))
        return rows

    def bias(self, method):
        est = self.estimates[method]
        est = est[~np.isnan(est).any(axis=1)]
        return est.mean(axis=0) - true_coefficients(self.config, method)

    def to_csv(self, path_or_buf):
        import csv
        rows = self.summary_rows()
        cols = ["scenario", "method", "coefficient", "bias", "se", "see", "cp",
                "failures"]

        def fmt(v):
            if isinstance(v, float):
                return "" if math.isnan(v) else f"{v:.6f}"
            return v

        own = isinstance(path_or_buf, str) or hasattr(path_or_buf,
                                                      "__fspath__")
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(cols)
            for r in rows:
                w.writerow([fmt(r[c]) for c in cols])
        finally:
            if own:
                fh.close()


def _one_replicate(config, methods, bootstrap_B, rep, solver):
    from .inference import bootstrap
    sim = generate_cohort(config, rep)
    est, se, fail = {}, {}, {}
    for m in methods:
        fitter = method_fitter(m, config, solver)
        p = len(coefficient_names(m))
        try:
            est[m] = np.asarray(fitter(sim.cohort), dtype=float)
            fail[m] = None
        except (FittingError, ValueError) as exc:
            est[m] = np.full(p, np.nan)
            fail[m] = f"rep {rep}: {type(exc).__name__}: {exc}"
            se[m] = np.full(p, np.nan)
            continue
        if bootstrap_B:
            seed = int(np.random.SeedSequence(
                config.seed, spawn_key=(rep, 1 + methods.index(m))
            ).generate_state(1)[0])
            try:
                br = bootstrap(sim.cohort, fitter, bootstrap_B, seed)
                se[m] = br.se
            except Exception as exc:  # recorded, summary excludes it
                se[m] = np.full(p, np.nan)
                fail[m] = f"rep {rep}: bootstrap: {exc}"
    return est, se, fail


def run_scenario(config: ScenarioConfig, methods: Sequence[str] = ("proposed",
                                                                   "ppl",
                                                                   "locf"),
                 bootstrap_B: Optional[int] = None, n_jobs: int = 1,
                 solver: Optional[SolverConfig] = None) -> ScenarioResult:
    """Replicate a scenario ``config.reps`` times and collect estimates.

    Results depend only on ``config`` (and ``bootstrap_B``); ``n_jobs`` sets
    the number of worker processes.
    """
    methods = list(methods)
    start = time.perf_counter()
    reps = range(config.reps)
    if n_jobs == 1:
        out = [_one_replicate(config, methods, bootstrap_B, r, solver)
               for r in reps]
    else:
        from joblib import Parallel, delayed
        out = Parallel(n_jobs=n_jobs)(
            delayed(_one_replicate)(config, methods, bootstrap_B, r, solver)
            for r in reps)
    estimates = {m: np.array([o[0][m] for o in out]) for m in methods}
    boot = {m: np.array([o[1][m] for o in out]) for m in methods} \
        if bootstrap_B else {}
    failures = {m: [o[2][m] for o in out if o[2][m]] for m in methods}
    return ScenarioResult(config, methods, estimates, boot, failures,
                          time.perf_counter() - start)
