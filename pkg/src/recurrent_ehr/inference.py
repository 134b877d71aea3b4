"""Nonparametric bootstrap over subjects."""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy.stats import norm

from .cohort import Cohort
from .errors import BootstrapError, FittingError

Z975 = float(norm.ppf(0.975))


@dataclass
class BootstrapResult:
    estimate: np.ndarray
    replicates: np.ndarray
    failures: List[Tuple[int, str]]
    seed: int
    se: np.ndarray = field(init=False)
    ci_normal: np.ndarray = field(init=False)
    ci_percentile: np.ndarray = field(init=False)

    def __post_init__(self):
        ok = self.replicates[~np.isnan(self.replicates).any(axis=1)]
        self.se = ok.std(axis=0, ddof=1) if len(ok) > 1 else \
            np.full(ok.shape[1], np.nan)
        self.ci_normal = np.column_stack([self.estimate - Z975 * self.se,
                                          self.estimate + Z975 * self.se])
        self.ci_percentile = np.percentile(ok, [2.5, 97.5], axis=0).T

    @property
    def B(self):
        return len(self.replicates)

    @property
    def n_failed(self):
        return len(self.failures)

    def to_dict(self, names=None):
        names = list(names) if names is not None else \
            [f"b{j}" for j in range(len(self.estimate))]
        return {
            "B": self.B,
            "seed": self.seed,
            "n_failed": self.n_failed,
            "failures": [{"replicate": r, "reason": m}
                         for r, m in self.failures],
            "se": dict(zip(names, map(float, self.se))),
            "ci_normal": {k: list(map(float, v))
                          for k, v in zip(names, self.ci_normal)},
            "ci_percentile": {k: list(map(float, v))
                              for k, v in zip(names, self.ci_percentile)},
        }

    def replicates_csv(self, path, names=None):
        import csv
        names = list(names) if names is not None else \
            [f"b{j}" for j in range(len(self.estimate))]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["replicate", *names])
            for r, row in enumerate(self.replicates):
                w.writerow([r, *["" if np.isnan(v) else repr(float(v))
                                 for v in row]])


def resample_indices(n, seed, replicate):
    """Subject indices of bootstrap replicate ``replicate``.

    Depends only on ``(seed, replicate)``.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed,
                                                       spawn_key=(replicate,)))
    return rng.integers(0, n, n)


def _coefficients(result):
    for attr in ("beta_hat", "coefficients"):
        if hasattr(result, attr):
            return np.asarray(getattr(result, attr), dtype=float)
    return np.asarray(result, dtype=float).reshape(-1)


def _replicate(cohort, fitter, seed, r):
    idx = resample_indices(cohort.n, seed, r)
    try:
        return _coefficients(fitter(cohort.resample(idx))), None
    except (FittingError, ValueError, np.linalg.LinAlgError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def bootstrap(cohort: Cohort, fitter: Callable, B: int = 100, seed: int = 0,
              n_jobs: int = 1, max_failure_fraction: float = 0.1
              ) -> BootstrapResult:
    """Refit ``fitter`` on ``B`` subject-level resamples of ``cohort``.

    ``fitter`` maps a cohort to a fit (anything with ``beta_hat`` or
    ``coefficients``) or directly to a coefficient vector. Failed replicates
    are kept as NaN rows with their reasons; more than
    ``max_failure_fraction`` failures abort the run.
    """
    if B < 2:
        raise ValueError("bootstrap needs B >= 2")
    estimate = _coefficients(fitter(cohort))
    if n_jobs == 1:
        out = [_replicate(cohort, fitter, seed, r) for r in range(B)]
    else:
        from joblib import Parallel, delayed
        out = Parallel(n_jobs=n_jobs)(
            delayed(_replicate)(cohort, fitter, seed, r) for r in range(B))
    reps = np.full((B, len(estimate)), np.nan)
    failures = []
    for r, (coef, reason) in enumerate(out):
        if coef is None:
            failures.append((r, reason))
        else:
            reps[r] = coef
    if len(failures) == B:
        raise BootstrapError(f"all {B} bootstrap replicates failed; first: "
                             f"{failures[0][1]}")
    if len(failures) > max_failure_fraction * B:
        raise BootstrapError(f"{len(failures)} of {B} bootstrap replicates "
                             f"failed; first: {failures[0][1]}")
    return BootstrapResult(estimate, reps, failures, seed)
