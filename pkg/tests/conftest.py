import numpy as np
import pytest

from recurrent_ehr import Cohort, make_subject


def random_cohort(seed, n=6, visit_names=("Z2", "Z3"), baseline_names=("Z1",),
                  mean_visits=4.0, tau=None):
    """Small irregular cohort with random visit times and covariates."""
    rng = np.random.default_rng(seed)
    subjects = []
    for i in range(n):
        c = rng.uniform(2.0, 5.0)
        m = rng.poisson(mean_visits) + 2
        times = np.sort(rng.uniform(0.01, c, m))
        kinds = ["event" if k % 2 else "nonevent" for k in range(m)]
        rng.shuffle(kinds)
        kinds[0] = "nonevent"
        kinds[-1] = "event"
        visits = [(t, k, rng.normal(size=len(visit_names)))
                  for t, k in zip(times, kinds)]
        subjects.append(make_subject(f"s{i}", c, rng.uniform(-0.5, 0.5,
                                                             len(baseline_names)),
                                     visits, baseline_names, visit_names))
    return Cohort(tuple(subjects), tuple(baseline_names), tuple(visit_names),
                  tau)


@pytest.fixture
def small_cohort():
    return random_cohort(11)


ACCEPTANCE_LINES = []


def record_criterion(number, passed, detail):
    """Remember one acceptance verdict and echo it immediately."""
    line = f"ACCEPTANCE {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
