import numpy as np
import pytest

from recurrent_ehr import (DisjointPartition, KernelConfig, fit_disjoint,
                           generate_cohort, scenario_preset)
from recurrent_ehr.eventfit import smoothed_score
from recurrent_ehr.vnarfit import disjoint_scores

KERNEL = KernelConfig(zero_denominator_policy="drop_term")
PART = DisjointPartition(("Z1", "Z2", "Z3"), ("W",))


@pytest.fixture(scope="module")
def cohort():
    return generate_cohort(scenario_preset("Disjoint", n=300), 1).cohort


@pytest.fixture(scope="module")
def fit(cohort):
    return fit_disjoint(cohort, PART, KERNEL)


def test_partition_validation():
    with pytest.raises(ValueError, match="both"):
        DisjointPartition(("Z1", "W"), ("W",))
    with pytest.raises(ValueError):
        DisjointPartition((), ("W",))
    assert PART.swapped() == DisjointPartition(("W",), ("Z1", "Z2", "Z3"))


def test_scores_vanish(fit):
    assert max(fit.score_norms) < 1e-8
    assert fit.beta_hat.shape == (3,) and fit.theta_hat.shape == (1,)
    assert fit.to_dict()["theta"].keys() == {"W"}


def test_role_swap_symmetry(cohort, fit):
    swapped = fit_disjoint(cohort.swap_kinds(), PART.swapped(), KERNEL)
    assert np.allclose(swapped.beta_hat, fit.theta_hat, atol=1e-7)
    assert np.allclose(swapped.theta_hat, fit.beta_hat, atol=1e-7)


def test_event_score_at_zero_theta_is_ppl_score(cohort):
    beta = np.array([-0.8, -1.1, 0.9])
    s4, _ = disjoint_scores(cohort, PART, beta, np.zeros(1), KERNEL)
    ppl = smoothed_score(cohort, None, beta, [], KERNEL, PART.z_names)
    assert np.allclose(s4, ppl, rtol=0, atol=1e-13)


def test_unknown_names_and_collinearity(cohort):
    from recurrent_ehr import CohortError
    with pytest.raises(CohortError):
        fit_disjoint(cohort, DisjointPartition(("Z1",), ("nope",)), KERNEL)
    near = cohort.map_subjects(
        lambda s: s.with_visits(
            s.times, s.is_event,
            np.column_stack([s.covariates[:, :2], s.covariates[:, 0]])))
    with pytest.warns(RuntimeWarning, match="collinear"):
        try:
            fit_disjoint(near, PART, KERNEL)
        except Exception:
            pass
