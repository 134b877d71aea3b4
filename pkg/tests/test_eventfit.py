from types import SimpleNamespace

import numpy as np
import pytest

from recurrent_ehr import (Cohort, HistoryFeatureSpec, KernelConfig,
                           NoEventsError, SolverConfig, ZeroDenominatorError,
                           baseline_cumulative_oracle,
                           baseline_cumulative_proposed, fit_full_oracle,
                           fit_locf, fit_ppl, fit_proposed, generate_cohort,
                           make_subject, scenario_preset)
from recurrent_ehr.cohort import CohortError
from recurrent_ehr.eventfit import smoothed_score
from recurrent_ehr.simlab import LOCF_FILL, VISIT_SPEC, Z_NAMES

KERNEL = KernelConfig(zero_denominator_policy="drop_term")


@pytest.fixture(scope="module")
def sim():
    return generate_cohort(scenario_preset("II", n=150), 3)


def _fits(c):
    return {
        "proposed": fit_proposed(c, VISIT_SPEC, KERNEL, covariates=Z_NAMES),
        "ppl": fit_ppl(c, KERNEL, covariates=Z_NAMES),
        "locf": fit_locf(c, covariates=Z_NAMES, fill=LOCF_FILL),
    }


def test_proposed_with_empty_spec_is_ppl(sim):
    a = fit_proposed(sim.cohort, HistoryFeatureSpec(), KERNEL,
                     covariates=Z_NAMES)
    b = fit_ppl(sim.cohort, KERNEL, covariates=Z_NAMES)
    assert np.array_equal(a.beta_hat, b.beta_hat)
    assert a.iterations == b.iterations
    assert np.array_equal(a.baseline_cumulative[1], b.baseline_cumulative[1])


def test_score_norms_and_reevaluation(sim):
    fits = _fits(sim.cohort)
    for f in fits.values():
        assert f.score_norm < 1e-8
    p = fits["proposed"]
    again = smoothed_score(sim.cohort, VISIT_SPEC, p.beta_hat,
                           p.visit_fit.alpha_hat, KERNEL, Z_NAMES)
    assert abs(np.max(np.abs(again)) - p.score_norm) < 1e-12
    assert fit_full_oracle(sim).score_norm < 1e-8


def test_translation_invariance(sim):
    base = _fits(sim.cohort)
    c = sim.cohort
    for name, shift in (("Z1", 0.7), ("Z2", -1.3), ("Z3", 2.0)):
        c = c.shifted(name, shift)
    # the visit model sees shifted features too; X fills follow the data
    for col, shift in (("Z2_0", -1.3), ("Z3_0", 2.0)):
        c = c.shifted(col, shift)
    moved = _fits(c)
    for m in base:
        assert np.allclose(moved[m].beta_hat, base[m].beta_hat, rtol=0,
                           atol=1e-10), m


def test_oracle_translation(sim):
    shifted = SimpleNamespace(
        cohort=sim.cohort.shifted("Z1", 0.5).shifted("Z2", 0.5)
        .shifted("Z3", 0.5),
        z_names=sim.z_names,
        true_covariates=lambda t: sim.true_covariates(t) + 0.5)
    a = fit_full_oracle(sim).beta_hat
    b = fit_full_oracle(shifted).beta_hat
    assert np.allclose(a, b, rtol=0, atol=1e-10)


def test_scale_covariance(sim):
    base = _fits(sim.cohort)
    c = sim.cohort.scaled("Z3", 2.0).scaled("Z3_0", 2.0)
    scaled = _fits(c)
    for m in base:
        expect = base[m].beta_hat.copy()
        expect[2] /= 2.0
        assert np.allclose(scaled[m].beta_hat, expect, rtol=1e-8, atol=1e-10)
    a = base["proposed"].visit_fit.alpha_hat
    b = scaled["proposed"].visit_fit.alpha_hat
    assert np.allclose(b, a * np.array([1, 1, 0.5]), rtol=1e-8, atol=1e-10)


def test_locf_matches_oracle_for_constant_covariates(sim):
    c = sim.cohort

    def freeze(s):
        cov = np.tile(s.baseline[1:3], (len(s.times), 1))
        return s.with_visits(s.times, s.is_event, cov)

    frozen = c.map_subjects(freeze)
    base = np.array([s.baseline[:3] for s in frozen.subjects])
    fake = SimpleNamespace(
        cohort=frozen, z_names=Z_NAMES,
        true_covariates=lambda t: np.broadcast_to(base, (len(t),) + base.shape))
    a = fit_locf(frozen, covariates=Z_NAMES, fill=LOCF_FILL)
    b = fit_full_oracle(fake)
    assert np.allclose(a.beta_hat, b.beta_hat, rtol=0, atol=1e-10)


def test_locf_continuity_and_fill():
    subs = (make_subject("a", 3.0, [], [(1.0, "nonevent", [1.0]),
                                        (2.0, "event", [5.0])], (), ("Z",)),
            make_subject("b", 3.0, [], [(0.5, "event", [0.0]),
                                        (1.5, "nonevent", [2.0])], (), ("Z",)),
            make_subject("c", 3.0, [], [], (), ("Z",)))
    c = Cohort(subs, (), ("Z",))
    with pytest.raises(CohortError, match="no visits"):
        fit_locf(c)
    with pytest.raises(ValueError):
        fit_locf(c, fill={"Z": 0.0}, continuity="middle")
    left = fit_locf(c, fill={"Z": 0.0})
    right = fit_locf(c, fill={"Z": 0.0}, continuity="right")
    assert left.score_norm < 1e-8 and right.score_norm < 1e-8
    assert not np.allclose(left.beta_hat, right.beta_hat)


def test_baseline_curves_monotone(sim):
    for f in _fits(sim.cohort).values():
        t, v = f.baseline_cumulative
        assert t[0] == 0.0 and v[0] == 0.0
        assert np.all(np.diff(v) >= 0)
        assert f.baseline_at(0.0) == 0.0
    o = fit_full_oracle(sim)
    assert baseline_cumulative_oracle(sim, o, 0.0) == 0.0
    vals = [baseline_cumulative_oracle(sim, o, t) for t in (1, 2, 3, 4)]
    assert np.all(np.diff(vals) >= 0)
    tau_val = baseline_cumulative_oracle(sim, o, sim.cohort.tau)
    assert tau_val == pytest.approx(o.baseline_cumulative[1][-1])
    p = fit_proposed(sim.cohort, VISIT_SPEC, KERNEL, covariates=Z_NAMES)
    assert baseline_cumulative_proposed(sim.cohort, VISIT_SPEC, p, KERNEL,
                                        2.0) == p.baseline_at(2.0)


def test_zero_denominator_policy(sim):
    c = sim.cohort
    with pytest.raises(ZeroDenominatorError):
        fit_ppl(c, KernelConfig(h=0.01), covariates=Z_NAMES)
    f = fit_ppl(c, KernelConfig(h=0.05, zero_denominator_policy="drop_term"),
                covariates=Z_NAMES)
    assert f.dropped_event_terms > 0
    ok = fit_ppl(c, KernelConfig(h=1.0), covariates=Z_NAMES)
    assert ok.dropped_event_terms == 0


def test_no_events():
    subs = tuple(make_subject(f"s{i}", 3.0, [0.1 * i],
                              [(1.0, "nonevent", [])], ("X",), ())
                 for i in range(3))
    c = Cohort(subs, ("X",), ())
    for fitter in (lambda: fit_ppl(c), lambda: fit_locf(c),
                   lambda: fit_proposed(c, HistoryFeatureSpec())):
        with pytest.raises(NoEventsError):
            fitter()


def test_solver_settings(sim):
    with pytest.raises(ValueError):
        SolverConfig(tolerance=0)
    start = fit_ppl(sim.cohort, KERNEL, covariates=Z_NAMES)
    warm = fit_ppl(sim.cohort, KERNEL,
                   SolverConfig(initial_beta=tuple(start.beta_hat)),
                   covariates=Z_NAMES)
    assert warm.iterations == 0
    with pytest.raises(ValueError):
        fit_ppl(sim.cohort, KERNEL, SolverConfig(initial_beta=(0.0,)),
                covariates=Z_NAMES)


def test_result_dict(sim):
    d = fit_proposed(sim.cohort, VISIT_SPEC, KERNEL,
                     covariates=Z_NAMES).to_dict()
    assert d["method"] == "proposed"
    assert set(d["beta"]) == set(Z_NAMES)
    assert "visit_model" in d and "baseline_cumulative" in d
