"""Build a tiny cohort by hand and look at what the visit model can see.

A visit model may only use information recorded strictly before the visit
being predicted. This demo prints the history features of one subject at a
few times to make that rule concrete.
"""
from recurrent_ehr import (AnyPriorVisitIndicator, Baseline, Cohort,
                           HistoryFeatureSpec, LastObserved, counting_state,
                           history_features, make_subject)

subject = make_subject(
    "p1", censor_time=4.0, baseline=[0.3],
    visits=[(0.8, "nonevent", [1.2]), (1.5, "event", [0.9]),
            (2.6, "nonevent", [2.0])],
    baseline_names=("age",), visit_names=("bmi",))
other = make_subject("p2", 3.0, [-0.1], [(1.1, "event", [0.4])],
                     ("age",), ("bmi",))
cohort = Cohort((subject, other), ("age",), ("bmi",))
print(f"{cohort.n} subjects, covariates {cohort.covariate_registry}")

spec = HistoryFeatureSpec((Baseline("age"), AnyPriorVisitIndicator(),
                           LastObserved("bmi", 0.0)))
print("features:", spec.labels())
for t in (0.5, 0.8, 1.0, 2.6, 3.5):
    state = counting_state(subject, t)
    print(f"t={t:>4}: X(t)={history_features(subject, spec, t)}  "
          f"events before={state.events_before}, "
          f"other visits before={state.nonevents_before}")

# The visit at 0.8 is not part of X(0.8): the value only switches on just
# after the visit has been recorded.
