"""When visits depend on something the event model does not contain.

Here non-event visits are driven by an auxiliary process W(t) that is
observed only at visits and has no effect on events. Solving the two
smoothed scores jointly recovers both the event coefficients and the
visit-side coefficient theta = -0.5.
"""
from recurrent_ehr import (DisjointPartition, fit_disjoint, generate_cohort,
                           scenario_preset)
from recurrent_ehr.simlab import Z_NAMES

config = scenario_preset("Disjoint", n=800)
cohort = generate_cohort(config, 0).cohort
fit = fit_disjoint(cohort, DisjointPartition(Z_NAMES, ("W",)), config.kernel)
print("beta :", ", ".join(f"{v:+.3f}" for v in fit.beta_hat),
      " truth", config.beta.tolist())
print("theta:", f"{fit.theta_hat[0]:+.3f}", " truth", config.theta)
print("score norms:", ", ".join(f"{v:.1e}" for v in fit.score_norms))
