"""Standard errors by resampling subjects.

Each replicate draws subjects with replacement (whole visit histories
travel together), refits both stages, and the spread of the replicate
estimates gives the standard error. The seed fixes every resample, so the
result does not depend on how many workers run it.
"""
from recurrent_ehr import (bootstrap, fit_proposed, generate_cohort,
                           scenario_preset)
from recurrent_ehr.simlab import VISIT_SPEC, Z_NAMES

config = scenario_preset("II", n=300)
cohort = generate_cohort(config, 3).cohort


def fitter(c):
    return fit_proposed(c, VISIT_SPEC, config.kernel, covariates=Z_NAMES)


result = bootstrap(cohort, fitter, B=50, seed=7)
for name, est, se, (lo, hi) in zip(Z_NAMES, result.estimate, result.se,
                                   result.ci_normal):
    print(f"{name}: {est:+.3f}  se {se:.3f}  95% CI ({lo:+.3f}, {hi:+.3f})")
print(f"{result.n_failed} of {result.B} replicates failed")
