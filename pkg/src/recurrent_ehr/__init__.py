"""Proportional rate models for recurrent events with covariates observed
only at informative clinical visits."""

from ._newton import SolverConfig
from .cohort import (AnyPriorVisitIndicator, Baseline, Cohort,
                     HistoryFeatureSpec, InteractBaselineWithAnyPrior,
                     InteractLastObservedWithAnyPrior, LastObserved, Subject,
                     ThresholdLastObserved, Visit, counting_state,
                     history_features, load_cohort, make_subject, save_cohort)
from .errors import (BootstrapError, CohortError, ConvergenceError,
                     EmptyRiskSetError, FittingError, NoEventsError,
                     SingularInformationError, ZeroDenominatorError)
from .eventfit import (RateModelFit, baseline_cumulative_oracle,
                       baseline_cumulative_proposed, fit_full_oracle,
                       fit_locf, fit_ppl, fit_proposed)
from .inference import BootstrapResult, bootstrap
from .simlab import (ScenarioConfig, SimulatedCohort, generate_cohort,
                     run_scenario, scenario_preset, thinning_sample)
from .smoothing import (KernelConfig, SmoothedMoments, kernel_weight,
                        ppl_mean, resolve_bandwidth, smoothed_moments,
                        visit_mean, weighted_covariate_mean)
from .visitfit import VisitModelFit, baseline_visit_rate, fit_visit_model
from .vnarfit import DisjointFit, DisjointPartition, fit_disjoint

__version__ = "0.1.0"
