"""Exact lower confidence bounds for the number of true discoveries.

The bound comes from the exact distribution of the number of rejections of
a step-up test when p-values are independent, ``m1`` of them follow a known
alternative CDF and the rest are uniform.
"""

__version__ = "0.1.0"

from .bound import BoundResult, GammaTable, compute_bound, gamma_for, gamma_star
from .calibration import (
    CalibrationResult,
    CalibrationSpec,
    LambdaSearch,
    TargetUnattainable,
    max_lambda_for_target,
    objective_sum_expectation,
    objective_sum_variance,
    select_critical_vector,
)
from .effect_size import EffectSizeEstimate, ThresholdRule, estimate_theta, select_statistics, split_subjects
from .errors import DimensionError, DomainError, ParameterError, SizeError, TdpError, ValidityError
from .gs_baseline import GsResult, gs_bound, gs_bound_oracle
from .order_stats import TwoGroupSample, joint_orderstat_cdf, upper_survival_orderstat
from .pvalue_model import AltPValueCdf, TDistParams, alt_pvalue_cdf, noncentral_t_cdf, noncentral_t_quantile
from .simulation import MethodSpec, ScenarioConfig, ScenarioSummary, gen_dataset, run_scenario, ttest_maps
from .stepup import (
    CriticalVector,
    RejectionEngine,
    RejectionPmf,
    TwoGroupModel,
    make_critical_vector,
    rejection_moments,
    rejection_pmf,
    stepup_reject,
)
