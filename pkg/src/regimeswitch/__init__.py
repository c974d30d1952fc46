"""Markov-regime autoregressions: likelihood, sampling, estimation, testing, selection."""

from .errors import (
    DegenerateDesignError,
    DegenerateStatsError,
    InvalidInputError,
    NumericalError,
    RegimeSwitchError,
    SizeGuardError,
)
from .estimation import (
    FitResult,
    GammaSchedule,
    SaemConfig,
    SufficientStats,
    em_fit,
    flatten_params,
    gamma_schedule,
    mstep_ar,
    mstep_hmm,
    param_names,
    saem_fit,
    update_stats,
)
from .likelihood import (
    FilterBank,
    SmoothedMoments,
    brute_force_likelihood,
    emission_log_matrix,
    emission_logdensity,
    forward_backward,
    forward_filter,
    q_function,
    smooth,
)
from .marginal import (
    Priors,
    build_design_matrix,
    flatten_theta,
    log_marginal_observations,
    log_marginal_path,
    marginal_ratio_bound,
    path_bound_correction,
)
from .model import (
    ConditionReport,
    ModelKind,
    ModelSpec,
    ObservationSeries,
    canonicalize,
    check_conditions,
    simulate,
    stationary_distribution,
    validate_path,
)
from .sampler import exact_posterior_enumeration, sample_path
from .selection import (
    LrtResult,
    SelectionResult,
    SelectionRow,
    best_fit,
    chi2_quantile,
    lrt_test,
    model_dimension,
    penalty,
    select_states,
)

__all__ = [
    "ConditionReport",
    "DegenerateDesignError",
    "DegenerateStatsError",
    "FilterBank",
    "FitResult",
    "GammaSchedule",
    "InvalidInputError",
    "LrtResult",
    "ModelKind",
    "ModelSpec",
    "NumericalError",
    "ObservationSeries",
    "Priors",
    "RegimeSwitchError",
    "SaemConfig",
    "SelectionResult",
    "SelectionRow",
    "SizeGuardError",
    "SmoothedMoments",
    "SufficientStats",
    "best_fit",
    "brute_force_likelihood",
    "build_design_matrix",
    "canonicalize",
    "check_conditions",
    "chi2_quantile",
    "em_fit",
    "emission_log_matrix",
    "emission_logdensity",
    "exact_posterior_enumeration",
    "flatten_params",
    "flatten_theta",
    "forward_backward",
    "forward_filter",
    "gamma_schedule",
    "log_marginal_observations",
    "log_marginal_path",
    "lrt_test",
    "marginal_ratio_bound",
    "model_dimension",
    "mstep_ar",
    "mstep_hmm",
    "param_names",
    "path_bound_correction",
    "penalty",
    "q_function",
    "saem_fit",
    "sample_path",
    "select_states",
    "simulate",
    "smooth",
    "stationary_distribution",
    "update_stats",
    "validate_path",
]
