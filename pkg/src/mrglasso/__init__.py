"""Multi-resolution group lasso for sparse additive models.

A response is modeled as a sum of univariate components, each expanded in
dyadic blocks of basis functions; a group lasso over the (component, level)
blocks with level-dependent penalties adapts to unknown smoothness and
sparsity.  The package provides the block basis and grouped designs, the
exact convex solver with its optimality certificate, penalty schedules,
synthetic-data generation, and a diagnostics suite that evaluates every
bound-side quantity of the estimator's oracle inequalities.
"""

from .basis import (
    FOURIER,
    HAAR,
    NONPARAMETRIC,
    BasisFamily,
    GroupedDesign,
    Nonparametric,
    Parametric,
    ResolutionScheme,
    assemble_design,
    block_size,
    eval_basis,
    make_scheme,
    rescale_unit,
)
from .model import (
    Scenario,
    TruthSpec,
    approx_tail_constant,
    component_values,
    make_decay_truth,
    out_of_sample_error,
    population_complexity,
    population_l2_norm2,
    population_sobolev,
    scenario_from_config,
    scenario_to_json,
    simulate,
    tail_l2_norm2,
    truth_values,
)
from .penalties import (
    PenaltySchedule,
    complexity_units,
    estimate_sigma,
    majorization_failure_bound,
    noise_majorization_check,
    penalty_levels,
)
from .solver import (
    FitConfig,
    FitResult,
    KktReport,
    NonConvergenceError,
    ROOT_HALF,
    SQUARED_HALF,
    fit,
    fit_path,
    kkt_check,
    objective,
    predict,
)
from . import theory

__version__ = "0.1.0"

__all__ = [
    "FOURIER",
    "HAAR",
    "NONPARAMETRIC",
    "BasisFamily",
    "GroupedDesign",
    "Nonparametric",
    "Parametric",
    "ResolutionScheme",
    "assemble_design",
    "block_size",
    "eval_basis",
    "make_scheme",
    "rescale_unit",
    "Scenario",
    "TruthSpec",
    "approx_tail_constant",
    "component_values",
    "make_decay_truth",
    "out_of_sample_error",
    "population_complexity",
    "population_l2_norm2",
    "population_sobolev",
    "scenario_from_config",
    "scenario_to_json",
    "simulate",
    "tail_l2_norm2",
    "truth_values",
    "PenaltySchedule",
    "complexity_units",
    "estimate_sigma",
    "majorization_failure_bound",
    "noise_majorization_check",
    "penalty_levels",
    "FitConfig",
    "FitResult",
    "KktReport",
    "NonConvergenceError",
    "ROOT_HALF",
    "SQUARED_HALF",
    "fit",
    "fit_path",
    "kkt_check",
    "objective",
    "predict",
    "theory",
]
