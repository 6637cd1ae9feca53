"""Design-based analysis of two-factor split-plot experiments."""

from .contrasts import ContrastMatrix, EffectEstimate, apply_contrast, standard_contrasts
from .design import (
    Assignment,
    DesignError,
    ObservedData,
    PotentialOutcomeTable,
    SplitPlotDesign,
    count_assignments,
    enumerate_assignments,
    inclusion_probability,
    is_uniform,
    make_observed,
    make_potential_table,
    new_design,
    randomize,
)
from .estimators import (
    MeanEstimate,
    MomentSummary,
    estimate_covariate_means,
    estimate_means,
    hajek_ht_asymptotic_gap,
    theorem2_gap,
    true_cov_ht,
    true_moments,
    vhat,
)
from .frt import FrtResult, frt, impute_strong_null
from .montecarlo import SimConfig, SimSummary, generate_population, run_simulation
from .regression import (
    ModelSpec,
    RegressionFit,
    build_model,
    classic_cov_identity_check,
    coefficients_to_effects,
    coefficients_to_means,
    fit,
    weight_scaling_invariance_check,
    wholeplot_covariate_invariance_check,
)

__all__ = [
    "Assignment",
    "ContrastMatrix",
    "DesignError",
    "EffectEstimate",
    "FrtResult",
    "MeanEstimate",
    "ModelSpec",
    "MomentSummary",
    "ObservedData",
    "PotentialOutcomeTable",
    "RegressionFit",
    "SimConfig",
    "SimSummary",
    "SplitPlotDesign",
    "apply_contrast",
    "build_model",
    "classic_cov_identity_check",
    "coefficients_to_effects",
    "coefficients_to_means",
    "count_assignments",
    "enumerate_assignments",
    "estimate_covariate_means",
    "estimate_means",
    "fit",
    "frt",
    "generate_population",
    "hajek_ht_asymptotic_gap",
    "impute_strong_null",
    "inclusion_probability",
    "is_uniform",
    "make_observed",
    "make_potential_table",
    "new_design",
    "randomize",
    "run_simulation",
    "standard_contrasts",
    "theorem2_gap",
    "true_cov_ht",
    "true_moments",
    "vhat",
    "weight_scaling_invariance_check",
    "wholeplot_covariate_invariance_check",
]

__version__ = "0.1.0"
