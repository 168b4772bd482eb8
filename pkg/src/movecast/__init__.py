"""Sequential Bayesian prediction of a moving group's next location."""

from .density import (
    GaussianMixture,
    ModelParams,
    decay_weight,
    decay_weights,
    full_conditional,
    kernel2,
    mixture_eval,
)
from .errors import (
    AlignmentError,
    DegeneratePosteriorError,
    EmptyHistoryError,
    InsufficientHistoryError,
    OutOfRegionError,
)
from .geo import GeoPoint, Grid, KmScale, dist_km
from .inference import (
    FilterConfig,
    ParticleSet,
    PosteriorSummary,
    RunResult,
    SupportBox,
    bayes_update,
    decile_compress,
    init_particles,
    inject_expert_mass,
    rejuvenate,
    run_sequential,
    strip_expert,
    summarize,
    weighted_quantile,
)
from .missing import (
    ConditionalFamily,
    MissingPattern,
    Track,
    chain_coefficients_matrix,
    consistency_gap,
    exact_conditional,
    partial_conditional,
)
from .predict import (
    AssessmentRecord,
    PredictiveDensity,
    ProximityCurve,
    VariantComparison,
    aupc,
    compare_variants,
    predictive_density,
    proximity_curve,
    ram,
)
from .prior import (
    ExpertPrior,
    ForestRaster,
    IntelReport,
    PriorConfig,
    build_expert_prior,
    fresh_intel,
    prior_credibility,
)
from .simulate import SimConfig, SimResult, mask_track, run_study, simulate_track

__all__ = [
    "AlignmentError",
    "AssessmentRecord",
    "ConditionalFamily",
    "DegeneratePosteriorError",
    "EmptyHistoryError",
    "ExpertPrior",
    "FilterConfig",
    "ForestRaster",
    "GaussianMixture",
    "GeoPoint",
    "Grid",
    "InsufficientHistoryError",
    "IntelReport",
    "KmScale",
    "MissingPattern",
    "ModelParams",
    "OutOfRegionError",
    "ParticleSet",
    "PosteriorSummary",
    "PredictiveDensity",
    "PriorConfig",
    "ProximityCurve",
    "RunResult",
    "SimConfig",
    "SimResult",
    "SupportBox",
    "Track",
    "VariantComparison",
    "aupc",
    "bayes_update",
    "build_expert_prior",
    "chain_coefficients_matrix",
    "compare_variants",
    "consistency_gap",
    "decay_weight",
    "decay_weights",
    "decile_compress",
    "dist_km",
    "exact_conditional",
    "fresh_intel",
    "full_conditional",
    "init_particles",
    "inject_expert_mass",
    "kernel2",
    "mask_track",
    "mixture_eval",
    "partial_conditional",
    "predictive_density",
    "prior_credibility",
    "proximity_curve",
    "ram",
    "rejuvenate",
    "run_sequential",
    "run_study",
    "simulate_track",
    "strip_expert",
    "summarize",
    "weighted_quantile",
]

__version__ = "0.1.0"
