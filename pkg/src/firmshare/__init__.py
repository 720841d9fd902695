"""firmshare: firm-size distribution algebra, aggregation, and labor-share analysis.

A numpy/scipy library (with a small CLI) covering:

- truncated-Pareto moments, quantiles, and seeded sampling;
- the exact Cobb-Douglas aggregation of power-law factor demands and the
  weighting factor that links the size distribution to the aggregate labor
  share;
- tail-index, elasticity, and scale-share-gradient estimators;
- concentration indices and panel-cell construction;
- Melitz-Polanec and counterfactual decompositions;
- synthetic populations with planted parameters, plus a Monte Carlo / oracle
  verification suite.
"""

__version__ = "0.1.0"

from .aggregation import (
    AggregateTechnology,
    DegenerateTechnologyError,
    MicroTechnology,
    Regularity,
    TechGradient,
    aggregate_exact,
    aux_b,
    derive_aggregate,
    derive_constants,
    derive_labor_share,
    derive_tfp,
    derive_theta,
    firm_labor_share,
    gradient_validity_bound,
    macro_labor_share,
    physical_elasticity_correction,
    scale_share_gradient,
    validate_regularity,
    weighting_factor,
)
from .decomposition import (
    CounterfactualResult,
    MPComponents,
    counterfactual_contribution,
    counterfactual_from_contribution,
    melitz_polanec,
)
from .distribution import (
    SingularityError,
    TruncatedPareto,
    mean_log_weighted_quad,
    moment_quad,
)
from .estimation import (
    ConvergenceError,
    DegenerateRegressorError,
    InsufficientSampleError,
    InsufficientTailError,
    RegressionFit,
    TailFit,
    demean,
    estimate_scale_share_gradient,
    hill_tail,
    ols_loglog,
    rank_regression_tail,
)
from .market_structure import (
    FirmRecord,
    Panel,
    PanelCell,
    build_panel,
    cr4,
    gini,
    hhi,
    labor_share,
    leave_one_out_mean,
    weighted_labor_share,
)
from .simulation import (
    AggregationCheck,
    FirmPopulation,
    HypothesisReport,
    SyntheticSpec,
    WeightingCheck,
    generate_population,
    gradient_for_delta,
    hypothesis_suite,
    mc_verify_aggregation,
    mc_verify_weighting,
)
from .verify import CheckResult, run_all_checks

__all__ = [name for name in dir() if not name.startswith("_")]
