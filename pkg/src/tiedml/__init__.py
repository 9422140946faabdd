"""Samplers, exact renewal computations and interval-map simulations for
tied-down occupation-time limits, plus the statistical harness that checks
them against each other."""

from .paths import (
    DegenerateInputError,
    DomainError,
    FactorFunction,
    ProductFunctional,
    StepPath,
    eval_path,
    eval_product,
    increment_shift,
    inverse,
    j1_distance,
    scale,
    stieltjes_functional,
    tie_down,
    waiting_D,
    waiting_G,
)
from .processes import (
    SubordinatorSpec,
    TiedMarginal,
    estimate_propC,
    estimate_propD,
    ml_moment,
    sample_ml_path,
    sample_subordinator,
    sample_tied_path,
    stable_density,
    standard_stable,
    tied_marginal_moment,
)
from .renewal import (
    ConvolutionPower,
    LifetimeDist,
    RenewalTables,
    cesaro_tied_down,
    convolution_power,
    corollary7_check,
    llt_check,
    llt_check_arithmetic,
    make_lifetime,
    renewal_sequence,
    srt_ratio,
    tied_down_exact,
)
from .dynamics import (
    LsvSystem,
    OccupationRecord,
    empirical_return_sequence,
    lsv_map,
    return_time,
    ulam_density,
    verify_umbrella_mc,
)
from .stats import ComparisonReport, bootstrap_ci, ks_distance, moment_report

__version__ = "0.1.0"
