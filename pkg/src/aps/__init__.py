"""Adaptive Bayesian-UCB sampling for estimating collections of pmfs
uniformly well under mean squared error."""

from .allocation import (
    BatchAllocation,
    BatchConstraintSpec,
    FeasibilityVerdict,
    OracleAllocation,
    Trajectory,
    batch_allocate,
    check_feasibility,
    oracle_allocate,
    round_largest_remainder,
    run_bayes_ucb,
    select_arm,
    tracking_value,
)
from .bounds import (
    BASELINE_KINDS,
    DeltaSchedule,
    IntervalSet,
    VarianceBound,
    baseline_ucb,
    delta_at,
    update_intervals,
    variance_ucb,
)
from .exceptions import (
    ApsError,
    DegenerateTruncationError,
    InfeasibleBoxError,
    InputError,
    RadiusTooSmallError,
    UnsupportedConfigError,
)
from .posterior import (
    PosteriorState,
    PriorSpec,
    SampleRecord,
    beta_cdf,
    beta_quantile,
    truncated_cdf,
    truncated_quantile,
    update_posterior,
)
from .simulator import (
    STRATEGIES,
    EventTracker,
    ExperimentConfig,
    LocalAveragingSpec,
    PmfEnv,
    RegretReport,
    StrategyResult,
    default_checkpoints,
    mse,
    run_experiment,
    sample_local,
    track_event,
    tracking_parameters,
)

__version__ = "0.1.0"
