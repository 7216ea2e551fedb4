"""Risk-aware option clearing: a clearinghouse that assigns temporally
extended agent skills to deadline-constrained tasks by maximizing
risk-adjusted mission utility, with a seeded simulator, calibration loop, and
baseline mechanisms."""

from .calibration import (
    BucketConfig,
    CalibrationLedger,
    EmpiricalModel,
    LedgerRecord,
    fit_empirical_model,
    recalibrate,
    reputation_rank,
)
from .clearinghouse import (
    ClearingConfig,
    ClearingState,
    SolverConfig,
    build_portfolios,
    clear,
    enumerate_candidates,
    evaluate_portfolio,
    reclear_on_event,
)
from .distributions import (
    DiscreteOutcomeDistribution,
    Marginal,
    QuantileSummary,
    RiskReport,
    brier,
    compose_portfolio,
    crps,
    from_quantile_summary,
    kolmogorov_distance,
    sample,
)
from .model import (
    AgentDescriptor,
    Candidate,
    ConstraintSet,
    Context,
    OptionSpec,
    OutcomeVector,
    Portfolio,
    Schedule,
    Task,
    is_eligible,
    validate_task,
)
from .risk import (
    RiskConfig,
    UtilityConfig,
    chance_constraints_hold,
    cvar,
    deadline_violation_prob,
    expected_utility,
    portfolio_score,
    utility,
)
from .simulator import MetricsReport, ScenarioConfig, run, run_grid

__version__ = "0.1.0"
