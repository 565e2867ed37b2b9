"""Cyber risk assessment and holistic capital allocation on a threat/vulnerability/asset cascade."""

from .aggregate import LossModel, annual_pair_loss, corporate_annual_loss_mixture, corporate_annual_loss_pairs
from .allocate import (
    AllocationProblem,
    ReserveSolution,
    Scenario,
    StrategyEvaluator,
    StrategyOutcome,
    WeightSet,
    budget_reserves,
    enumerate_strategies,
    evaluate_strategy,
    nonneg_reserves,
    sensitivity_sweep,
    unconstrained_reserves,
)
from .calibrate import calibrate, fit_frequency, fit_severity
from .cascade import CascadeModel, ControlVector, InvestmentMenu, build_tensor, viable_paths
from .config import case_study_config, load_config
from .dist import (
    DiscreteDistribution,
    FrequencyModel,
    SeverityModel,
    discretize,
    panjer_compound,
    tail_mean,
    value_at_risk,
)
from .errors import (
    ConfigError,
    CyberAllocError,
    DataError,
    InsufficientDataError,
    NumericError,
    ResolutionError,
    SolverError,
)

__version__ = "0.1.0"
