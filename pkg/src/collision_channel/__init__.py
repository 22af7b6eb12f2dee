"""Threshold transmission policies for remote estimation over a collision channel."""
from .distributions import Gaussian, Laplace, SymmetricDistribution, make_distribution
from .errors import (
    CollisionChannelError,
    ConfigurationError,
    DomainError,
    GenerationFailureError,
    InvalidParameterError,
    NoConvergenceError,
    NumericalFailureError,
)
from .graph import SensorGraph, complete_graph, erdos_renyi, path_graph, switching_time
from .lower_bound import FoldedLaw, centralized_lower_bound, order_stat_second_moment
from .protocols import (
    NetworkState,
    QuantileParams,
    TraceRecord,
    consensus_round,
    consensus_threshold_update,
    decide_and_score,
    quantile_round,
    run_scheme,
    simulate,
)
from .threshold import (
    Bracket,
    ThresholdProblem,
    binomial_tail_F,
    bracket,
    cost,
    optimal_threshold,
    root_function_h,
)

__version__ = "0.1.0"
