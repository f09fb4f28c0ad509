"""Fuzzy opinion network model of stock price dynamics."""
from ._backend import BACKEND
from .errors import (
    ConfigError,
    FuzzyMarketError,
    InvalidDomainError,
    InvalidIndexError,
    InvalidInputError,
    InvalidWeightsError,
    PreconditionError,
    SingularSystemError,
)
from .estimator import (
    CombinedState,
    Estimates,
    PriceSeries,
    RlsState,
    Signal,
    SignalParams,
    batch_ls_oracle,
    combined_state,
    estimate_series,
    rls_step,
    trading_signal,
    word_of_mouth_proportion,
)
from .fuzzy import GaussianOpinion, closeness, compose_conditional, compose_oracle, weighted_average
from .market import (
    Behavior,
    MarketParams,
    MarketState,
    RealPrice,
    TraderSpec,
    excess_demand,
    indicator,
    initial_state,
    market_step,
    predicted_limit_log_price,
    run_simulation,
)
from .montecarlo import CellStats, ExperimentGrid, GridPoint, preset_grid, run_cell, run_grid
from .network import (
    External,
    Global,
    Local,
    NetworkParams,
    NetworkState,
    detect_convergence,
    neighbor_set,
    network_step,
    partition_groups,
    uncertainty_input,
)

__version__ = "0.1.0"
