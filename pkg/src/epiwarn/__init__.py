"""epiwarn: a Gaussian-process epidemic early-warning engine.

Estimates delayed weekly incidence from a social-media proxy signal,
gates the estimates by a correlation-reliability test, forecasts future
incidence, and backtests the approach against an increased-antecedence
baseline.
"""

from .data_model import (
    CitySeries,
    IncidenceLevel,
    TransformedSeries,
    compute_dir,
    filter_cities,
    incidence_level,
    load_epi_table,
    load_tweet_table,
    transform,
)
from .errors import (
    ConfigError,
    DomainError,
    EpiwarnError,
    NumericalError,
    ParseError,
    TweetsUnavailableError,
    UndefinedStatisticError,
)
from .evaluation import (
    EvalReport,
    bonferroni,
    mean_level_auc,
    qq_residual_data,
    roc_auc,
    wilcoxon_signed_rank,
)
from .experiment import (
    BacktestConfig,
    SyntheticSpec,
    compare,
    generate_synthetic,
    run_strategy,
)
from .forecaster import PredictionRecord, Strategy, forecast, level_probabilities
from .gate import GateDecision, GateVerdict, decide, pearson
from .gp_engine import (
    GpModel,
    OptimizerConfig,
    Prediction,
    fit,
    log_marginal_likelihood,
    optimize_hyperparameters,
    predict,
)
from .kernels import (
    KernelHyperparams,
    KernelSpec,
    gram,
    matern52,
    quasi_periodic,
    temporal_cov,
    tweet_term,
)
from .nowcaster import NowcastResult, nowcast

__all__ = [name for name in dir() if not name.startswith("_")]
