"""Forecast future incidence and score it as incidence-level probabilities.

The forecaster is a temporal-only GP over the (possibly augmented)
training window; predictions are mapped to the rate scale and to a
probability for each of the three incidence levels via the Gaussian
predictive distribution on the log scale.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from scipy.special import ndtr

from .data_model import HIGH_DIR, MEDIUM_DIR, IncidenceLevel, TransformedSeries, incidence_level
from .errors import DomainError
from .gate import GateVerdict
from .gp_engine import OptimizerConfig, Prediction, fit, predict
from .kernels import KernelHyperparams, KernelSpec

_LOG_MEDIUM = math.log1p(MEDIUM_DIR)
_LOG_HIGH = math.log1p(HIGH_DIR)


class Strategy(enum.Enum):
    """How an early-warning prediction handled the reporting delay."""

    FRAMEWORK = "framework"
    INCREASED_ANTECEDENCE = "increased_antecedence"


@dataclass(frozen=True)
class PredictionRecord:
    """One scored forecast: (city, issue week, target week, strategy)."""

    city_id: str
    issue_week: int
    target_week: int
    strategy: Strategy
    prediction: Prediction
    level_probs: tuple[float, float, float]
    true_dir: float | None = None
    true_level: IncidenceLevel | None = None
    gate_verdict: GateVerdict | None = None
    gate_correlation: float | None = None


def forecast(training: TransformedSeries, target_week: int, config: OptimizerConfig,
             hyper: KernelHyperparams | None = None) -> Prediction:
    """Fit a temporal-only GP on ``training`` and predict ``target_week``."""
    if training.weeks.size == 0:
        raise DomainError("training window is empty")
    if target_week <= int(training.weeks[-1]):
        raise DomainError(
            f"target week {target_week} not beyond last training week {training.weeks[-1]}"
        )
    temporal = training
    if training.x_tweets is not None:
        # The forecasting model is purely temporal even when the training
        # window carries a tweet covariate.
        temporal = TransformedSeries(
            weeks=training.weeks, y_raw=training.y_raw, mean=training.mean,
            y_centered=training.y_centered, x_tweets=None,
        )
    model = fit(temporal, KernelSpec.TEMPORAL_ONLY, config, hyper=hyper)
    return predict(model, [target_week])[0]


def level_probabilities(pred: Prediction, city_mean: float) -> tuple[float, float, float]:
    """P(low), P(medium), P(high) under the Gaussian log-scale predictive."""
    m = pred.mean_latent + city_mean
    if pred.var_latent == 0.0:
        probs = [0.0, 0.0, 0.0]
        probs[incidence_level(pred.mean_dir)] = 1.0
        return tuple(probs)
    sd = math.sqrt(pred.var_latent)
    cdf_medium = float(ndtr((_LOG_MEDIUM - m) / sd))
    cdf_high = float(ndtr((_LOG_HIGH - m) / sd))
    return (cdf_medium, cdf_high - cdf_medium, 1.0 - cdf_high)
