"""Estimate delayed incidence for the most recent gamma weeks from tweets.

At issue week t, incidence is observed only through t - gamma while tweet
counts run through t. A GP with the tweet-covariate kernel is trained on
the observed overlap and predicts the gap weeks from their tweet counts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data_model import CitySeries, transform
from .errors import DomainError, TweetsUnavailableError
from .gp_engine import GpModel, OptimizerConfig, Prediction, fit, predict
from .kernels import KernelHyperparams, KernelSpec


@dataclass(frozen=True)
class NowcastResult:
    """Estimates for exactly the delayed weeks (issue_week - gamma, issue_week]."""

    estimated_weeks: np.ndarray
    estimates: list[Prediction]
    gamma: int
    issue_week: int

    @property
    def estimated_dir(self) -> np.ndarray:
        return np.asarray([e.mean_dir for e in self.estimates], dtype=float)


def fit_nowcast_model(series: CitySeries, issue_week: int, gamma: int,
                      config: OptimizerConfig,
                      hyper: KernelHyperparams | None = None) -> GpModel:
    """Train the tweet-covariate GP on weeks <= issue_week - gamma."""
    if gamma < 1:
        raise DomainError(f"gamma must be >= 1, got {gamma}")
    if series.tweets is None:
        raise TweetsUnavailableError(f"{series.city_id}: no tweet series")
    if issue_week > series.last_week:
        raise DomainError(
            f"issue week {issue_week} beyond tweet coverage 1..{series.last_week}"
        )
    cutoff = issue_week - gamma
    if cutoff < 1:
        raise DomainError(f"no observed weeks before issue week {issue_week} - gamma {gamma}")
    training = transform(series, cutoff).through(cutoff)
    return fit(training, KernelSpec.TEMPORAL_PLUS_TWEET, config, hyper=hyper)


def nowcast(series: CitySeries, issue_week: int, gamma: int, config: OptimizerConfig,
            hyper: KernelHyperparams | None = None) -> NowcastResult:
    """Estimate the delayed weeks (issue_week - gamma, issue_week].

    Targets later than issue_week - gamma are never read; the gap weeks
    enter only through their tweet covariates.
    """
    model = fit_nowcast_model(series, issue_week, gamma, config, hyper=hyper)
    cutoff = issue_week - gamma
    query_weeks = np.arange(cutoff + 1, issue_week + 1, dtype=np.int64)
    idx = np.searchsorted(series.weeks, query_weeks)
    query_cov = np.log1p(series.tweets[idx].astype(float))
    estimates = predict(model, query_weeks, query_cov)
    return NowcastResult(
        estimated_weeks=query_weeks,
        estimates=estimates,
        gamma=gamma,
        issue_week=issue_week,
    )
