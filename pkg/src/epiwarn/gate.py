"""Reliability gate: decide whether nowcast estimates may join training data.

The decision keys on the Pearson correlation between log-transformed
incidence and log-transformed tweet counts over the weeks where both are
observed; estimates are used only when the correlation reaches the
threshold.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .data_model import CitySeries
from .errors import DomainError, UndefinedStatisticError

MIN_OVERLAP_WEEKS = 3


class GateVerdict(enum.Enum):
    USE = "use"
    IGNORE = "ignore"


@dataclass(frozen=True)
class GateDecision:
    """Outcome of the reliability test; ``correlation`` is NaN when undefined."""

    correlation: float
    threshold: float
    verdict: GateVerdict


def pearson(a, b) -> float:
    """Pearson product-moment correlation of two equal-length series."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise DomainError("inputs must be one-dimensional and equal length")
    if a.size < MIN_OVERLAP_WEEKS:
        raise DomainError(f"need at least {MIN_OVERLAP_WEEKS} points, got {a.size}")
    da = a - a.mean()
    db = b - b.mean()
    ssa = float(da @ da)
    ssb = float(db @ db)
    if ssa == 0.0 or ssb == 0.0:
        raise UndefinedStatisticError("correlation undefined for a constant series")
    return float((da @ db) / math.sqrt(ssa * ssb))


def decide(series: CitySeries, issue_week: int, gamma: int, threshold: float) -> GateDecision:
    """Gate a city at one issue week.

    The correlation is computed on log1p(rate) vs log1p(tweets) over weeks
    <= issue_week - gamma, the overlap where both signals are observed.
    Missing tweets, a too-short overlap, or a constant series yield an
    Ignore verdict with a NaN correlation.
    """
    if gamma < 0:
        raise DomainError(f"gamma must be non-negative, got {gamma}")
    cutoff = issue_week - gamma
    corr = math.nan
    if series.tweets is not None:
        mask = series.weeks <= cutoff
        if int(mask.sum()) >= MIN_OVERLAP_WEEKS:
            try:
                corr = pearson(np.log1p(series.dir[mask]), np.log1p(series.tweets[mask]))
            except UndefinedStatisticError:
                corr = math.nan
    verdict = GateVerdict.USE if corr >= threshold else GateVerdict.IGNORE
    return GateDecision(correlation=corr, threshold=threshold, verdict=verdict)
