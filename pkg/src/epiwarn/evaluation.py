"""Scoring and statistics: one-vs-all ROC AUC, paired Wilcoxon, QQ data.

AUC uses the pairwise (Mann-Whitney) definition with ties counted as 1/2,
computed from integer win/tie counts so it agrees exactly with brute-force
pair enumeration. The Wilcoxon signed-rank test is exact (full sign
enumeration over average ranks) for small samples and normal-approximated
with tie and continuity corrections otherwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr, ndtri
from scipy.stats import rankdata

from .data_model import HIGH_DIR, MEDIUM_DIR, IncidenceLevel
from .errors import DomainError, UndefinedStatisticError
from .forecaster import PredictionRecord

EXACT_WILCOXON_MAX_N = 12
_POINT_SCORE_MIDPOINT = 0.5 * (math.log1p(MEDIUM_DIR) + math.log1p(HIGH_DIR))

SCORE_MODES = ("probability", "point")


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve; ties contribute 1/2 per pair."""
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DomainError("scores and labels must be one-dimensional and equal length")
    n_pos = int(labels.sum())
    n_neg = int(labels.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise UndefinedStatisticError("AUC undefined: labels contain a single class")

    order = np.argsort(scores, kind="stable")
    s = scores[order]
    l = labels[order]
    wins = 0
    ties = 0
    neg_below = 0
    i = 0
    n = s.size
    while i < n:
        j = i
        while j < n and s[j] == s[i]:
            j += 1
        group_pos = int(l[i:j].sum())
        group_neg = (j - i) - group_pos
        wins += group_pos * neg_below
        ties += group_pos * group_neg
        neg_below += group_neg
        i = j
    return (wins + 0.5 * ties) / (n_pos * n_neg)


def _point_score(record: PredictionRecord, level: IncidenceLevel) -> float:
    # Monotone-in-mean scores from the latent point estimate; the medium
    # band needs a peaked score since it is not an extreme of the mean.
    m = math.log1p(record.prediction.mean_dir)
    if level is IncidenceLevel.LOW:
        return -m
    if level is IncidenceLevel.HIGH:
        return m
    return -abs(m - _POINT_SCORE_MIDPOINT)


def level_aucs(records: list[PredictionRecord], score_mode: str = "probability"
               ) -> tuple[dict[IncidenceLevel, float], dict[IncidenceLevel, str]]:
    """Per-level one-vs-all AUCs and reasons for levels that are undefined."""
    if score_mode not in SCORE_MODES:
        raise DomainError(f"unknown score_mode {score_mode!r}")
    if not records:
        raise DomainError("no records to evaluate")
    aucs: dict[IncidenceLevel, float] = {}
    skipped: dict[IncidenceLevel, str] = {}
    for level in IncidenceLevel:
        labels = []
        scores = []
        for rec in records:
            if rec.true_level is None:
                raise DomainError("records must carry true incidence levels")
            labels.append(rec.true_level == level)
            if score_mode == "probability":
                scores.append(rec.level_probs[level])
            else:
                scores.append(_point_score(rec, level))
        try:
            aucs[level] = roc_auc(scores, labels)
        except UndefinedStatisticError:
            skipped[level] = f"level {level.label!r} has a single class in the test weeks"
    return aucs, skipped


def mean_level_auc(records: list[PredictionRecord], score_mode: str = "probability") -> float:
    """One-vs-all AUC averaged over the levels for which it is defined."""
    aucs, skipped = level_aucs(records, score_mode)
    if not aucs:
        raise UndefinedStatisticError(
            "AUC undefined for every level: " + "; ".join(skipped.values())
        )
    return float(np.mean(list(aucs.values())))


@dataclass(frozen=True)
class WilcoxonResult:
    """Two-sided signed-rank test outcome."""

    p_value: float
    statistic: float
    n_nonzero: int
    degenerate: bool
    method: str


def wilcoxon_signed_rank(differences) -> WilcoxonResult:
    """Two-sided paired Wilcoxon signed-rank test.

    Zero differences are dropped; ties get average ranks. All-zero input
    is degenerate (p=1). Exact enumeration of all sign assignments up to
    n=12 nonzero differences, normal approximation with tie and continuity
    corrections beyond.
    """
    d = np.asarray(differences, dtype=float)
    if d.ndim != 1:
        raise DomainError("differences must be one-dimensional")
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        return WilcoxonResult(p_value=1.0, statistic=0.0, n_nonzero=0,
                              degenerate=True, method="degenerate")
    if n < 5:
        raise DomainError(f"need at least 5 nonzero differences, got {n}")

    ranks = rankdata(np.abs(d))
    w_plus = float(ranks[d > 0].sum())

    if n <= EXACT_WILCOXON_MAX_N:
        bits = (np.arange(1 << n)[:, None] >> np.arange(n)[None, :]) & 1
        totals = bits @ ranks
        n_total = totals.size
        p_le = np.count_nonzero(totals <= w_plus + 1e-12) / n_total
        p_ge = np.count_nonzero(totals >= w_plus - 1e-12) / n_total
        p = min(1.0, 2.0 * min(p_le, p_ge))
        return WilcoxonResult(p_value=p, statistic=w_plus, n_nonzero=n,
                              degenerate=False, method="exact")

    mean_w = n * (n + 1) / 4.0
    var_w = n * (n + 1) * (2 * n + 1) / 24.0
    _, counts = np.unique(ranks, return_counts=True)
    var_w -= float(np.sum(counts.astype(float) ** 3 - counts)) / 48.0
    if var_w <= 0:
        return WilcoxonResult(p_value=1.0, statistic=w_plus, n_nonzero=n,
                              degenerate=True, method="degenerate")
    delta = w_plus - mean_w
    if delta > 0:
        delta -= 0.5
    elif delta < 0:
        delta += 0.5
    z = delta / math.sqrt(var_w)
    p = min(1.0, 2.0 * float(ndtr(-abs(z))))
    return WilcoxonResult(p_value=p, statistic=w_plus, n_nonzero=n,
                          degenerate=False, method="normal")


def bonferroni(p_values, alpha: float) -> list[bool]:
    """Reject test i iff p_i < alpha / m, m the number of tests."""
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must be in (0, 1), got {alpha}")
    p = list(p_values)
    m = len(p)
    return [pi < alpha / m for pi in p]


def qq_residual_data(residuals) -> list[tuple[float, float]]:
    """(theoretical, observed) quantile pairs for a normality check.

    Residuals are centered and scale-matched to the standard-normal
    quantiles at plotting positions (i-0.5)/n, so any affine image of
    those quantiles falls on the identity line and the plot shows shape
    deviations only.
    """
    r = np.asarray(residuals, dtype=float)
    if r.ndim != 1 or r.size < 3:
        raise DomainError("need at least 3 residuals")
    observed = np.sort(r)  # sort first so the moments are order-independent
    sd = float(observed.std())
    if sd == 0.0:
        raise DomainError("residuals have zero variance")
    n = r.size
    theoretical = ndtri((np.arange(1, n + 1) - 0.5) / n)
    observed = (observed - observed.mean()) / sd * float(theoretical.std())
    return list(zip(theoretical.tolist(), observed.tolist()))


@dataclass(frozen=True)
class EvalReport:
    """Framework-vs-baseline comparison for one (gamma, threshold) cell."""

    per_city_auc: dict[str, float]
    per_city_auc_baseline: dict[str, float]
    auc_differences: dict[str, float]
    mean_auc: float
    mean_auc_baseline: float
    wilcoxon_p: float
    bonferroni_alpha: float
    significant: bool
    degenerate: bool
    gate_use_fraction: dict[str, float] = field(default_factory=dict)
    excluded_cities: dict[str, str] = field(default_factory=dict)

    @property
    def mean_difference(self) -> float:
        vals = list(self.auc_differences.values())
        return float(np.mean(vals)) if vals else math.nan

    @classmethod
    def build(cls, per_city_auc: dict[str, float], per_city_auc_baseline: dict[str, float],
              bonferroni_alpha: float, gate_use_fraction: dict[str, float],
              excluded_cities: dict[str, str]) -> "EvalReport":
        diffs = {
            city: per_city_auc[city] - per_city_auc_baseline[city]
            for city in sorted(per_city_auc)
        }
        values = np.asarray(list(diffs.values()), dtype=float)
        nonzero = int(np.count_nonzero(values))
        if nonzero == 0:
            wres = WilcoxonResult(1.0, 0.0, 0, True, "degenerate")
        elif nonzero < 5:
            # Too few informative pairs for the signed-rank test; report
            # the cell as degenerate rather than dropping it from the grid.
            wres = WilcoxonResult(1.0, 0.0, nonzero, True, "degenerate")
        else:
            wres = wilcoxon_signed_rank(values)
        return cls(
            per_city_auc=dict(sorted(per_city_auc.items())),
            per_city_auc_baseline=dict(sorted(per_city_auc_baseline.items())),
            auc_differences=diffs,
            mean_auc=float(np.mean(list(per_city_auc.values()))) if per_city_auc else math.nan,
            mean_auc_baseline=float(np.mean(list(per_city_auc_baseline.values())))
            if per_city_auc_baseline else math.nan,
            wilcoxon_p=wres.p_value,
            bonferroni_alpha=bonferroni_alpha,
            significant=(not wres.degenerate) and wres.p_value < bonferroni_alpha,
            degenerate=wres.degenerate,
            gate_use_fraction=dict(sorted(gate_use_fraction.items())),
            excluded_cities=dict(sorted(excluded_cities.items())),
        )

    def to_dict(self) -> dict:
        return {
            "per_city_auc": self.per_city_auc,
            "per_city_auc_baseline": self.per_city_auc_baseline,
            "auc_differences": self.auc_differences,
            "mean_auc": self.mean_auc,
            "mean_auc_baseline": self.mean_auc_baseline,
            "mean_difference": self.mean_difference,
            "wilcoxon_p": self.wilcoxon_p,
            "bonferroni_alpha": self.bonferroni_alpha,
            "significant": self.significant,
            "degenerate": self.degenerate,
            "gate_use_fraction": self.gate_use_fraction,
            "excluded_cities": self.excluded_cities,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "EvalReport":
        return cls(
            per_city_auc=dict(payload["per_city_auc"]),
            per_city_auc_baseline=dict(payload["per_city_auc_baseline"]),
            auc_differences=dict(payload["auc_differences"]),
            mean_auc=payload["mean_auc"],
            mean_auc_baseline=payload["mean_auc_baseline"],
            wilcoxon_p=payload["wilcoxon_p"],
            bonferroni_alpha=payload["bonferroni_alpha"],
            significant=payload["significant"],
            degenerate=payload["degenerate"],
            gate_use_fraction=dict(payload.get("gate_use_fraction", {})),
            excluded_cities=dict(payload.get("excluded_cities", {})),
        )
