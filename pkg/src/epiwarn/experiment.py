"""Rolling-origin backtest: delay-aware framework vs increased antecedence.

For each issue week t past the training-only span, the framework estimates
the delayed weeks (t-gamma, t] from tweets, gates the estimates by the
observed log-log correlation, and forecasts t+beta from the (possibly
augmented) window; the baseline forecasts t+beta directly from data
through t-gamma. Hyperparameters are refit on a stride, warm-started per
fit lineage; every fit seeds its optimizer from the run seed and its
context only, so parallel and serial runs are bit-identical and the
gate's Ignore branch reduces exactly to the baseline.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data_model import CitySeries, incidence_level, transform, transform_dir
from .errors import ConfigError, DomainError, EpiwarnError, UndefinedStatisticError
from .evaluation import SCORE_MODES, EvalReport, mean_level_auc
from .forecaster import PredictionRecord, Strategy, forecast, level_probabilities
from .gate import GateVerdict, decide
from .gp_engine import OptimizerConfig, optimize_hyperparameters
from .kernels import KernelHyperparams, KernelSpec
from .nowcaster import nowcast
from .util import derive_rng, derive_seed

#: Kernel used to synthesize cities unless a spec overrides it: weekly
#: local bumps over a strong, slowly decaying annual cycle.
DEFAULT_SYNTH_HYPER = KernelHyperparams.from_values(
    sigma2_loc=0.101,
    ell_loc=2.0,
    sigma2_qp=1.427,
    ell_qp=58.0,
    ell_per=1.0,
    period_p=59.0,
    noise_var=0.0,
)

_BASE_MEAN_RANGE = (math.log1p(5.0), math.log1p(60.0))
_MIN_CITIES = 5


@dataclass(frozen=True)
class BacktestConfig:
    """Grids, horizons and budgets for one backtest run.

    ``opt_*`` control the per-fit likelihood maximization; stride refits
    are warm-started from the previous optimum of the same fit lineage.
    """

    beta: int = 4
    gamma_grid: tuple[int, ...] = (2, 4, 6, 8)
    threshold_grid: tuple[float, ...] = (0.3, 0.4, 0.5, 0.6)
    train_only_weeks: int = 104
    refit_stride: int = 4
    seed: int = 0
    score_mode: str = "probability"
    opt_restarts: int = 3
    opt_max_evals: int = 200
    opt_tol: float = 1e-6
    alpha: float = 0.05

    def __post_init__(self):
        object.__setattr__(self, "gamma_grid", tuple(int(g) for g in self.gamma_grid))
        object.__setattr__(self, "threshold_grid", tuple(float(x) for x in self.threshold_grid))
        if self.beta < 1:
            raise ConfigError(f"beta must be >= 1, got {self.beta}")
        if not self.gamma_grid:
            raise ConfigError("gamma_grid must be non-empty")
        if not self.threshold_grid:
            raise ConfigError("threshold_grid must be non-empty")
        if any(g < 0 for g in self.gamma_grid):
            raise ConfigError(f"gamma values must be >= 0, got {self.gamma_grid}")
        if self.train_only_weeks < 1:
            raise ConfigError(f"train_only_weeks must be >= 1, got {self.train_only_weeks}")
        if self.refit_stride < 1:
            raise ConfigError(f"refit_stride must be >= 1, got {self.refit_stride}")
        if self.score_mode not in SCORE_MODES:
            raise ConfigError(f"score_mode must be one of {SCORE_MODES}, got {self.score_mode!r}")
        if self.opt_restarts < 1 or self.opt_max_evals < 1:
            raise ConfigError("optimizer budget must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must be in (0, 1), got {self.alpha}")

    def optimizer(self, seed: int) -> OptimizerConfig:
        return OptimizerConfig(
            restarts=self.opt_restarts, max_evals=self.opt_max_evals,
            tol=self.opt_tol, seed=seed,
        )

    def to_dict(self) -> dict:
        return {
            "beta": self.beta,
            "gamma_grid": list(self.gamma_grid),
            "threshold_grid": list(self.threshold_grid),
            "train_only_weeks": self.train_only_weeks,
            "refit_stride": self.refit_stride,
            "seed": self.seed,
            "score_mode": self.score_mode,
            "opt_restarts": self.opt_restarts,
            "opt_max_evals": self.opt_max_evals,
            "opt_tol": self.opt_tol,
            "alpha": self.alpha,
        }


@dataclass(frozen=True)
class SyntheticSpec:
    """Generative model for synthetic city universes.

    Latent log-incidence is a zero-mean GP draw under ``hyper``; tweets
    follow a linear link on the latent signal with Gaussian noise. When
    ``tweet_correlation_target`` is set the noise level is derived per
    city so the realized log-log correlation concentrates near the
    target; otherwise ``tweet_noise_sd`` is used as given. ``base_mean``
    None draws a per-city level uniformly on [log1p(5), log1p(60)].
    """

    n_cities: int = 5
    weeks: int = 156
    hyper: KernelHyperparams = DEFAULT_SYNTH_HYPER
    tweet_link_slope: float = 1.0
    tweet_noise_sd: float = 0.6
    tweet_correlation_target: float | None = None
    base_mean: float | None = None
    population: int = 500_000

    def __post_init__(self):
        if self.n_cities < 1:
            raise ConfigError(f"n_cities must be >= 1, got {self.n_cities}")
        if self.weeks < 2:
            raise ConfigError(f"weeks must be >= 2, got {self.weeks}")
        if self.population < 1:
            raise ConfigError(f"population must be >= 1, got {self.population}")
        if self.tweet_noise_sd < 0:
            raise ConfigError(f"tweet_noise_sd must be >= 0, got {self.tweet_noise_sd}")
        t = self.tweet_correlation_target
        if t is not None and not -1.0 <= t <= 1.0:
            raise ConfigError(f"tweet_correlation_target must be in [-1, 1], got {t}")


def generate_synthetic(spec: SyntheticSpec, seed: int = 0) -> list[CitySeries]:
    """Sample a synthetic city universe; bit-identical under a fixed seed."""
    from .gp_engine import _cholesky_escalating  # local to avoid cycle at import
    from .kernels import GramBuilder

    weeks = np.arange(1, spec.weeks + 1, dtype=np.int64)
    builder = GramBuilder(weeks.astype(float), None, KernelSpec.TEMPORAL_ONLY)
    latent_hyper = spec.hyper.with_noise_var(0.0)
    L, _ = _cholesky_escalating(builder, latent_hyper)

    cities = []
    for i in range(1, spec.n_cities + 1):
        rng = derive_rng(seed, "synth", i)
        base = (
            spec.base_mean
            if spec.base_mean is not None
            else float(rng.uniform(*_BASE_MEAN_RANGE))
        )
        y = L @ rng.standard_normal(spec.weeks)
        level = y + base
        dir_raw = np.maximum(np.expm1(level), 0.0)
        cases = np.rint(dir_raw * spec.population / 100_000.0).astype(np.int64)

        signal = spec.tweet_link_slope * level
        target = spec.tweet_correlation_target
        if target is not None and spec.tweet_link_slope != 0.0 and 0.0 < abs(target) < 1.0:
            sig_sd = float(signal.std())
            noise_sd = sig_sd * math.sqrt(1.0 / target**2 - 1.0)
        elif target is not None and abs(target) == 1.0:
            noise_sd = 0.0
        else:
            noise_sd = spec.tweet_noise_sd
        z = signal + noise_sd * rng.standard_normal(spec.weeks)
        # cap the log-scale tweet level; expm1 overflows int64 near 44
        tweets = np.rint(np.expm1(np.clip(z, 0.0, 30.0))).astype(np.int64)

        cities.append(
            CitySeries.from_counts(f"c{i:03d}", spec.population, weeks, cases, tweets=tweets)
        )
    return cities


@dataclass
class GateLogEntry:
    issue_week: int
    correlation: float  # NaN when undefined


@dataclass
class CityGammaRun:
    """All records one city contributes at one delay value."""

    city_id: str
    gamma: int
    baseline: list[PredictionRecord]
    framework: dict[float, list[PredictionRecord]]
    gate_log: list[GateLogEntry]
    error: str | None = None


def _issue_weeks(series: CitySeries, config: BacktestConfig) -> range:
    first = config.train_only_weeks + 1
    last = series.last_week - config.beta
    if first > last:
        raise ConfigError(
            f"{series.city_id}: train_only_weeks {config.train_only_weeks} leaves no "
            f"issue weeks before week {series.last_week - config.beta}"
        )
    return range(first, last + 1)


def _run_city_gamma(series: CitySeries, config: BacktestConfig, gamma: int,
                    thresholds: tuple[float, ...],
                    include_framework: bool = True,
                    include_baseline: bool = True) -> CityGammaRun:
    issue_weeks = _issue_weeks(series, config)
    first_issue = issue_weeks.start
    if first_issue - gamma < 2:
        raise ConfigError(
            f"{series.city_id}: gamma {gamma} leaves fewer than 2 observed weeks "
            f"at the first issue week {first_issue}"
        )
    has_tweets = series.tweets is not None and gamma > 0

    baseline: list[PredictionRecord] = []
    framework: dict[float, list[PredictionRecord]] = {thr: [] for thr in thresholds}
    gate_log: list[GateLogEntry] = []

    hyper_obs = hyper_now = hyper_aug = None

    for t in issue_weeks:
        cutoff = t - gamma
        target = t + config.beta
        stride_refit = (t - first_issue) % config.refit_stride == 0
        true_dir = float(series.dir[target - 1])
        true_level = incidence_level(true_dir)

        # Forecast on the observed window: the baseline always, the
        # framework whenever the gate ignores the estimates.
        trans_obs = transform(series, cutoff).through(cutoff)
        if stride_refit or hyper_obs is None:
            seed = derive_seed(config.seed, series.city_id, "forecast_observed", gamma, t)
            hyper_obs = optimize_hyperparameters(
                KernelSpec.TEMPORAL_ONLY, trans_obs.weeks, None, trans_obs.y_centered,
                config.optimizer(seed), warm_start=hyper_obs,
            )
        pred_obs = forecast(trans_obs, target, config.optimizer(0), hyper=hyper_obs)
        probs_obs = level_probabilities(pred_obs, trans_obs.mean)

        if include_baseline:
            baseline.append(PredictionRecord(
                city_id=series.city_id, issue_week=t, target_week=target,
                strategy=Strategy.INCREASED_ANTECEDENCE, prediction=pred_obs,
                level_probs=probs_obs, true_dir=true_dir, true_level=true_level,
            ))

        if not include_framework:
            continue

        if gamma == 0:
            # Nothing is delayed; the framework coincides with the baseline.
            for thr in thresholds:
                framework[thr].append(PredictionRecord(
                    city_id=series.city_id, issue_week=t, target_week=target,
                    strategy=Strategy.FRAMEWORK, prediction=pred_obs,
                    level_probs=probs_obs, true_dir=true_dir, true_level=true_level,
                ))
            continue

        corr = decide(series, t, gamma, math.inf).correlation
        gate_log.append(GateLogEntry(issue_week=t, correlation=corr))

        pred_aug = probs_aug = None
        if has_tweets:
            # The augmented lineage is threshold-independent, so it is
            # advanced on every issue week to keep its warm-start chain
            # (and therefore all records) identical across thresholds.
            if stride_refit or hyper_now is None:
                trans_now = transform(series, cutoff).through(cutoff)
                seed = derive_seed(config.seed, series.city_id, "nowcast", gamma, t)
                hyper_now = optimize_hyperparameters(
                    KernelSpec.TEMPORAL_PLUS_TWEET, trans_now.weeks, trans_now.x_tweets,
                    trans_now.y_centered, config.optimizer(seed), warm_start=hyper_now,
                )
            estimates = nowcast(series, t, gamma, config.optimizer(0), hyper=hyper_now)
            aug_weeks = np.arange(1, t + 1, dtype=np.int64)
            aug_dir = np.concatenate([series.dir[:cutoff], estimates.estimated_dir])
            trans_aug = transform_dir(aug_weeks, aug_dir, t)
            if stride_refit or hyper_aug is None:
                seed = derive_seed(config.seed, series.city_id, "forecast_augmented", gamma, t)
                hyper_aug = optimize_hyperparameters(
                    KernelSpec.TEMPORAL_ONLY, trans_aug.weeks, None, trans_aug.y_centered,
                    config.optimizer(seed), warm_start=hyper_aug,
                )
            pred_aug = forecast(trans_aug, target, config.optimizer(0), hyper=hyper_aug)
            probs_aug = level_probabilities(pred_aug, trans_aug.mean)

        for thr in thresholds:
            use = has_tweets and corr >= thr
            pred, probs = (pred_aug, probs_aug) if use else (pred_obs, probs_obs)
            framework[thr].append(PredictionRecord(
                city_id=series.city_id, issue_week=t, target_week=target,
                strategy=Strategy.FRAMEWORK, prediction=pred, level_probs=probs,
                true_dir=true_dir, true_level=true_level,
                gate_verdict=GateVerdict.USE if use else GateVerdict.IGNORE,
                gate_correlation=corr,
            ))

    return CityGammaRun(
        city_id=series.city_id, gamma=gamma, baseline=baseline,
        framework=framework, gate_log=gate_log,
    )


def run_strategy(series: CitySeries, strategy: Strategy, config: BacktestConfig,
                 gamma: int, threshold: float) -> list[PredictionRecord]:
    """Backtest one city under one strategy at one (gamma, threshold)."""
    run = _run_city_gamma(
        series, config, gamma, (float(threshold),),
        include_framework=strategy is Strategy.FRAMEWORK,
        include_baseline=strategy is Strategy.INCREASED_ANTECEDENCE,
    )
    if strategy is Strategy.FRAMEWORK:
        return run.framework[float(threshold)]
    return run.baseline


def _city_gamma_task(args) -> CityGammaRun:
    series, config, gamma = args
    try:
        return _run_city_gamma(series, config, gamma, config.threshold_grid)
    except EpiwarnError as exc:
        return CityGammaRun(
            city_id=series.city_id, gamma=gamma, baseline=[], framework={},
            gate_log=[], error=f"{type(exc).__name__}: {exc}",
        )


@dataclass
class BacktestResult:
    """Full grid outcome: reports plus the raw runs for CSV emission."""

    config: BacktestConfig
    reports: dict[int, dict[float, EvalReport]]
    runs: list[CityGammaRun] = field(repr=False, default_factory=list)

    @property
    def cells(self) -> list[tuple[int, float, EvalReport]]:
        return [
            (gamma, thr, self.reports[gamma][thr])
            for gamma in sorted(self.reports)
            for thr in sorted(self.reports[gamma])
        ]


def compare(cities: list[CitySeries], config: BacktestConfig, jobs: int = 1) -> BacktestResult:
    """Run the full (gamma x threshold) grid over a city universe.

    Cities are processed as independent (city, gamma) tasks by a process
    pool; the reduction sorts deterministically, so any ``jobs`` value
    produces identical output.
    """
    if len(cities) < _MIN_CITIES:
        raise ConfigError(
            f"paired comparison needs at least {_MIN_CITIES} cities, got {len(cities)}"
        )
    if jobs < 1:
        raise ConfigError(f"jobs must be >= 1, got {jobs}")
    for series in cities:
        _issue_weeks(series, config)  # validates train span vs data
    max_gamma = max(config.gamma_grid)
    if config.train_only_weeks + 1 - max_gamma < 2:
        raise ConfigError(
            f"gamma {max_gamma} leaves fewer than 2 observed weeks at the first issue week"
        )

    tasks = [
        (series, config, gamma)
        for series in sorted(cities, key=lambda c: c.city_id)
        for gamma in sorted(set(config.gamma_grid))
    ]
    if jobs == 1 or len(tasks) == 1:
        runs = [_city_gamma_task(t) for t in tasks]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(_city_gamma_task, tasks, chunksize=1))

    m_tests = len(set(config.gamma_grid)) * len(set(config.threshold_grid))
    corrected_alpha = config.alpha / m_tests

    reports: dict[int, dict[float, EvalReport]] = {}
    for gamma in sorted(set(config.gamma_grid)):
        gamma_runs = [r for r in runs if r.gamma == gamma]
        reports[gamma] = {}
        for thr in sorted(set(config.threshold_grid)):
            fw_auc: dict[str, float] = {}
            base_auc: dict[str, float] = {}
            use_fraction: dict[str, float] = {}
            excluded: dict[str, str] = {}
            for run in gamma_runs:
                if run.error is not None:
                    excluded[run.city_id] = run.error
                    continue
                records = run.framework[thr]
                try:
                    fw = mean_level_auc(records, config.score_mode)
                    base = mean_level_auc(run.baseline, config.score_mode)
                except UndefinedStatisticError as exc:
                    excluded[run.city_id] = str(exc)
                    continue
                fw_auc[run.city_id] = fw
                base_auc[run.city_id] = base
                n_use = sum(1 for r in records if r.gate_verdict is GateVerdict.USE)
                use_fraction[run.city_id] = n_use / len(records) if records else 0.0
            reports[gamma][thr] = EvalReport.build(
                fw_auc, base_auc, corrected_alpha, use_fraction, excluded
            )

    return BacktestResult(config=config, reports=reports, runs=runs)
