"""Exact Gaussian-process regression on weekly series.

Zero-mean GP over centered log-incidence, with marginal-likelihood
hyperparameter selection by bounded multi-start Nelder-Mead in log space
and Cholesky-based posterior prediction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

from . import kernels
from .errors import DomainError, NumericalError
from .kernels import (
    DEFAULT_JITTER,
    MAX_JITTER,
    GramBuilder,
    KernelHyperparams,
    KernelSpec,
)
from .util import derive_rng

LOG_2PI = math.log(2.0 * math.pi)

#: Start point for the first restart when no warm start is available:
#: weekly-scale local bumps, annual seasonality, moderate noise.
DEFAULT_START = KernelHyperparams.from_values(
    sigma2_loc=0.1,
    ell_loc=2.0,
    sigma2_qp=1.0,
    ell_qp=50.0,
    ell_per=1.0,
    period_p=52.0,
    noise_var=0.1,
    ell_tw=1.0,
)


@dataclass(frozen=True)
class OptimizerConfig:
    """Budget for marginal-likelihood maximization.

    ``restarts`` counts total local searches: the first starts from the
    warm start (or the package default), the rest from log-uniform draws
    inside the box constraints.
    """

    restarts: int = 8
    max_evals: int = 500
    tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.restarts < 1:
            raise DomainError(f"restarts must be >= 1, got {self.restarts}")
        if self.max_evals < 1:
            raise DomainError(f"max_evals must be >= 1, got {self.max_evals}")
        if not self.tol > 0:
            raise DomainError(f"tol must be positive, got {self.tol}")


@dataclass(frozen=True)
class Prediction:
    """Posterior prediction for one week, on latent and incidence scales."""

    mean_latent: float
    var_latent: float
    mean_dir: float
    interval95_dir: tuple[float, float]

    @classmethod
    def from_latent(cls, mean_latent: float, var_latent: float, city_mean: float) -> "Prediction":
        var_latent = max(float(var_latent), 0.0)
        sd = math.sqrt(var_latent)
        center = mean_latent + city_mean
        return cls(
            mean_latent=float(mean_latent),
            var_latent=var_latent,
            mean_dir=max(math.expm1(center), 0.0),
            interval95_dir=(
                max(math.expm1(center - 1.96 * sd), 0.0),
                max(math.expm1(center + 1.96 * sd), 0.0),
            ),
        )


@dataclass(frozen=True)
class GpModel:
    """A trained GP: training design plus cached Cholesky factorization."""

    train_times: np.ndarray
    train_covariates: np.ndarray | None
    y_centered: np.ndarray
    city_mean: float
    hyper: KernelHyperparams
    spec: KernelSpec
    chol: np.ndarray
    alpha: np.ndarray
    jitter: float = field(default=DEFAULT_JITTER)

    @property
    def n_train(self) -> int:
        return int(self.train_times.size)


def _cholesky_escalating(builder: GramBuilder, hyper: KernelHyperparams):
    """Cholesky of the training Gram, escalating jitter x10 up to MAX_JITTER."""
    jitter = DEFAULT_JITTER
    while True:
        K = builder.build(hyper, jitter)
        try:
            return np.linalg.cholesky(K), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
            if jitter > MAX_JITTER * (1.0 + 1e-12):
                raise NumericalError(
                    f"Gram factorization failed with jitter escalated to {MAX_JITTER}"
                )


def _lml_from_chol(L: np.ndarray, y: np.ndarray) -> float:
    alpha = cho_solve((L, True), y)
    n = y.size
    return float(-0.5 * y @ alpha - np.sum(np.log(np.diag(L))) - 0.5 * n * LOG_2PI)


def log_marginal_likelihood(hyper: KernelHyperparams, spec: KernelSpec, times,
                            covariates, y_centered) -> float:
    """Log marginal likelihood of centered targets under the zero-mean GP."""
    y = np.asarray(y_centered, dtype=float)
    times = np.asarray(times, dtype=float)
    if y.shape != times.shape:
        raise DomainError("y_centered and times must have matching lengths")
    if y.size < 1:
        raise DomainError("log marginal likelihood needs at least one training point")
    builder = GramBuilder(times, covariates, spec)
    L, _ = _cholesky_escalating(builder, hyper)
    return _lml_from_chol(L, y)


def _default_start_vector(spec: KernelSpec) -> np.ndarray:
    return DEFAULT_START.to_vector(spec)


def optimize_hyperparameters(spec: KernelSpec, times, covariates, y_centered,
                             config: OptimizerConfig,
                             warm_start: KernelHyperparams | None = None) -> KernelHyperparams:
    """Maximize the log marginal likelihood over the box constraints.

    Derivative-free (Nelder-Mead) local searches from ``config.restarts``
    start points; returns the best hyperparameters over every objective
    evaluation made, so growing the budget never returns a worse point.
    """
    y = np.asarray(y_centered, dtype=float)
    times_arr = np.asarray(times, dtype=float)
    builder = GramBuilder(times_arr, covariates, spec)
    bounds = kernels.optimization_bounds(spec)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])

    best = {"f": math.inf, "x": None}

    def objective(vec: np.ndarray) -> float:
        hyper = KernelHyperparams.from_vector(np.clip(vec, lo, hi), spec)
        try:
            L, _ = _cholesky_escalating(builder, hyper)
        except NumericalError:
            return math.inf
        f = -_lml_from_chol(L, y)
        if f < best["f"]:
            best["f"] = f
            best["x"] = np.clip(vec, lo, hi).copy()
        return f

    rng = derive_rng(config.seed, "hyperopt")
    starts = [warm_start.to_vector(spec) if warm_start is not None else _default_start_vector(spec)]
    for _ in range(config.restarts - 1):
        starts.append(rng.uniform(lo, hi))

    for x0 in starts:
        x0 = np.clip(np.asarray(x0, dtype=float), lo, hi)
        if not math.isfinite(objective(x0)):
            continue
        minimize(
            objective,
            x0,
            method="Nelder-Mead",
            bounds=bounds,
            options={
                "maxfev": config.max_evals,
                "fatol": config.tol,
                "xatol": 1e-3,
                "adaptive": True,
            },
        )

    if best["x"] is None:
        raise NumericalError("no restart produced a factorizable Gram matrix")
    return KernelHyperparams.from_vector(best["x"], spec)


def fit(series, spec: KernelSpec, config: OptimizerConfig,
        hyper: KernelHyperparams | None = None) -> GpModel:
    """Fit a GP to a transformed series (optimize unless ``hyper`` given).

    ``series`` carries aligned ``weeks``, ``y_centered``, ``mean`` and,
    for the tweet-covariate kernel, ``x_tweets``.
    """
    times = np.asarray(series.weeks, dtype=float)
    y = np.asarray(series.y_centered, dtype=float)
    if times.size == 0:
        raise DomainError("cannot fit on an empty training window")
    covariates = None
    if spec.needs_covariates:
        if series.x_tweets is None:
            raise DomainError("tweet-covariate kernel requires x_tweets on the series")
        covariates = np.asarray(series.x_tweets, dtype=float)
    if hyper is None:
        hyper = optimize_hyperparameters(spec, times, covariates, y, config)
    builder = GramBuilder(times, covariates, spec)
    L, jitter = _cholesky_escalating(builder, hyper)
    alpha = cho_solve((L, True), y)
    return GpModel(
        train_times=times,
        train_covariates=covariates,
        y_centered=y,
        city_mean=float(series.mean),
        hyper=hyper,
        spec=spec,
        chol=L,
        alpha=alpha,
        jitter=jitter,
    )


def predict(model: GpModel, query_times, query_covariates=None) -> list[Prediction]:
    """Posterior mean/variance at query weeks, mapped to the incidence scale.

    Predictive variance includes observation noise; with no training data
    the prior (mean 0, full prior variance) is returned.
    """
    q = np.asarray(query_times, dtype=float)
    if model.spec.needs_covariates:
        if query_covariates is None:
            raise DomainError("tweet-covariate kernel requires query covariates")
        qx = np.asarray(query_covariates, dtype=float)
        if qx.shape != q.shape:
            raise DomainError("query covariates length must match query times")
    else:
        if query_covariates is not None:
            raise DomainError("query covariates supplied for a temporal-only kernel")
        qx = None

    prior = np.full(q.shape, kernels.temporal_cov(0.0, model.hyper), dtype=float)
    if qx is not None:
        prior += qx * qx / model.hyper.ell_tw

    if model.n_train == 0:
        means = np.zeros(q.shape)
        variances = prior + model.hyper.noise_var
    else:
        k_star = kernels.cross_cov(
            q, model.train_times, qx, model.train_covariates, model.spec, model.hyper
        )
        means = k_star @ model.alpha
        v = solve_triangular(model.chol, k_star.T, lower=True)
        variances = prior - np.sum(v * v, axis=0) + model.hyper.noise_var

    return [
        Prediction.from_latent(float(m), float(var), model.city_mean)
        for m, var in zip(means, variances)
    ]


_BLOB_VERSION = 1


def model_to_blob(model: GpModel) -> str:
    """Serialize to versioned JSON text; round-trips exactly."""
    hyper = model.hyper
    payload = {
        "format": "epiwarn-gpmodel",
        "version": _BLOB_VERSION,
        "spec": model.spec.value,
        "train_times": model.train_times.tolist(),
        "train_covariates": None
        if model.train_covariates is None
        else model.train_covariates.tolist(),
        "y_centered": model.y_centered.tolist(),
        "city_mean": model.city_mean,
        "jitter": model.jitter,
        "hyper_log": {
            "log_sigma2_loc": hyper.log_sigma2_loc,
            "log_ell_loc": hyper.log_ell_loc,
            "log_sigma2_qp": hyper.log_sigma2_qp,
            "log_ell_qp": hyper.log_ell_qp,
            "log_ell_per": hyper.log_ell_per,
            "log_period_p": hyper.log_period_p,
            "log_ell_tw": hyper.log_ell_tw,
            "log_noise_var": hyper.log_noise_var,
        },
        "chol": model.chol.tolist(),
        "alpha": model.alpha.tolist(),
    }
    return json.dumps(payload, sort_keys=True)


def model_from_blob(text: str) -> GpModel:
    payload = json.loads(text)
    if payload.get("format") != "epiwarn-gpmodel" or payload.get("version") != _BLOB_VERSION:
        raise DomainError("unrecognized model blob format or version")
    spec = KernelSpec(payload["spec"])
    hyper = KernelHyperparams(**payload["hyper_log"])
    cov = payload["train_covariates"]
    return GpModel(
        train_times=np.asarray(payload["train_times"], dtype=float),
        train_covariates=None if cov is None else np.asarray(cov, dtype=float),
        y_centered=np.asarray(payload["y_centered"], dtype=float),
        city_mean=float(payload["city_mean"]),
        hyper=hyper,
        spec=spec,
        chol=np.asarray(payload["chol"], dtype=float),
        alpha=np.asarray(payload["alpha"], dtype=float),
        jitter=float(payload["jitter"]),
    )
