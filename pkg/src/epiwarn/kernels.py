"""Covariance functions for weekly incidence series.

The temporal prior is a sum of two stationary parts: a Matérn-5/2 term for
short-range week-to-week dependence and a quasi-periodic term (Matérn-5/2
envelope times an exponential-of-sin² factor) for decaying annual
seasonality. A nowcasting variant adds a linear term over a transformed
tweet-count covariate.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, ParseError
from .util import fmt_float

SQRT5 = math.sqrt(5.0)

#: Diagonal jitter added to every Gram matrix before factorization.
DEFAULT_JITTER = 1e-8
#: Jitter escalation ceiling; factorization failure beyond this is an error.
MAX_JITTER = 1e-4

# Box constraints (natural scale) for hyperparameter optimization.
VARIANCE_BOUNDS = (1e-4, 1e2)
LENGTH_SCALE_BOUNDS = (0.5, 300.0)
PERIOD_BOUNDS = (20.0, 120.0)
TWEET_SCALE_BOUNDS = (1e-3, 1e3)


class KernelSpec(enum.Enum):
    """Which covariance the model uses."""

    TEMPORAL_ONLY = "temporal_only"
    TEMPORAL_PLUS_TWEET = "temporal_plus_tweet"

    @property
    def needs_covariates(self) -> bool:
        return self is KernelSpec.TEMPORAL_PLUS_TWEET


_SERIAL_KEYS = (
    "sigma2_loc",
    "ell_loc",
    "sigma2_qp",
    "ell_qp",
    "ell_per",
    "period_p",
    "ell_tw",
    "noise_var",
)


@dataclass(frozen=True)
class KernelHyperparams:
    """Kernel hyperparameters, stored in natural-log space.

    Log storage is the optimizer's parameterization; natural values are
    exposed as properties. ``log_ell_tw`` is None for temporal-only models.
    ``noise_var`` may be exactly 0 (stored as -inf).
    """

    log_sigma2_loc: float
    log_ell_loc: float
    log_sigma2_qp: float
    log_ell_qp: float
    log_ell_per: float
    log_period_p: float
    log_noise_var: float
    log_ell_tw: float | None = None

    @classmethod
    def from_values(
        cls,
        sigma2_loc: float,
        ell_loc: float,
        sigma2_qp: float,
        ell_qp: float,
        ell_per: float,
        period_p: float,
        noise_var: float = 0.0,
        ell_tw: float | None = None,
    ) -> "KernelHyperparams":
        for name, v in (
            ("sigma2_loc", sigma2_loc),
            ("ell_loc", ell_loc),
            ("sigma2_qp", sigma2_qp),
            ("ell_qp", ell_qp),
            ("ell_per", ell_per),
            ("period_p", period_p),
        ):
            if not v > 0:
                raise DomainError(f"{name} must be strictly positive, got {v}")
        if noise_var < 0:
            raise DomainError(f"noise_var must be non-negative, got {noise_var}")
        if ell_tw is not None and not ell_tw > 0:
            raise DomainError(f"ell_tw must be strictly positive, got {ell_tw}")
        return cls(
            log_sigma2_loc=math.log(sigma2_loc),
            log_ell_loc=math.log(ell_loc),
            log_sigma2_qp=math.log(sigma2_qp),
            log_ell_qp=math.log(ell_qp),
            log_ell_per=math.log(ell_per),
            log_period_p=math.log(period_p),
            log_noise_var=math.log(noise_var) if noise_var > 0 else -math.inf,
            log_ell_tw=math.log(ell_tw) if ell_tw is not None else None,
        )

    @property
    def sigma2_loc(self) -> float:
        return math.exp(self.log_sigma2_loc)

    @property
    def ell_loc(self) -> float:
        return math.exp(self.log_ell_loc)

    @property
    def sigma2_qp(self) -> float:
        return math.exp(self.log_sigma2_qp)

    @property
    def ell_qp(self) -> float:
        return math.exp(self.log_ell_qp)

    @property
    def ell_per(self) -> float:
        return math.exp(self.log_ell_per)

    @property
    def period_p(self) -> float:
        return math.exp(self.log_period_p)

    @property
    def noise_var(self) -> float:
        return math.exp(self.log_noise_var)

    @property
    def ell_tw(self) -> float | None:
        return None if self.log_ell_tw is None else math.exp(self.log_ell_tw)

    @property
    def has_tweet_term(self) -> bool:
        return self.log_ell_tw is not None

    def to_vector(self, spec: KernelSpec) -> np.ndarray:
        """Pack into the optimizer's log-space vector for ``spec``."""
        vec = [
            self.log_sigma2_loc,
            self.log_ell_loc,
            self.log_sigma2_qp,
            self.log_ell_qp,
            self.log_ell_per,
            self.log_period_p,
        ]
        if spec.needs_covariates:
            if self.log_ell_tw is None:
                raise DomainError("tweet-term scale missing for a tweet-covariate kernel")
            vec.append(self.log_ell_tw)
        vec.append(self.log_noise_var)
        return np.asarray(vec, dtype=float)

    @classmethod
    def from_vector(cls, vec, spec: KernelSpec) -> "KernelHyperparams":
        vec = np.asarray(vec, dtype=float)
        expected = 8 if spec.needs_covariates else 7
        if vec.shape != (expected,):
            raise DomainError(f"expected a vector of length {expected}, got shape {vec.shape}")
        return cls(
            log_sigma2_loc=float(vec[0]),
            log_ell_loc=float(vec[1]),
            log_sigma2_qp=float(vec[2]),
            log_ell_qp=float(vec[3]),
            log_ell_per=float(vec[4]),
            log_period_p=float(vec[5]),
            log_ell_tw=float(vec[6]) if spec.needs_covariates else None,
            log_noise_var=float(vec[-1]),
        )

    def with_noise_var(self, noise_var: float) -> "KernelHyperparams":
        if noise_var < 0:
            raise DomainError(f"noise_var must be non-negative, got {noise_var}")
        return replace(
            self, log_noise_var=math.log(noise_var) if noise_var > 0 else -math.inf
        )

    def to_text(self) -> str:
        """Flat ``key = value`` block; ``ell_tw`` omitted when absent."""
        lines = []
        for key in _SERIAL_KEYS:
            value = getattr(self, key)
            if value is None:
                continue
            lines.append(f"{key} = {fmt_float(value)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "KernelHyperparams":
        values: dict[str, float] = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError("expected 'key = value'", row=lineno)
            key, _, val = line.partition("=")
            key = key.strip()
            if key not in _SERIAL_KEYS:
                raise ParseError(f"unknown hyperparameter key {key!r}", row=lineno)
            if key in values:
                raise ParseError(f"duplicate key {key!r}", row=lineno)
            try:
                values[key] = float(val.strip())
            except ValueError:
                raise ParseError(f"non-numeric value {val.strip()!r}", row=lineno, field=key)
        missing = [k for k in _SERIAL_KEYS if k not in values and k != "ell_tw"]
        if missing:
            raise ParseError(f"missing hyperparameter keys: {', '.join(missing)}")
        return cls.from_values(**values)


def optimization_bounds(spec: KernelSpec) -> list[tuple[float, float]]:
    """Log-space box constraints in ``to_vector`` order."""
    bounds = [
        VARIANCE_BOUNDS,
        LENGTH_SCALE_BOUNDS,
        VARIANCE_BOUNDS,
        LENGTH_SCALE_BOUNDS,
        LENGTH_SCALE_BOUNDS,
        PERIOD_BOUNDS,
    ]
    if spec.needs_covariates:
        bounds.append(TWEET_SCALE_BOUNDS)
    bounds.append(VARIANCE_BOUNDS)
    return [(math.log(lo), math.log(hi)) for lo, hi in bounds]


def matern52(tau, sigma2: float, ell: float):
    """Matérn-5/2 covariance at lag ``tau`` (scalar or array), symmetric in tau."""
    if not sigma2 > 0:
        raise DomainError(f"sigma2 must be strictly positive, got {sigma2}")
    if not ell > 0:
        raise DomainError(f"ell must be strictly positive, got {ell}")
    tau = np.abs(np.asarray(tau, dtype=float))
    r = SQRT5 * tau / ell
    out = sigma2 * (1.0 + r + 5.0 * tau * tau / (3.0 * ell * ell)) * np.exp(-r)
    return out if out.ndim else float(out)


def quasi_periodic(tau, sigma2: float, ell_qp: float, ell_per: float, period_p: float):
    """Quasi-periodic covariance: Matérn-5/2 envelope times a periodic factor."""
    if not ell_per > 0:
        raise DomainError(f"ell_per must be strictly positive, got {ell_per}")
    if not period_p > 0:
        raise DomainError(f"period_p must be strictly positive, got {period_p}")
    tau_arr = np.abs(np.asarray(tau, dtype=float))
    env = matern52(tau_arr, sigma2, ell_qp)
    s = np.sin(np.pi * tau_arr / period_p)
    out = env * np.exp(-2.0 * s * s / ell_per)
    return out if out.ndim else float(out)


def temporal_cov(tau, hyper: KernelHyperparams):
    """Sum of the local Matérn-5/2 and the quasi-periodic seasonal term."""
    return matern52(tau, hyper.sigma2_loc, hyper.ell_loc) + quasi_periodic(
        tau, hyper.sigma2_qp, hyper.ell_qp, hyper.ell_per, hyper.period_p
    )


def tweet_term(x1, x2, ell_tw: float):
    """Linear covariance over the tweet covariate: x1*x2/ell_tw."""
    if not ell_tw > 0:
        raise DomainError(f"ell_tw must be strictly positive, got {ell_tw}")
    out = np.asarray(x1, dtype=float) * np.asarray(x2, dtype=float) / ell_tw
    return out if out.ndim else float(out)


class GramBuilder:
    """Precomputes lag structure for repeated Gram builds on fixed inputs.

    For integer-valued times (the weekly grid) the temporal part is
    evaluated once per distinct lag and gathered, which is what makes
    likelihood optimization affordable.
    """

    def __init__(self, times, covariates, spec: KernelSpec):
        times = np.asarray(times, dtype=float)
        if times.ndim != 1:
            raise DomainError("times must be one-dimensional")
        if spec.needs_covariates:
            if covariates is None:
                raise DomainError("tweet-covariate kernel requires a covariate vector")
            covariates = np.asarray(covariates, dtype=float)
            if covariates.shape != times.shape:
                raise DomainError(
                    f"covariates length {covariates.shape} != times length {times.shape}"
                )
        elif covariates is not None:
            raise DomainError("covariates supplied for a temporal-only kernel")
        self.times = times
        self.covariates = covariates
        self.spec = spec
        self.n = times.size

        rounded = np.rint(times)
        if self.n and np.array_equal(rounded, times):
            lags = np.abs(rounded.astype(np.int64)[:, None] - rounded.astype(np.int64)[None, :])
            self._lag_index = lags
            self._max_lag = int(lags.max()) if self.n else 0
            self._lag_matrix = None
        else:
            self._lag_index = None
            self._lag_matrix = np.abs(times[:, None] - times[None, :])

    def _temporal_block(self, hyper: KernelHyperparams) -> np.ndarray:
        if self.n == 0:
            return np.zeros((0, 0))
        if self._lag_index is not None:
            table = temporal_cov(np.arange(self._max_lag + 1, dtype=float), hyper)
            table = np.atleast_1d(np.asarray(table, dtype=float))
            return table[self._lag_index]
        return np.asarray(temporal_cov(self._lag_matrix, hyper), dtype=float)

    def build(self, hyper: KernelHyperparams, jitter: float = DEFAULT_JITTER) -> np.ndarray:
        K = self._temporal_block(hyper)
        if self.spec.needs_covariates:
            if hyper.ell_tw is None:
                raise DomainError("tweet-term scale missing for a tweet-covariate kernel")
            K = K + np.outer(self.covariates, self.covariates) / hyper.ell_tw
        idx = np.arange(self.n)
        K[idx, idx] += hyper.noise_var + jitter
        return K


def gram(times, covariates, spec: KernelSpec, hyper: KernelHyperparams,
         jitter: float = DEFAULT_JITTER) -> np.ndarray:
    """Gram matrix over ``times`` (+ optional covariates) with noise and jitter."""
    return GramBuilder(times, covariates, spec).build(hyper, jitter)


def cross_cov(query_times, train_times, query_covariates, train_covariates,
              spec: KernelSpec, hyper: KernelHyperparams) -> np.ndarray:
    """Covariance between query points (rows) and training points (columns).

    Noise and jitter are diagonal-only terms and never appear here.
    """
    q = np.asarray(query_times, dtype=float)
    t = np.asarray(train_times, dtype=float)
    lag = np.abs(q[:, None] - t[None, :])
    K = np.asarray(temporal_cov(lag, hyper), dtype=float)
    if spec.needs_covariates:
        if query_covariates is None or train_covariates is None:
            raise DomainError("tweet-covariate kernel requires covariates on both sides")
        qx = np.asarray(query_covariates, dtype=float)
        tx = np.asarray(train_covariates, dtype=float)
        K = K + np.outer(qx, tx) / hyper.ell_tw
    return K


def prior_variance(hyper: KernelHyperparams, spec: KernelSpec, covariate: float = 0.0) -> float:
    """Self-covariance of one point under the prior, excluding noise."""
    v = temporal_cov(0.0, hyper)
    if spec.needs_covariates:
        v += tweet_term(covariate, covariate, hyper.ell_tw)
    return float(v)
