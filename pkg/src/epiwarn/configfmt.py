"""Flat ``key = value`` run configuration files.

One key per line, ``#`` comments, no sections. Unknown keys are errors.
Relative data paths are resolved against the config file's directory.
"""

from __future__ import annotations

import os

from .errors import ConfigError
from .experiment import BacktestConfig, SyntheticSpec
from .kernels import KernelHyperparams
from .util import fmt_float


def parse_flat(path) -> dict[str, str]:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}")
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key in values:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def _take_int(values, key, default):
    if key not in values:
        return default
    raw = values.pop(key)
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(f"key {key!r}: expected an integer, got {raw!r}")


def _take_float(values, key, default):
    if key not in values:
        return default
    raw = values.pop(key)
    try:
        return float(raw)
    except ValueError:
        raise ConfigError(f"key {key!r}: expected a number, got {raw!r}")


def _take_list(values, key, default, conv):
    if key not in values:
        return default
    raw = values.pop(key)
    try:
        return tuple(conv(part.strip()) for part in raw.split(",") if part.strip())
    except ValueError:
        raise ConfigError(f"key {key!r}: expected comma-separated numbers, got {raw!r}")


def _reject_unknown(values, path):
    if values:
        raise ConfigError(f"{path}: unknown keys: {', '.join(sorted(values))}")


def _resolve(base_dir, path):
    return path if os.path.isabs(path) else os.path.normpath(os.path.join(base_dir, path))


def load_backtest_config(path) -> tuple[BacktestConfig, str, str | None]:
    """Parse a backtest config file -> (config, epi_path, tweet_path)."""
    values = parse_flat(path)
    base_dir = os.path.dirname(os.path.abspath(path))
    if "epi_path" not in values:
        raise ConfigError(f"{path}: missing required key 'epi_path'")
    epi_path = _resolve(base_dir, values.pop("epi_path"))
    tweet_path = values.pop("tweet_path", None)
    if tweet_path is not None:
        tweet_path = _resolve(base_dir, tweet_path)
    defaults = BacktestConfig()
    score_mode = values.pop("score_mode", defaults.score_mode)
    try:
        config = BacktestConfig(
            beta=_take_int(values, "beta", defaults.beta),
            gamma_grid=_take_list(values, "gamma_grid", defaults.gamma_grid, int),
            threshold_grid=_take_list(values, "threshold_grid", defaults.threshold_grid, float),
            train_only_weeks=_take_int(values, "train_only_weeks", defaults.train_only_weeks),
            refit_stride=_take_int(values, "refit_stride", defaults.refit_stride),
            seed=_take_int(values, "seed", defaults.seed),
            score_mode=score_mode,
            opt_restarts=_take_int(values, "opt_restarts", defaults.opt_restarts),
            opt_max_evals=_take_int(values, "opt_max_evals", defaults.opt_max_evals),
            opt_tol=_take_float(values, "opt_tol", defaults.opt_tol),
            alpha=_take_float(values, "alpha", defaults.alpha),
        )
    except ConfigError:
        raise
    _reject_unknown(values, path)
    return config, epi_path, tweet_path


def write_backtest_config(path, config: BacktestConfig, epi_path: str,
                          tweet_path: str | None = None) -> None:
    lines = [
        f"epi_path = {epi_path}",
    ]
    if tweet_path is not None:
        lines.append(f"tweet_path = {tweet_path}")
    lines += [
        f"beta = {config.beta}",
        "gamma_grid = " + ",".join(str(g) for g in config.gamma_grid),
        "threshold_grid = " + ",".join(fmt_float(t) for t in config.threshold_grid),
        f"train_only_weeks = {config.train_only_weeks}",
        f"refit_stride = {config.refit_stride}",
        f"seed = {config.seed}",
        f"score_mode = {config.score_mode}",
        f"opt_restarts = {config.opt_restarts}",
        f"opt_max_evals = {config.opt_max_evals}",
        f"opt_tol = {fmt_float(config.opt_tol)}",
        f"alpha = {fmt_float(config.alpha)}",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


_HYPER_KEYS = ("sigma2_loc", "ell_loc", "sigma2_qp", "ell_qp", "ell_per", "period_p",
               "noise_var")


def load_synth_spec(path) -> SyntheticSpec:
    """Parse a synthetic-universe spec file."""
    values = parse_flat(path)
    defaults = SyntheticSpec()
    hyper_kwargs = {}
    for key in _HYPER_KEYS:
        if key in values:
            hyper_kwargs[key] = _take_float(values, key, None)
    if hyper_kwargs:
        base = defaults.hyper
        full = {
            "sigma2_loc": base.sigma2_loc, "ell_loc": base.ell_loc,
            "sigma2_qp": base.sigma2_qp, "ell_qp": base.ell_qp,
            "ell_per": base.ell_per, "period_p": base.period_p,
            "noise_var": base.noise_var,
        }
        full.update(hyper_kwargs)
        hyper = KernelHyperparams.from_values(**full)
    else:
        hyper = defaults.hyper

    target = None
    if "tweet_correlation_target" in values:
        target = _take_float(values, "tweet_correlation_target", None)
    base_mean = None
    if "base_mean" in values:
        base_mean = _take_float(values, "base_mean", None)

    spec = SyntheticSpec(
        n_cities=_take_int(values, "n_cities", defaults.n_cities),
        weeks=_take_int(values, "weeks", defaults.weeks),
        hyper=hyper,
        tweet_link_slope=_take_float(values, "tweet_link_slope", defaults.tweet_link_slope),
        tweet_noise_sd=_take_float(values, "tweet_noise_sd", defaults.tweet_noise_sd),
        tweet_correlation_target=target,
        base_mean=base_mean,
        population=_take_int(values, "population", defaults.population),
    )
    _reject_unknown(values, path)
    return spec


def write_synth_spec(path, spec: SyntheticSpec) -> None:
    lines = [
        f"n_cities = {spec.n_cities}",
        f"weeks = {spec.weeks}",
        f"population = {spec.population}",
        f"tweet_link_slope = {fmt_float(spec.tweet_link_slope)}",
        f"tweet_noise_sd = {fmt_float(spec.tweet_noise_sd)}",
    ]
    if spec.tweet_correlation_target is not None:
        lines.append(f"tweet_correlation_target = {fmt_float(spec.tweet_correlation_target)}")
    if spec.base_mean is not None:
        lines.append(f"base_mean = {fmt_float(spec.base_mean)}")
    h = spec.hyper
    lines += [
        f"sigma2_loc = {fmt_float(h.sigma2_loc)}",
        f"ell_loc = {fmt_float(h.ell_loc)}",
        f"sigma2_qp = {fmt_float(h.sigma2_qp)}",
        f"ell_qp = {fmt_float(h.ell_qp)}",
        f"ell_per = {fmt_float(h.ell_per)}",
        f"period_p = {fmt_float(h.period_p)}",
        f"noise_var = {fmt_float(h.noise_var)}",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
