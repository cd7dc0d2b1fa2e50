"""Service operations on local files: validate, synth, backtest, plotdata.

These are the single implementation behind both the HTTP endpoints and
the CLI. File paths in requests are interpreted on the machine running
the service.
"""

from __future__ import annotations

import os

from ..configfmt import load_backtest_config, load_synth_spec
from ..data_model import (
    filter_cities,
    dump_epi_table,
    dump_tweet_table,
    incidence_level,
    load_epi_table,
    load_tweet_table,
)
from ..errors import ConfigError, EpiwarnError, ParseError
from ..experiment import SyntheticSpec, compare, generate_synthetic
from ..manifest import RunManifest
from ..reporting import (
    auc_cdf_rows,
    default_cell,
    diff_bars_rows,
    format_diff_table,
    qq_rows,
    read_predictions_csv,
    reports_from_json,
    reports_to_json,
    write_predictions_csv,
    write_tsv,
)
from .schemas import (
    BacktestRequest,
    BacktestResponse,
    CellSummary,
    CitySummary,
    PlotdataRequest,
    PlotdataResponse,
    SynthRequest,
    SynthResponse,
    ValidateRequest,
    ValidateResponse,
)

SYNTH_EPI_NAME = "synthetic_epi.csv"
SYNTH_TWEET_NAME = "synthetic_tweets.csv"
PREDICTIONS_NAME = "predictions.csv"
REPORT_NAME = "report.json"
MANIFEST_NAME = "manifest.json"


def _load_universe(epi_path: str, tweet_path: str | None):
    cities = load_epi_table(epi_path)
    if tweet_path is not None:
        cities = load_tweet_table(tweet_path, cities)
    return cities


def handle_validate(req: ValidateRequest) -> ValidateResponse:
    """Load and check the data files; schema violations become messages."""
    try:
        cities = _load_universe(req.epi_path, req.tweet_path)
    except (ParseError, OSError) as exc:
        return ValidateResponse(ok=False, errors=[str(exc)])
    passing = {c.city_id for c in filter_cities(cities)}
    summaries = [
        CitySummary(
            city_id=c.city_id,
            population=c.population,
            first_week=int(c.weeks[0]),
            last_week=c.last_week,
            peak_dir=c.peak_dir,
            peak_level=incidence_level(c.peak_dir).label,
            has_tweets=c.tweets is not None,
            passes_filter=c.city_id in passing,
        )
        for c in cities
    ]
    return ValidateResponse(
        ok=True,
        n_cities=len(cities),
        n_passing_filter=len(passing),
        tweets_present=any(c.tweets is not None for c in cities),
        cities=summaries,
    )


def handle_synth(req: SynthRequest) -> SynthResponse:
    """Generate a synthetic universe and write the two CSVs."""
    spec = load_synth_spec(req.spec_path) if req.spec_path else SyntheticSpec()
    cities = generate_synthetic(spec, seed=req.seed)
    os.makedirs(req.out_dir, exist_ok=True)
    epi_path = os.path.join(req.out_dir, SYNTH_EPI_NAME)
    tweet_path = os.path.join(req.out_dir, SYNTH_TWEET_NAME)
    dump_epi_table(cities, epi_path)
    dump_tweet_table(cities, tweet_path)
    return SynthResponse(
        epi_path=epi_path, tweet_path=tweet_path,
        n_cities=spec.n_cities, weeks=spec.weeks,
    )


def handle_backtest(req: BacktestRequest) -> BacktestResponse:
    """Run the full grid backtest, writing predictions, report, manifest.

    On failure, files created by this run are removed before the error
    propagates.
    """
    config, epi_path, tweet_path = load_backtest_config(req.config_path)
    if req.seed is not None:
        from dataclasses import replace

        config = replace(config, seed=req.seed)
    cities = filter_cities(_load_universe(epi_path, tweet_path))
    if not cities:
        raise ConfigError("no cities pass the population/incidence filter")

    os.makedirs(req.out_dir, exist_ok=True)
    predictions_path = os.path.join(req.out_dir, PREDICTIONS_NAME)
    report_path = os.path.join(req.out_dir, REPORT_NAME)
    manifest_path = os.path.join(req.out_dir, MANIFEST_NAME)

    inputs = [req.config_path, epi_path] + ([tweet_path] if tweet_path else [])
    manifest = RunManifest.start("backtest", config.seed, config.to_dict(), inputs)
    manifest.write(manifest_path)

    created = [manifest_path]
    try:
        result = compare(cities, config, jobs=req.jobs)
        write_predictions_csv(result, predictions_path)
        created.append(predictions_path)
        with open(report_path, "w", encoding="utf-8") as fh:
            fh.write(reports_to_json(result.reports))
        created.append(report_path)
    except Exception:
        for path in created:
            try:
                os.remove(path)
            except OSError:
                pass
        raise

    manifest.finalize(outputs=[predictions_path, report_path])
    manifest.write(manifest_path)

    cells = [
        CellSummary(
            gamma=gamma,
            threshold=thr,
            mean_diff=report.mean_difference,
            wilcoxon_p=report.wilcoxon_p,
            significant=report.significant,
            n_cities=len(report.auc_differences),
        )
        for gamma, thr, report in result.cells
    ]
    return BacktestResponse(
        out_dir=req.out_dir,
        predictions_path=predictions_path,
        report_path=report_path,
        manifest_path=manifest_path,
        n_cities=len(cities),
        table_text=format_diff_table(result.reports),
        cells=cells,
    )


def handle_plotdata(req: PlotdataRequest) -> PlotdataResponse:
    """Derive a plot-ready TSV from a finished run's outputs."""
    report_path = req.report_path
    if os.path.isdir(report_path):
        report_path = os.path.join(report_path, REPORT_NAME)
    try:
        with open(report_path, encoding="utf-8") as fh:
            reports = reports_from_json(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read report {report_path}: {exc}")

    if req.kind == "diff_bars":
        header, rows = diff_bars_rows(reports)
    elif req.kind == "auc_cdf":
        header, rows = auc_cdf_rows(reports)
    else:
        predictions_path = os.path.join(os.path.dirname(report_path), PREDICTIONS_NAME)
        if not os.path.exists(predictions_path):
            raise ConfigError(f"qq needs {predictions_path} next to the report")
        header, rows = qq_rows(read_predictions_csv(predictions_path), default_cell(reports))

    out_path = req.out_path or os.path.join(
        os.path.dirname(report_path), f"plot_{req.kind}.tsv"
    )
    write_tsv(out_path, header, rows)
    return PlotdataResponse(out_path=out_path, n_rows=len(rows))
