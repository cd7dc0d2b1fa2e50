"""Backtest output files: predictions CSV, report JSON, plot-ready TSVs.

All emitters format floats with shortest round-trip ``repr`` and fix row
ordering, so identical runs produce byte-identical files.
"""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .data_model import IncidenceLevel
from .errors import DomainError, ParseError
from .evaluation import EvalReport, qq_residual_data
from .experiment import BacktestResult
from .forecaster import Strategy
from .util import fmt_float

PREDICTIONS_HEADER = [
    "city_id", "strategy", "issue_week", "target_week", "gamma", "threshold",
    "pred_dir", "lo95", "hi95", "p_low", "p_med", "p_high",
    "true_dir", "true_level", "gate_verdict", "gate_corr",
]

#: Operating point used by single-cell plot kinds when the grid has it.
PREFERRED_CELL = (6, 0.5)


def write_predictions_csv(result: BacktestResult, path) -> None:
    """One row per (cell, city, issue week, strategy), fully ordered."""
    runs_by_city_gamma = {(r.city_id, r.gamma): r for r in result.runs}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PREDICTIONS_HEADER)
        for gamma in sorted(result.reports):
            for thr in sorted(result.reports[gamma]):
                for (city_id, g), run in sorted(runs_by_city_gamma.items()):
                    if g != gamma or run.error is not None:
                        continue
                    paired = []
                    for rec in run.baseline:
                        paired.append((rec.issue_week, 0, rec))
                    for rec in run.framework[thr]:
                        paired.append((rec.issue_week, 1, rec))
                    for _, _, rec in sorted(paired, key=lambda x: (x[0], x[1])):
                        writer.writerow([
                            rec.city_id,
                            rec.strategy.value,
                            rec.issue_week,
                            rec.target_week,
                            gamma,
                            fmt_float(thr),
                            fmt_float(rec.prediction.mean_dir),
                            fmt_float(rec.prediction.interval95_dir[0]),
                            fmt_float(rec.prediction.interval95_dir[1]),
                            fmt_float(rec.level_probs[0]),
                            fmt_float(rec.level_probs[1]),
                            fmt_float(rec.level_probs[2]),
                            fmt_float(rec.true_dir) if rec.true_dir is not None else "",
                            rec.true_level.label if rec.true_level is not None else "",
                            rec.gate_verdict.value if rec.gate_verdict is not None else "",
                            fmt_float(rec.gate_correlation)
                            if rec.gate_correlation is not None else "",
                        ])


def read_predictions_csv(path) -> list[dict]:
    """Typed rows back from the predictions CSV."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != PREDICTIONS_HEADER:
            raise ParseError(f"bad predictions header {header!r}", path=path, row=1)
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(PREDICTIONS_HEADER):
                raise ParseError("wrong column count", path=path, row=row_no)
            rec = dict(zip(PREDICTIONS_HEADER, row))
            rows.append({
                "city_id": rec["city_id"],
                "strategy": Strategy(rec["strategy"]),
                "issue_week": int(rec["issue_week"]),
                "target_week": int(rec["target_week"]),
                "gamma": int(rec["gamma"]),
                "threshold": float(rec["threshold"]),
                "pred_dir": float(rec["pred_dir"]),
                "lo95": float(rec["lo95"]),
                "hi95": float(rec["hi95"]),
                "p_low": float(rec["p_low"]),
                "p_med": float(rec["p_med"]),
                "p_high": float(rec["p_high"]),
                "true_dir": float(rec["true_dir"]) if rec["true_dir"] else None,
                "true_level": IncidenceLevel.from_label(rec["true_level"])
                if rec["true_level"] else None,
                "gate_verdict": rec["gate_verdict"] or None,
                "gate_corr": float(rec["gate_corr"]) if rec["gate_corr"] else None,
            })
    return rows


def reports_to_json(reports: dict[int, dict[float, EvalReport]]) -> str:
    payload = {
        str(gamma): {
            fmt_float(thr): report.to_dict()
            for thr, report in reports[gamma].items()
        }
        for gamma in reports
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def reports_from_json(text: str) -> dict[int, dict[float, EvalReport]]:
    payload = json.loads(text)
    return {
        int(gamma): {
            float(thr): EvalReport.from_dict(cell)
            for thr, cell in cells.items()
        }
        for gamma, cells in payload.items()
    }


def default_cell(reports: dict[int, dict[float, EvalReport]]) -> tuple[int, float]:
    """The cell single-cell plots read: (6, 0.5) when present, else first."""
    gamma, thr = PREFERRED_CELL
    if gamma in reports and thr in reports[gamma]:
        return gamma, thr
    gamma = sorted(reports)[0]
    return gamma, sorted(reports[gamma])[0]


def diff_bars_rows(reports: dict[int, dict[float, EvalReport]]) -> tuple[list[str], list[tuple]]:
    """Mean AUC difference per cell with a 95% normal-approximation CI."""
    header = ["gamma", "threshold", "mean_diff", "ci_lo", "ci_hi"]
    rows = []
    for gamma in sorted(reports):
        for thr in sorted(reports[gamma]):
            diffs = np.asarray(list(reports[gamma][thr].auc_differences.values()), dtype=float)
            if diffs.size == 0:
                mean = lo = hi = math.nan
            else:
                mean = float(diffs.mean())
                if diffs.size > 1:
                    half = 1.96 * float(diffs.std(ddof=1)) / math.sqrt(diffs.size)
                else:
                    half = math.nan
                lo, hi = mean - half, mean + half
            rows.append((gamma, fmt_float(thr), fmt_float(mean), fmt_float(lo), fmt_float(hi)))
    return header, rows


def auc_cdf_rows(reports: dict[int, dict[float, EvalReport]]) -> tuple[list[str], list[tuple]]:
    """Empirical CDF of per-city framework AUCs at the default cell."""
    gamma, thr = default_cell(reports)
    values = sorted(reports[gamma][thr].per_city_auc.values())
    if not values:
        raise DomainError("report cell has no per-city AUCs")
    header = ["auc", "cumulative_fraction"]
    n = len(values)
    rows = []
    for i, v in enumerate(values, start=1):
        if i < n and values[i] == v:
            continue  # keep only the top of each step
        rows.append((fmt_float(v), fmt_float(i / n)))
    return header, rows


def qq_rows(prediction_rows: list[dict],
            cell: tuple[int, float]) -> tuple[list[str], list[tuple]]:
    """Normal QQ pairs of latent-scale forecast residuals at one cell."""
    gamma, thr = cell
    residuals = [
        math.log1p(row["true_dir"]) - math.log1p(row["pred_dir"])
        for row in prediction_rows
        if row["strategy"] is Strategy.FRAMEWORK
        and row["gamma"] == gamma
        and row["threshold"] == thr
        and row["true_dir"] is not None
    ]
    if len(residuals) < 3:
        raise DomainError(f"fewer than 3 residuals at cell gamma={gamma}, threshold={thr}")
    header = ["theoretical", "observed"]
    rows = [(fmt_float(t), fmt_float(o)) for t, o in qq_residual_data(residuals)]
    return header, rows


def write_tsv(path, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\t".join(header) + "\n")
        for row in rows:
            fh.write("\t".join(str(v) for v in row) + "\n")


def format_diff_table(reports: dict[int, dict[float, EvalReport]]) -> str:
    """Human-readable grid of mean AUC differences (rows: gamma)."""
    thresholds = sorted({thr for cells in reports.values() for thr in cells})
    width = 12
    lines = ["mean AUC difference (framework - increased antecedence); * significant"]
    lines.append("gamma".ljust(8) + "".join(f"thr={fmt_float(t)}".rjust(width) for t in thresholds))
    for gamma in sorted(reports):
        cells = []
        for thr in thresholds:
            report = reports[gamma].get(thr)
            if report is None:
                cells.append("-".rjust(width))
                continue
            mark = "*" if report.significant else ""
            cells.append(f"{report.mean_difference:+.4f}{mark}".rjust(width))
        lines.append(f"{gamma}".ljust(8) + "".join(cells))
    return "\n".join(lines)
