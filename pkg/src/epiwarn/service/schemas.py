"""Pydantic request/response models for the epiwarn service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class HealthResponse(BaseModel):
    status: str
    version: str


class ValidateRequest(BaseModel):
    epi_path: str
    tweet_path: Optional[str] = None


class CitySummary(BaseModel):
    city_id: str
    population: int
    first_week: int
    last_week: int
    peak_dir: float
    peak_level: str
    has_tweets: bool
    passes_filter: bool


class ValidateResponse(BaseModel):
    ok: bool
    errors: list[str] = Field(default_factory=list)
    n_cities: int = 0
    n_passing_filter: int = 0
    tweets_present: bool = False
    cities: list[CitySummary] = Field(default_factory=list)


class SynthRequest(BaseModel):
    out_dir: str
    spec_path: Optional[str] = None
    seed: int = 0


class SynthResponse(BaseModel):
    epi_path: str
    tweet_path: str
    n_cities: int
    weeks: int


class BacktestRequest(BaseModel):
    config_path: str
    out_dir: str
    seed: Optional[int] = None
    jobs: int = 1


class CellSummary(BaseModel):
    gamma: int
    threshold: float
    mean_diff: float
    wilcoxon_p: float
    significant: bool
    n_cities: int


class BacktestResponse(BaseModel):
    out_dir: str
    predictions_path: str
    report_path: str
    manifest_path: str
    n_cities: int
    table_text: str
    cells: list[CellSummary]


class PlotdataRequest(BaseModel):
    report_path: str
    kind: Literal["diff_bars", "auc_cdf", "qq"]
    out_path: Optional[str] = None


class PlotdataResponse(BaseModel):
    out_path: str
    n_rows: int


class ErrorDetail(BaseModel):
    error_type: str
    message: str
