"""Weekly incidence data: ingestion, incidence rates, levels, transforms.

The incidence rate is cases per 100,000 inhabitants per week. Weekly rates
are banded into three levels (low/medium/high) at 25 and 75. Model targets
are log(rate+1), centered by the mean over the training horizon available
at fit time.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, replace

import numpy as np

from .errors import DomainError, ParseError

PER_CAPITA_SCALE = 100_000.0
#: Weekly-rate boundaries between the three incidence levels.
MEDIUM_DIR = 25.0
HIGH_DIR = 75.0

EPI_HEADER = ["city_id", "week", "cases", "population"]
TWEET_HEADER = ["city_id", "week", "tweet_count"]


class IncidenceLevel(enum.IntEnum):
    """Weekly incidence band; totally ordered low < medium < high."""

    LOW = 0
    MEDIUM = 1
    HIGH = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def from_label(cls, label: str) -> "IncidenceLevel":
        try:
            return cls[label.upper()]
        except KeyError:
            raise DomainError(f"unknown incidence level {label!r}")


def compute_dir(cases: int, population: int) -> float:
    """Weekly incidence rate: cases per 100,000 inhabitants."""
    if population <= 0:
        raise DomainError("zero population")
    if cases < 0:
        raise DomainError(f"case count must be non-negative, got {cases}")
    return cases * PER_CAPITA_SCALE / population


def incidence_level(dir_value: float) -> IncidenceLevel:
    """Band a weekly rate: [0,25) low, [25,75) medium, [75,inf) high."""
    if dir_value < 0:
        raise DomainError(f"incidence rate must be non-negative, got {dir_value}")
    if dir_value >= HIGH_DIR:
        return IncidenceLevel.HIGH
    if dir_value >= MEDIUM_DIR:
        return IncidenceLevel.MEDIUM
    return IncidenceLevel.LOW


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class CitySeries:
    """Aligned weekly series for one city; immutable after construction.

    ``weeks`` are abstract indices 1..N (contiguous); ``tweets`` is None
    for cities without a tweet series.
    """

    city_id: str
    population: int
    weeks: np.ndarray
    cases: np.ndarray
    dir: np.ndarray
    tweets: np.ndarray | None = None

    def __post_init__(self):
        weeks = _readonly(np.asarray(self.weeks, dtype=np.int64))
        cases = _readonly(np.asarray(self.cases, dtype=np.int64))
        dir_arr = _readonly(np.asarray(self.dir, dtype=float))
        object.__setattr__(self, "weeks", weeks)
        object.__setattr__(self, "cases", cases)
        object.__setattr__(self, "dir", dir_arr)
        if self.population <= 0:
            raise DomainError(f"{self.city_id}: population must be positive")
        if weeks.size == 0:
            raise DomainError(f"{self.city_id}: empty week range")
        if weeks[0] != 1 or not np.array_equal(weeks, np.arange(1, weeks.size + 1)):
            raise DomainError(f"{self.city_id}: weeks must be contiguous starting at 1")
        if cases.shape != weeks.shape or dir_arr.shape != weeks.shape:
            raise DomainError(f"{self.city_id}: cases and dir must align with weeks")
        if np.any(cases < 0):
            raise DomainError(f"{self.city_id}: negative case count")
        expected = cases * (PER_CAPITA_SCALE / self.population)
        scale = np.maximum(np.abs(expected), 1.0)
        if np.any(np.abs(dir_arr - expected) > 1e-9 * scale):
            raise DomainError(f"{self.city_id}: dir inconsistent with cases/population")
        if self.tweets is not None:
            tweets = _readonly(np.asarray(self.tweets, dtype=np.int64))
            object.__setattr__(self, "tweets", tweets)
            if tweets.shape != weeks.shape:
                raise DomainError(f"{self.city_id}: tweets must cover the same week range")
            if np.any(tweets < 0):
                raise DomainError(f"{self.city_id}: negative tweet count")

    @classmethod
    def from_counts(cls, city_id: str, population: int, weeks, cases,
                    tweets=None) -> "CitySeries":
        cases_arr = np.asarray(cases, dtype=np.int64)
        if population <= 0:
            raise DomainError("zero population")
        dir_arr = cases_arr * (PER_CAPITA_SCALE / population)
        return cls(city_id=city_id, population=population, weeks=np.asarray(weeks),
                   cases=cases_arr, dir=dir_arr, tweets=tweets)

    @property
    def last_week(self) -> int:
        return int(self.weeks[-1])

    @property
    def peak_dir(self) -> float:
        return float(self.dir.max())

    def with_tweets(self, tweets) -> "CitySeries":
        return replace(self, tweets=np.asarray(tweets, dtype=np.int64))


@dataclass(frozen=True)
class TransformedSeries:
    """Log-transformed, centered targets aligned to ``weeks``.

    ``mean`` is computed over the training horizon only; ``y_centered``
    is ``y_raw - mean`` over the whole covered range. ``x_tweets`` is the
    log-transformed tweet covariate, or None when the city has no tweets.
    """

    weeks: np.ndarray
    y_raw: np.ndarray
    mean: float
    y_centered: np.ndarray
    x_tweets: np.ndarray | None = None

    def __post_init__(self):
        weeks = _readonly(np.asarray(self.weeks, dtype=np.int64))
        y_raw = _readonly(np.asarray(self.y_raw, dtype=float))
        y_centered = _readonly(np.asarray(self.y_centered, dtype=float))
        object.__setattr__(self, "weeks", weeks)
        object.__setattr__(self, "y_raw", y_raw)
        object.__setattr__(self, "y_centered", y_centered)
        if y_raw.shape != weeks.shape or y_centered.shape != weeks.shape:
            raise DomainError("transformed arrays must align with weeks")
        if self.x_tweets is not None:
            x = _readonly(np.asarray(self.x_tweets, dtype=float))
            object.__setattr__(self, "x_tweets", x)
            if x.shape != weeks.shape:
                raise DomainError("x_tweets must align with weeks")

    def through(self, week: int) -> "TransformedSeries":
        """Restriction to weeks <= ``week`` (centering mean unchanged)."""
        mask = self.weeks <= week
        if not mask.any():
            raise DomainError(f"no weeks at or before {week}")
        return TransformedSeries(
            weeks=self.weeks[mask],
            y_raw=self.y_raw[mask],
            mean=self.mean,
            y_centered=self.y_centered[mask],
            x_tweets=None if self.x_tweets is None else self.x_tweets[mask],
        )


def transform_dir(weeks, dir_values, training_horizon: int,
                  tweets=None) -> TransformedSeries:
    """Transform raw incidence-rate values (not necessarily count-derived).

    Used both for observed city series and for training windows augmented
    with estimated rates.
    """
    weeks = np.asarray(weeks, dtype=np.int64)
    dir_values = np.asarray(dir_values, dtype=float)
    if weeks.size == 0:
        raise DomainError("empty series")
    if training_horizon < weeks[0] or training_horizon > weeks[-1]:
        raise DomainError(
            f"training horizon {training_horizon} outside week range "
            f"[{weeks[0]}, {weeks[-1]}]"
        )
    y_raw = np.log1p(dir_values)
    mask = weeks <= training_horizon
    mean = float(np.mean(y_raw[mask]))
    x_tweets = None if tweets is None else np.log1p(np.asarray(tweets, dtype=float))
    return TransformedSeries(
        weeks=weeks, y_raw=y_raw, mean=mean, y_centered=y_raw - mean, x_tweets=x_tweets
    )


def transform(series: CitySeries, training_horizon: int) -> TransformedSeries:
    """log1p + horizon-mean centering of a city's incidence-rate series."""
    return transform_dir(series.weeks, series.dir, training_horizon, tweets=series.tweets)


def _parse_int(value: str, path, row: int, field: str, minimum: int = 0) -> int:
    try:
        parsed = int(value)
    except (TypeError, ValueError):
        raise ParseError(f"expected an integer, got {value!r}", path=path, row=row, field=field)
    if parsed < minimum:
        raise ParseError(f"value {parsed} below minimum {minimum}", path=path, row=row, field=field)
    return parsed


def _read_rows(path, expected_header: list[str]):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file, expected a header row", path=path)
        if header != expected_header:
            raise ParseError(
                f"bad header {header!r}, expected {expected_header!r}", path=path, row=1
            )
        for row_no, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(expected_header):
                raise ParseError(
                    f"expected {len(expected_header)} columns, got {len(row)}",
                    path=path, row=row_no,
                )
            yield row_no, row


def load_epi_table(path) -> list[CitySeries]:
    """Load the epidemiological CSV into one CitySeries per city.

    Weeks must be contiguous from 1 per city; population must be constant
    within a city; duplicates and negative counts are parse errors.
    """
    per_city: dict[str, dict] = {}
    for row_no, (city_id, week_s, cases_s, pop_s) in _read_rows(path, EPI_HEADER):
        week = _parse_int(week_s, path, row_no, "week", minimum=1)
        cases = _parse_int(cases_s, path, row_no, "cases", minimum=0)
        population = _parse_int(pop_s, path, row_no, "population", minimum=1)
        entry = per_city.setdefault(city_id, {"population": population, "rows": {}})
        if entry["population"] != population:
            raise ParseError(
                f"population changed from {entry['population']} to {population} "
                f"for city {city_id!r}",
                path=path, row=row_no, field="population",
            )
        if week in entry["rows"]:
            raise ParseError(f"duplicate week {week} for city {city_id!r}",
                             path=path, row=row_no, field="week")
        entry["rows"][week] = cases

    cities = []
    for city_id in sorted(per_city):
        entry = per_city[city_id]
        weeks = sorted(entry["rows"])
        for offset, week in enumerate(weeks, start=1):
            if week != offset:
                raise ParseError(
                    f"city {city_id!r} weeks are not contiguous from 1: missing week {offset}",
                    path=path, field="week",
                )
        cases = [entry["rows"][w] for w in weeks]
        cities.append(
            CitySeries.from_counts(city_id, entry["population"], weeks, cases)
        )
    return cities


def load_tweet_table(path, cities: list[CitySeries]) -> list[CitySeries]:
    """Attach tweet series from the tweet CSV to matching cities.

    Cities absent from the file keep ``tweets=None``. Rows for unknown
    cities, duplicate (city, week) rows, or coverage that does not match
    the city's week range are parse errors.
    """
    by_id = {c.city_id: c for c in cities}
    per_city: dict[str, dict[int, int]] = {}
    for row_no, (city_id, week_s, count_s) in _read_rows(path, TWEET_HEADER):
        week = _parse_int(week_s, path, row_no, "week", minimum=1)
        count = _parse_int(count_s, path, row_no, "tweet_count", minimum=0)
        if city_id not in by_id:
            raise ParseError(f"unknown city {city_id!r}", path=path, row=row_no, field="city_id")
        series = by_id[city_id]
        if week > series.last_week:
            raise ParseError(
                f"week {week} outside city {city_id!r} range 1..{series.last_week}",
                path=path, row=row_no, field="week",
            )
        rows = per_city.setdefault(city_id, {})
        if week in rows:
            raise ParseError(f"duplicate week {week} for city {city_id!r}",
                             path=path, row=row_no, field="week")
        rows[week] = count

    out = []
    for city in cities:
        if city.city_id not in per_city:
            out.append(city)
            continue
        rows = per_city[city.city_id]
        missing = [w for w in range(1, city.last_week + 1) if w not in rows]
        if missing:
            raise ParseError(
                f"city {city.city_id!r} tweet series missing week {missing[0]} "
                f"(must cover weeks 1..{city.last_week})",
                path=path, field="week",
            )
        out.append(city.with_tweets([rows[w] for w in range(1, city.last_week + 1)]))
    return out


def dump_epi_table(cities: list[CitySeries], path) -> None:
    """Re-emit the epidemiological CSV (rows sorted by city, then week)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(EPI_HEADER)
        for city in sorted(cities, key=lambda c: c.city_id):
            for week, cases in zip(city.weeks, city.cases):
                writer.writerow([city.city_id, int(week), int(cases), city.population])


def dump_tweet_table(cities: list[CitySeries], path) -> None:
    """Re-emit the tweet CSV; cities without tweets are omitted."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TWEET_HEADER)
        for city in sorted(cities, key=lambda c: c.city_id):
            if city.tweets is None:
                continue
            for week, count in zip(city.weeks, city.tweets):
                writer.writerow([city.city_id, int(week), int(count)])


def filter_cities(cities, min_population: int = 100_000,
                  min_peak_level: IncidenceLevel = IncidenceLevel.MEDIUM) -> list[CitySeries]:
    """Keep cities above the population floor that ever reach the peak level."""
    kept = []
    for city in cities:
        if city.population <= min_population:
            continue
        if incidence_level(city.peak_dir) < min_peak_level:
            continue
        kept.append(city)
    return kept
