"""Tick ingestion, last-tick bars, open-close returns and realized volatility."""

from __future__ import annotations

import configparser
import csv
import logging
import math
import warnings
from dataclasses import dataclass, field
from datetime import date, datetime, time, timedelta
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from .errors import DataError

log = logging.getLogger(__name__)

WEEKDAY_NAMES = ("Mon", "Tue", "Wed", "Thu", "Fri", "Sat", "Sun")
DEFAULT_CALENDAR = "us_futures.cal"


def _readonly(a, dtype=None):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


def as_dates(values):
    """Coerce dates (strings, ``date`` objects, datetime64) to ``datetime64[D]``."""
    return np.asarray(values, dtype="datetime64[D]")


def format_float(v):
    """Serialise a float with 10 significant digits; missing values as ``NA``."""
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "NA"
    return format(float(v), ".10g")


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TickRecord:
    instrument: str
    timestamp: pd.Timestamp
    price: float


@dataclass(frozen=True)
class DatedSeries:
    """One value per calendar date for a single instrument."""

    instrument: str
    dates: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        dates = as_dates(self.dates)
        values = np.asarray(self.values, dtype=float)
        if dates.shape != values.shape or dates.ndim != 1:
            raise ValueError("dates and values must be 1-d arrays of equal length")
        if len(dates) > 1 and not np.all(dates[1:] > dates[:-1]):
            raise ValueError(f"{self.instrument}: dates must be strictly increasing")
        object.__setattr__(self, "dates", _readonly(dates))
        object.__setattr__(self, "values", _readonly(values))

    def __len__(self):
        return len(self.dates)

    def take(self, mask):
        mask = np.asarray(mask)
        return type(self)(self.instrument, self.dates[mask], self.values[mask])

    def to_series(self):
        return pd.Series(self.values, index=pd.DatetimeIndex(self.dates), name=self.instrument)


class ReturnSeries(DatedSeries):
    """Open-close log returns."""

    @property
    def returns(self):
        return self.values


class RealizedVolSeries(DatedSeries):
    """Daily square-root realized variance."""

    def __post_init__(self):
        super().__post_init__()
        if np.any(self.values < 0):
            raise ValueError("realized volatility must be non-negative")

    @property
    def rv_sqrt(self):
        return self.values

    @property
    def zero_days(self):
        """Days with no intraday price movement; kept in the sample but flagged."""
        return self.dates[self.values == 0.0]


@dataclass(frozen=True)
class BarSeries:
    instrument: str
    session_date: date
    bar_times: pd.DatetimeIndex
    log_prices: np.ndarray

    def __post_init__(self):
        lp = _readonly(self.log_prices, dtype=float)
        if len(lp) != len(self.bar_times):
            raise ValueError("one log price per grid point required")
        if len(lp) > 1 and not self.bar_times.is_monotonic_increasing:
            raise ValueError("bar grid must be increasing")
        object.__setattr__(self, "log_prices", lp)

    @property
    def intraday_returns(self):
        return np.diff(self.log_prices)


@dataclass(frozen=True)
class TradingCalendar:
    session_open: time
    session_close: time
    excluded_dates: frozenset = frozenset()
    included_weekdays: frozenset = frozenset(range(5))
    timezone: str = "UTC"

    def __post_init__(self):
        if not self.session_open < self.session_close:
            raise ValueError("session_open must precede session_close")
        object.__setattr__(self, "excluded_dates", frozenset(
            d if isinstance(d, date) else date.fromisoformat(str(d)) for d in self.excluded_dates))
        object.__setattr__(self, "included_weekdays", frozenset(self.included_weekdays))

    def is_trading_day(self, d):
        return d.weekday() in self.included_weekdays and d not in self.excluded_dates

    @property
    def session_length(self):
        return (datetime.combine(date.min, self.session_close)
                - datetime.combine(date.min, self.session_open))

    @classmethod
    def from_text(cls, text):
        """Parse a calendar config.

        ``[session]`` holds ``session_open``, ``session_close``, optional
        ``timezone`` and ``weekdays``; ``[excluded_dates]`` lists ISO dates,
        one per line.
        """
        parser = configparser.ConfigParser(allow_no_value=True, delimiters=("=",))
        parser.optionxform = str
        try:
            parser.read_string(text)
            sess = parser["session"]
            open_ = time.fromisoformat(sess["session_open"].strip())
            close = time.fromisoformat(sess["session_close"].strip())
        except (configparser.Error, KeyError, ValueError) as exc:
            raise DataError(f"invalid calendar config: {exc}") from exc
        weekdays = sess.get("weekdays", "Mon,Tue,Wed,Thu,Fri")
        try:
            wd = {WEEKDAY_NAMES.index(w.strip()[:3].title()) for w in weekdays.split(",") if w.strip()}
        except ValueError as exc:
            raise DataError(f"invalid weekday list {weekdays!r}") from exc
        excluded = set()
        if parser.has_section("excluded_dates"):
            for key in parser["excluded_dates"]:
                try:
                    excluded.add(date.fromisoformat(key.strip()))
                except ValueError as exc:
                    raise DataError(f"invalid excluded date {key!r}") from exc
        return cls(open_, close, frozenset(excluded), frozenset(wd),
                   sess.get("timezone", "UTC").strip())

    @classmethod
    def from_file(cls, path):
        return cls.from_text(Path(path).read_text())

    @classmethod
    def default(cls):
        """US futures regular session with the bundled holiday list."""
        text = resources.files("volquant.data").joinpath(DEFAULT_CALENDAR).read_text()
        return cls.from_text(text)


@dataclass(frozen=True)
class StatsSummary:
    n: int
    mean: float
    st_dev: float
    skewness: float
    excess_kurtosis: float
    median: float
    minimum: float
    maximum: float

    def as_row(self):
        return [self.mean, self.st_dev, self.skewness, self.excess_kurtosis,
                self.median, self.minimum, self.maximum]


@dataclass
class IngestStats:
    """Counters collected while building bars and daily series."""

    rejected_ticks: int = 0
    excluded_days: int = 0
    empty_sessions: int = 0
    short_days: int = 0
    warnings: list = field(default_factory=list)

    def warn(self, msg):
        self.warnings.append(msg)
        log.warning(msg)


# ---------------------------------------------------------------------------
# Tick input
# ---------------------------------------------------------------------------

def read_ticks(path):
    """Read a tick CSV with header ``instrument,timestamp,price``.

    Timestamps are ISO-8601 with offset and are converted to UTC.  A row that
    cannot be parsed raises :class:`DataError` carrying its line number.
    """
    try:
        raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: {exc}") from exc
    if list(raw.columns) != ["instrument", "timestamp", "price"]:
        raise DataError(f"{path}: expected header instrument,timestamp,price, got {list(raw.columns)}")
    ts = pd.to_datetime(raw["timestamp"], utc=True, errors="coerce", format="ISO8601")
    price = pd.to_numeric(raw["price"], errors="coerce")
    bad = ts.isna() | price.isna() | (raw["instrument"].str.strip() == "")
    if bad.any():
        i = int(np.flatnonzero(bad.to_numpy())[0])
        raise DataError(f"malformed tick {raw.iloc[i].tolist()}", row=i + 2)
    return pd.DataFrame({"instrument": raw["instrument"].str.strip(),
                         "timestamp": ts, "price": price.astype(float)})


def _tick_frame(ticks):
    if isinstance(ticks, pd.DataFrame):
        df = ticks.copy()
    else:
        df = pd.DataFrame([(t.instrument, t.timestamp, t.price) for t in ticks],
                          columns=["instrument", "timestamp", "price"])
    df["timestamp"] = pd.to_datetime(df["timestamp"], utc=True)
    return df


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------

def build_bars(ticks, calendar, interval=timedelta(minutes=5), stats=None):
    """Sample last-tick log prices on a regular intraday grid.

    The grid runs from the session open to the session close in steps of
    ``interval``.  Each grid point takes the last trade at or before it within
    the session; grid points preceding the session's first trade are absent.

    Parameters
    ----------
    ticks : DataFrame or iterable of TickRecord
    calendar : TradingCalendar
    interval : timedelta
        Must divide the session length.
    stats : IngestStats, optional
        Receives rejected-tick and dropped-day counts.

    Returns
    -------
    list of BarSeries, ordered by instrument then session date.
    """
    if stats is None:
        stats = IngestStats()
    session = calendar.session_length
    if interval <= timedelta(0) or session % interval:
        raise ValueError(f"interval {interval} does not divide the session length {session}")
    n_grid = session // interval + 1

    df = _tick_frame(ticks)
    bad = ~(df["price"] > 0)
    if bad.any():
        stats.rejected_ticks += int(bad.sum())
        df = df[~bad]
    df = df.sort_values(["instrument", "timestamp"], kind="stable")
    local = df["timestamp"].dt.tz_convert(calendar.timezone)
    df = df.assign(session_date=local.dt.date, clock=local.dt.time)

    bars = []
    for (inst, day), grp in df.groupby(["instrument", "session_date"], sort=True):
        if not calendar.is_trading_day(day):
            stats.excluded_days += 1
            continue
        in_session = (grp["clock"] >= calendar.session_open) & (grp["clock"] <= calendar.session_close)
        grp = grp[in_session]
        if grp.empty:
            stats.empty_sessions += 1
            stats.warn(f"{inst} {day}: no ticks inside the session, day dropped")
            continue
        start = pd.Timestamp(datetime.combine(day, calendar.session_open)).tz_localize(calendar.timezone)
        grid = pd.DatetimeIndex([start + k * interval for k in range(n_grid)])
        tick_ns = grp["timestamp"].to_numpy(dtype="datetime64[ns]").astype(np.int64)
        grid_ns = grid.tz_convert("UTC").tz_localize(None).to_numpy(dtype="datetime64[ns]").astype(np.int64)
        idx = np.searchsorted(tick_ns, grid_ns, side="right") - 1
        ok = idx >= 0
        prices = grp["price"].to_numpy()[idx[ok]]
        bars.append(BarSeries(inst, day, grid[ok], np.log(prices)))
    return bars


def _daily(bars, fn, cls, stats, label):
    out = {}
    for b in bars:
        if len(b.log_prices) < 2:
            if stats is not None:
                stats.short_days += 1
                stats.warn(f"{b.instrument} {b.session_date}: fewer than 2 grid points, "
                           f"dropped from {label}")
            continue
        out.setdefault(b.instrument, []).append((b.session_date, fn(b.log_prices)))
    result = {}
    for inst, rows in sorted(out.items()):
        rows.sort()
        result[inst] = cls(inst, [d for d, _ in rows], [v for _, v in rows])
    return result


def open_close_returns(bars, stats=None):
    """Last minus first grid log price of each session, per instrument."""
    return _daily(bars, lambda lp: lp[-1] - lp[0], ReturnSeries, stats, "returns")


def realized_volatility(bars, stats=None):
    """Square root of the sum of squared consecutive grid log-price differences."""
    return _daily(bars, lambda lp: math.sqrt(float(np.sum(np.diff(lp) ** 2))),
                  RealizedVolSeries, stats, "realized volatility")


def descriptive_stats(x):
    """Mean, sample st.dev (n-1), moment skewness, excess kurtosis, median, range.

    Skewness and kurtosis are NaN for a constant series.
    """
    x = np.asarray(x, dtype=float)
    x = x[~np.isnan(x)]
    if len(x) < 2:
        raise ValueError("descriptive statistics need at least 2 observations")
    mean = float(np.mean(x))
    dev = x - mean
    m2 = float(np.mean(dev ** 2))
    if m2 > 0 and np.ptp(x) > 0:
        skew = float(np.mean(dev ** 3) / m2 ** 1.5)
        kurt = float(np.mean(dev ** 4) / m2 ** 2 - 3.0)
    else:
        skew = kurt = float("nan")
    return StatsSummary(
        n=len(x), mean=mean, st_dev=float(np.std(x, ddof=1)), skewness=skew,
        excess_kurtosis=kurt, median=float(np.median(x)),
        minimum=float(np.min(x)), maximum=float(np.max(x)),
    )


def split_sample(series, boundary, resume=None):
    """Split anything with ``dates`` and ``take(mask)`` into two sub-samples.

    ``pre`` keeps dates up to and including ``boundary``.  ``post`` keeps dates
    after ``boundary``, or from ``resume`` onward when given, so that gap days
    between the two belong to neither.
    """
    boundary = np.datetime64(boundary, "D")
    resume = boundary + 1 if resume is None else np.datetime64(resume, "D")
    if resume <= boundary:
        raise ValueError("resume date must fall after the boundary")
    dates = as_dates(series.dates)
    if len(dates) and (boundary < dates[0] or boundary >= dates[-1]):
        warnings.warn(f"split boundary {boundary} outside {dates[0]}..{dates[-1]}; "
                      "one sub-sample is empty", stacklevel=2)
    return series.take(dates <= boundary), series.take(dates >= resume)


# ---------------------------------------------------------------------------
# CSV output / input for daily series
# ---------------------------------------------------------------------------

def write_series_csv(path, series):
    """Write ``instrument,date,value`` rows for a mapping or iterable of series."""
    if isinstance(series, Mapping):
        series = series.values()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instrument", "date", "value"])
        for s in series:
            for d, v in zip(s.dates, s.values):
                w.writerow([s.instrument, str(d), format_float(v)])


def write_bars_csv(path, bars: Iterable[BarSeries]):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["instrument", "date", "value"])
        for b in bars:
            for t, v in zip(b.bar_times, b.log_prices):
                w.writerow([b.instrument, t.isoformat(), format_float(v)])


def read_series_csv(path, cls=DatedSeries):
    """Read ``instrument,date,value`` into ``{instrument: cls}`` (sorted by date)."""
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["instrument", "date", "value"]:
            raise DataError(f"{path}: expected header instrument,date,value, got {header}")
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            try:
                inst, d, v = rec
                rows.setdefault(inst, []).append((date.fromisoformat(d), float(v)))
            except ValueError as exc:
                raise DataError(f"{path}: cannot parse {rec}", row=lineno) from exc
    out = {}
    for inst in sorted(rows):
        data = sorted(rows[inst])
        dates = [d for d, _ in data]
        if len(set(dates)) != len(dates):
            raise DataError(f"{path}: duplicate dates for {inst}")
        out[inst] = cls(inst, dates, [v for _, v in data])
    return out
