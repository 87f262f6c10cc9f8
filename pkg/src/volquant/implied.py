"""CBOE-style implied variance from an option chain and volatility-index parsing."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from .errors import DataError
from .marketdata import DatedSeries, _readonly, as_dates

log = logging.getLogger(__name__)

TRADING_DAYS = 250
_SQRT_DAYS = math.sqrt(TRADING_DAYS)


@dataclass(frozen=True)
class OptionQuote:
    strike: float
    side: str
    mid: float

    def __post_init__(self):
        if not self.strike > 0:
            raise ValueError(f"strike must be positive, got {self.strike}")
        if self.side not in ("put", "call"):
            raise ValueError(f"side must be 'put' or 'call', got {self.side!r}")
        if not self.mid >= 0:
            raise ValueError(f"mid price must be non-negative, got {self.mid}")


@dataclass(frozen=True)
class OptionChainSnapshot:
    """Out-of-the-money quotes for one expiry.

    ``T`` is in years, ``R`` the continuously compounded annual rate, ``K0``
    the first strike at or below the forward ``F``.
    """

    T: float
    F: float
    K0: float
    quotes: tuple
    R: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "quotes", tuple(self.quotes))
        if not self.T > 0:
            raise ValueError("time to expiration must be positive")
        if not self.F > 0:
            raise ValueError("forward level must be positive")
        if not 0 < self.K0 <= self.F:
            raise ValueError(f"K0={self.K0} must be positive and not above F={self.F}")
        strikes = [q.strike for q in self.quotes]
        if any(b <= a for a, b in zip(strikes, strikes[1:])):
            raise ValueError("strikes must be strictly increasing")
        for q in self.quotes:
            if q.strike < self.K0 and q.side != "put":
                raise ValueError(f"strike {q.strike} below K0 must be a put")
            if q.strike > self.K0 and q.side != "call":
                raise ValueError(f"strike {q.strike} above K0 must be a call")

    @property
    def strikes(self):
        return np.array([q.strike for q in self.quotes], dtype=float)

    @property
    def mids(self):
        return np.array([q.mid for q in self.quotes], dtype=float)


@dataclass(frozen=True)
class VolIndexSeries(DatedSeries):
    """Published index levels with their de-annualised daily counterpart.

    ``values`` holds the daily volatility so the series plugs into panel
    construction like any other regressor.
    """

    index_annual: np.ndarray = None
    n_missing: int = 0

    def __post_init__(self):
        super().__post_init__()
        if self.index_annual is None:
            annual = _readonly(self.values * 100.0 * _SQRT_DAYS)
        else:
            annual = _readonly(self.index_annual, dtype=float)
        if annual.shape != self.values.shape:
            raise ValueError("index_annual must align with dates")
        object.__setattr__(self, "index_annual", annual)

    @property
    def vol_daily(self):
        return self.values

    def take(self, mask):
        mask = np.asarray(mask)
        return VolIndexSeries(self.instrument, self.dates[mask], self.values[mask],
                              self.index_annual[mask], self.n_missing)

    @classmethod
    def from_levels(cls, instrument, dates, levels, n_missing=0):
        levels = np.asarray(levels, dtype=float)
        return cls(instrument, as_dates(dates), deannualize(levels), levels, n_missing)


def strike_intervals(strikes):
    """Half the distance between neighbouring strikes; one-sided at the edges."""
    k = np.asarray(strikes, dtype=float)
    if len(k) < 2:
        raise ValueError("strike intervals need at least two strikes")
    dk = np.empty_like(k)
    dk[0] = k[1] - k[0]
    dk[-1] = k[-1] - k[-2]
    dk[1:-1] = (k[2:] - k[:-2]) / 2.0
    return dk


def cboe_variance(chain):
    """Annualised implied variance of one expiry.

    ``2/T * sum(dK_i / K_i^2 * exp(R T) * Q(K_i)) - 1/T * (F/K0 - 1)^2``
    """
    if not chain.quotes:
        raise ValueError("empty option chain")
    k = chain.strikes
    contrib = strike_intervals(k) / k ** 2 * math.exp(chain.R * chain.T) * chain.mids
    var = 2.0 / chain.T * contrib.sum() - (chain.F / chain.K0 - 1.0) ** 2 / chain.T
    if var < 0:
        raise ValueError(f"degenerate chain: negative implied variance {var:.6g}")
    return float(var)


def index_level(variance):
    """Index value reported by CBOE: ``100 * sqrt(variance)``."""
    if variance < 0:
        raise ValueError("variance must be non-negative")
    return 100.0 * math.sqrt(variance)


def deannualize(index_annual):
    """Daily volatility in log-return units: ``index / 100 / sqrt(250)``."""
    a = np.asarray(index_annual, dtype=float)
    if np.any(a < 0):
        raise ValueError("index level must be non-negative")
    out = a / 100.0 / _SQRT_DAYS
    return float(out) if out.ndim == 0 else out


def parse_index_csv(path, instrument):
    """Read a FRED-style ``DATE,<SERIES>`` file into a :class:`VolIndexSeries`.

    Missing values (``.`` or empty) are dropped and counted.  Out-of-order rows
    are re-sorted with a warning; duplicate dates are an error.
    """
    dates, levels, missing = [], [], 0
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) != 2:
            raise DataError(f"{path}: expected a two-column header DATE,<SERIES>")
        for lineno, rec in enumerate(reader, start=2):
            if not rec or all(not f.strip() for f in rec):
                continue
            if len(rec) != 2:
                raise DataError(f"{path}: expected 2 fields, got {len(rec)}", row=lineno)
            raw_date, raw_val = (f.strip() for f in rec)
            try:
                d = date.fromisoformat(raw_date)
            except ValueError as exc:
                raise DataError(f"{path}: unparseable date {raw_date!r}", row=lineno) from exc
            if raw_val in ("", "."):
                missing += 1
                continue
            try:
                v = float(raw_val)
            except ValueError as exc:
                raise DataError(f"{path}: unparseable value {raw_val!r}", row=lineno) from exc
            if not v >= 0:
                raise DataError(f"{path}: negative index level {v}", row=lineno)
            dates.append(d)
            levels.append(v)
    order = sorted(range(len(dates)), key=dates.__getitem__)
    if order != list(range(len(dates))):
        log.warning("%s: dates out of order, rows re-sorted", path)
        dates = [dates[i] for i in order]
        levels = [levels[i] for i in order]
    for a, b in zip(dates, dates[1:]):
        if a == b:
            raise DataError(f"{path}: duplicate date {a}")
    if missing:
        log.info("%s: dropped %d missing rows", path, missing)
    return VolIndexSeries.from_levels(instrument, dates, levels, n_missing=missing)


def read_chain_csv(path):
    """Read a chain snapshot.

    Leading ``# key=value`` lines give ``T``, ``F``, ``K0`` and ``R``; the body
    is CSV ``strike,side,mid``.
    """
    header, body = {}, []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            key, _, val = line[1:].partition("=")
            header[key.strip()] = val.strip()
        elif line.strip():
            body.append(line)
    rows = list(csv.reader(body))
    if not rows or [c.strip() for c in rows[0]] != ["strike", "side", "mid"]:
        raise DataError(f"{path}: expected header strike,side,mid")
    try:
        quotes = [OptionQuote(float(k), s.strip().lower(), float(m)) for k, s, m in rows[1:]]
        return OptionChainSnapshot(float(header["T"]), float(header["F"]), float(header["K0"]),
                                   quotes, float(header.get("R", 0.0)))
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: {exc}") from exc
