"""Value-at-Risk from quantile fits and from the Gaussian benchmark."""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, replace
from statistics import NormalDist
from typing import Mapping, Sequence

import numpy as np

from .errors import DataError
from .marketdata import as_dates, format_float
from .panelqr import PanelDataset, QuantileFit

TAIL_TAUS = (0.05, 0.95)

# regressor column -> model tag component
COLUMN_TAGS = {"rv_sqrt": "RV", "vol_daily": "INDEX"}

_STD_NORMAL = NormalDist()


class ReferenceDistribution:
    """Standard-normal quantiles used as the parametric benchmark."""

    @staticmethod
    def gamma(tau):
        if not 0.0 < tau < 1.0:
            raise ValueError(f"tau must lie strictly between 0 and 1, got {tau}")
        if tau == 0.5:
            return 0.0
        return _STD_NORMAL.inv_cdf(tau)

    def __call__(self, taus):
        return np.array([self.gamma(float(t)) for t in np.atleast_1d(taus)])


gamma = ReferenceDistribution.gamma


def model_tag(columns):
    try:
        return "+".join(COLUMN_TAGS[c] for c in columns)
    except KeyError:
        return "+".join(columns)


@dataclass(frozen=True)
class VaRForecast:
    asset: str
    date: np.datetime64
    tau: float
    value: float
    model: str


def parametric_var(tau, sigma):
    """``gamma_tau * sigma``; vectorised over ``sigma``."""
    s = np.asarray(sigma, dtype=float)
    if np.any(s < 0):
        raise ValueError("volatility must be non-negative")
    out = gamma(tau) * s
    return float(out) if out.ndim == 0 else out


def _regressor_vector(fit, x_latest):
    cols = list(fit.beta)
    if isinstance(x_latest, Mapping):
        if set(x_latest) != set(cols):
            raise ValueError(f"regressors {sorted(x_latest)} do not match fit columns {cols}")
        return np.array([float(x_latest[c]) for c in cols])
    x = np.atleast_1d(np.asarray(x_latest, dtype=float))
    if x.shape != (len(cols),):
        raise ValueError(f"expected {len(cols)} regressor values for {cols}, got {x.size}")
    return x


def forecast_var(fit: QuantileFit, x_latest, asset, date=None, model=None):
    """Next-day conditional return quantile ``alpha_asset + x_latest' beta``.

    ``x_latest`` is a mapping column -> value or a sequence in the fit's
    column order.
    """
    if asset not in fit.alpha:
        raise KeyError(f"asset {asset!r} has no fixed effect in this fit")
    x = _regressor_vector(fit, x_latest)
    b = np.array(list(fit.beta.values()))
    value = float(fit.alpha[asset] + x @ b)
    d = None if date is None else np.datetime64(date, "D")
    return VaRForecast(asset, d, fit.tau, value, model or model_tag(fit.beta))


def forecast_panel(fit: QuantileFit, data: PanelDataset, model=None):
    """Forecasts for every (date, asset) of a panel whose regressors are lagged.

    The forecast date is the panel's target date.
    """
    if list(fit.beta) != list(data.columns):
        raise ValueError(f"fit columns {list(fit.beta)} differ from panel columns {list(data.columns)}")
    missing = [a for a in data.assets if a not in fit.alpha]
    if missing:
        raise KeyError(f"assets without a fixed effect: {missing}")
    q = fit.predict(data)
    tag = model or model_tag(fit.beta)
    return [VaRForecast(a, d, fit.tau, float(q[t, i]), tag)
            for t, d in enumerate(data.dates) for i, a in enumerate(data.assets)]


def rearrange_forecasts(forecasts):
    """Sort values across tau within each (asset, date, model) group."""
    groups = defaultdict(list)
    for k, f in enumerate(forecasts):
        groups[(f.asset, f.date, f.model)].append(k)
    out = list(forecasts)
    for idx in groups.values():
        idx.sort(key=lambda k: forecasts[k].tau)
        values = sorted(forecasts[k].value for k in idx)
        for k, v in zip(idx, values):
            out[k] = replace(forecasts[k], value=v)
    return out


# ---------------------------------------------------------------------------
# Comparison with the normal benchmark
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NormalComparisonRow:
    tau: float
    beta: float
    gamma: float
    difference: float
    flag: str
    band_low: float = math.nan
    band_high: float = math.nan


def _tail_tau(tau):
    return any(math.isclose(tau, t, abs_tol=1e-12) for t in TAIL_TAUS)


def compare_to_normal(fits: Sequence[QuantileFit], tol=0.0, band=None):
    """Slope curve against standard-normal quantiles.

    At the tail levels 0.05 and 0.95 a row is flagged ``thinner`` when
    ``|beta| < |gamma| - tol`` and ``fatter`` when ``|beta| > |gamma| + tol``.
    ``band`` (an :class:`~volquant.inference.Band` on the same tau grid) only
    supplies the interval columns.
    """
    fits = sorted(fits, key=lambda f: f.tau)
    if not fits:
        raise ValueError("no fits given")
    for f in fits:
        if len(f.beta) != 1:
            raise ValueError(f"fit at tau={f.tau} has regressors {list(f.beta)}; compare "
                             "one column at a time (select_columns) instead")
    if len({tuple(f.beta) for f in fits}) != 1:
        raise ValueError("fits use different regressors")
    if band is not None and not np.allclose(band.taus, [f.tau for f in fits]):
        raise ValueError("band tau grid differs from the fits")
    rows = []
    for k, f in enumerate(fits):
        b = float(next(iter(f.beta.values())))
        g = gamma(f.tau)
        flag = ""
        if _tail_tau(f.tau):
            if abs(b) < abs(g) - tol:
                flag = "thinner"
            elif abs(b) > abs(g) + tol:
                flag = "fatter"
        lo, hi = (math.nan, math.nan) if band is None else (float(band.lower[k]), float(band.upper[k]))
        rows.append(NormalComparisonRow(f.tau, b, g, b - g, flag, lo, hi))
    return rows


# ---------------------------------------------------------------------------
# Coverage check
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoverageRow:
    tau: float
    model: str
    n: int
    violations: int
    rate: float
    std_error: float


def violation_rate(forecasts, realized):
    """Share of forecasts undercut by the realised return, per (tau, model).

    ``realized`` maps asset -> return series (a single series is accepted for a
    one-asset forecast list).  The standard error is binomial at the nominal
    tau.  A forecast without a realised return on its date is an error.
    """
    if not isinstance(realized, Mapping):
        realized = {realized.instrument: realized}
    lookup = {a: dict(zip(as_dates(s.dates).tolist(), s.values)) for a, s in realized.items()}
    hits = defaultdict(lambda: [0, 0])
    for f in forecasts:
        try:
            r = lookup[f.asset][np.datetime64(f.date, "D").item()]
        except KeyError:
            raise DataError(f"no realised return for {f.asset} on {f.date}") from None
        h = hits[(f.tau, f.model)]
        h[0] += 1
        h[1] += bool(r < f.value)
    rows = []
    for (tau, model), (n, v) in sorted(hits.items()):
        rows.append(CoverageRow(tau, model, n, v, v / n, math.sqrt(tau * (1 - tau) / n)))
    return rows


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def write_forecasts_csv(path, forecasts):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["asset", "date", "tau", "model", "value"])
        for f in forecasts:
            w.writerow([f.asset, "" if f.date is None else str(f.date), format_float(f.tau),
                        f.model, format_float(f.value)])


def write_comparison_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "beta", "gamma", "band_low", "band_high", "difference", "flag"])
        for r in rows:
            w.writerow([format_float(r.tau), format_float(r.beta), format_float(r.gamma),
                        format_float(r.band_low), format_float(r.band_high),
                        format_float(r.difference), r.flag])


def write_coverage_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "model", "n", "violations", "rate", "std_error"])
        for r in rows:
            w.writerow([format_float(r.tau), r.model, r.n, r.violations,
                        format_float(r.rate), format_float(r.std_error)])
