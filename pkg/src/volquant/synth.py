"""Synthetic location-scale panels with known conditional quantiles, and a
brute-force quantile regression oracle for small problems."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from statistics import NormalDist

import numpy as np
import pandas as pd
from scipy import stats

from .errors import DataError
from .implied import VolIndexSeries
from .marketdata import RealizedVolSeries, ReturnSeries
from .panelqr.dataset import PanelDataset
from .rng import make_rng

LAWS = ("normal", "student-t", "uniform")


@dataclass(frozen=True)
class SynthSpec:
    """Data-generating process ``r[i, t+1] = a_i + RV[i, t] * z[i, t+1]``.

    ``log RV`` follows a stationary AR(1) with mean ``vol_mean``, coefficient
    ``persistence`` and innovation s.d. ``vol_innovation``.  The innovation
    laws are N(0, 1), Student-t(df) and U(-1, 1); ``standardize`` rescales them
    to unit variance.  With ``index_noise`` set, an implied-volatility proxy
    ``RV * exp(noise)`` is also produced; its true slope is zero.
    """

    n_assets: int = 7
    n_days: int = 5000
    fixed_effects: tuple | None = None
    vol_mean: float = math.log(0.013)
    persistence: float = 0.9
    vol_innovation: float = 0.2
    innovation: str = "normal"
    df: float = 4.0
    standardize: bool = False
    index_noise: float | None = None
    seed: int = 0
    assets: tuple | None = None
    start_date: date = date(2007, 5, 10)

    def __post_init__(self):
        if self.n_assets < 1 or self.n_days < 2:
            raise ValueError("need at least one asset and two days")
        if not 0.0 <= self.persistence < 1.0:
            raise ValueError("persistence must lie in [0, 1)")
        if not self.vol_innovation > 0:
            raise ValueError("vol_innovation must be positive")
        if self.innovation not in LAWS:
            raise ValueError(f"innovation must be one of {LAWS}")
        if self.innovation == "student-t" and not self.df > 2:
            raise ValueError("student-t innovations need df > 2")
        if self.fixed_effects is not None and len(self.fixed_effects) != self.n_assets:
            raise ValueError("one fixed effect per asset required")
        if self.assets is not None and len(self.assets) != self.n_assets:
            raise ValueError("one name per asset required")
        if self.index_noise is not None and not self.index_noise > 0:
            raise ValueError("index_noise must be positive")

    @property
    def asset_names(self):
        if self.assets is not None:
            return tuple(self.assets)
        return tuple(f"A{i + 1:02d}" for i in range(self.n_assets))

    @property
    def effects(self):
        if self.fixed_effects is not None:
            return np.asarray(self.fixed_effects, dtype=float)
        return np.linspace(-0.001, 0.001, self.n_assets)

    def law_scale(self):
        if not self.standardize:
            return 1.0
        if self.innovation == "student-t":
            return math.sqrt((self.df - 2.0) / self.df)
        if self.innovation == "uniform":
            return math.sqrt(3.0)
        return 1.0

    def innovation_quantile(self, tau):
        """Exact quantile of the innovation law, i.e. the true slope at ``tau``."""
        if self.innovation == "normal":
            q = NormalDist().inv_cdf(tau)
        elif self.innovation == "student-t":
            q = float(stats.t.ppf(tau, self.df))
        else:
            q = 2.0 * tau - 1.0
        return q * self.law_scale()

    def draw_innovations(self, rng, size):
        if self.innovation == "normal":
            z = rng.standard_normal(size)
        elif self.innovation == "student-t":
            z = rng.standard_t(self.df, size)
        else:
            z = rng.uniform(-1.0, 1.0, size)
        return z * self.law_scale()


@dataclass(frozen=True)
class SyntheticPanel:
    spec: SynthSpec
    dataset: PanelDataset
    returns: dict
    rv: dict
    index: dict | None = None
    z: np.ndarray = field(default=None, repr=False)

    def true_beta(self, tau):
        return self.spec.innovation_quantile(tau)

    def true_alpha(self):
        return dict(zip(self.spec.asset_names, map(float, self.spec.effects)))


def business_days(start, n):
    first = np.busday_offset(np.datetime64(start, "D"), 0, roll="forward")
    return np.busday_offset(first, np.arange(n), roll="forward")


def generate_panel(spec: SynthSpec):
    """Simulate the location-scale panel and its CSV-ready daily series.

    Returns a :class:`SyntheticPanel`; ``dataset`` has ``n_days`` target dates
    and equals ``build_panel(returns, {"rv_sqrt": rv})``.
    """
    rng = make_rng(spec.seed)
    N, T = spec.n_assets, spec.n_days
    phi, s = spec.persistence, spec.vol_innovation
    # T + 2 volatility draws: burn-in day, d_0 .. d_T
    logv = np.empty((T + 2, N))
    logv[0] = spec.vol_mean + s / math.sqrt(1 - phi ** 2) * rng.standard_normal(N)
    eta = rng.standard_normal((T + 1, N))
    for t in range(1, T + 2):
        logv[t] = spec.vol_mean + phi * (logv[t - 1] - spec.vol_mean) + s * eta[t - 1]
    vol = np.exp(logv)
    z = spec.draw_innovations(rng, (T + 1, N))
    a = spec.effects
    ret = a[None, :] + vol[:-1] * z          # returns on d_0 .. d_T
    rv = vol[1:]                              # RV on d_0 .. d_T
    dates = business_days(spec.start_date, T + 1)

    names = spec.asset_names
    returns = {n: ReturnSeries(n, dates, ret[:, i]) for i, n in enumerate(names)}
    rv_series = {n: RealizedVolSeries(n, dates, rv[:, i]) for i, n in enumerate(names)}
    columns = ["rv_sqrt"]
    X = rv[:-1, :, None]
    index = None
    if spec.index_noise is not None:
        noise = rng.standard_normal((T + 1, N)) * spec.index_noise
        iv = rv * np.exp(noise - spec.index_noise ** 2 / 2)
        index = {n: VolIndexSeries.from_levels(n, dates, iv[:, i] * 100.0 * math.sqrt(250))
                 for i, n in enumerate(names)}
        iv_daily = np.column_stack([index[n].values for n in names])
        X = np.concatenate([X, iv_daily[:-1, :, None]], axis=2)
        columns.append("vol_daily")
    dataset = PanelDataset(names, dates[1:], ret[1:], X, tuple(columns))
    return SyntheticPanel(spec, dataset, returns, rv_series, index, z[1:])


def simulate_ticks(instruments, days, calendar, seed=0, ticks_per_day=400,
                   daily_vol=0.015, start_price=100.0, outside_session=5):
    """Random trade ticks (GBM prices) for the pipeline tests and demos.

    A few ticks per day fall outside the session so that filtering is exercised.
    """
    rng = make_rng(seed, 1)
    rows = []
    session = calendar.session_length.total_seconds()
    for inst in instruments:
        price = start_price
        for d in days:
            open_ = pd.Timestamp(datetime.combine(d, calendar.session_open)).tz_localize(calendar.timezone)
            offs = np.sort(rng.uniform(0, session, ticks_per_day))
            steps = rng.standard_normal(ticks_per_day) * daily_vol / math.sqrt(ticks_per_day)
            prices = price * np.exp(np.cumsum(steps))
            price = float(prices[-1])
            for o, p in zip(offs, prices):
                rows.append((inst, open_ + timedelta(seconds=float(o)), float(p)))
            for _ in range(outside_session):
                o = -rng.uniform(60, 3600) if rng.random() < 0.5 else session + rng.uniform(60, 3600)
                rows.append((inst, open_ + timedelta(seconds=float(o)), price * (1 + rng.normal(0, 0.05))))
    df = pd.DataFrame(rows, columns=["instrument", "timestamp", "price"])
    df["timestamp"] = pd.to_datetime(df["timestamp"], utc=True)
    return df


def write_ticks_csv(path, ticks):
    out = ticks.copy()
    out["timestamp"] = out["timestamp"].map(lambda t: t.isoformat())
    out["price"] = out["price"].map(lambda v: format(v, ".10g"))
    out.to_csv(path, index=False)


# ---------------------------------------------------------------------------
# Oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class OracleResult:
    params: np.ndarray
    objective: float
    n_bases: int


def _pinball(u, tau):
    return np.where(u < 0, (tau - 1.0) * u, tau * u)


def oracle_qr(y, X, tau, weights=None, max_obs=25, max_params=4):
    """Exact check-loss minimum by enumerating every interpolating basis.

    A minimiser of the (weighted) check loss is attained at a basic solution,
    i.e. a coefficient vector fitting ``k`` observations exactly.  Every
    ``k``-subset is solved and scored over all ``n`` observations.  Ties are
    broken toward the lexicographically smallest coefficient vector.
    """
    y = np.asarray(y, dtype=float)
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if n > max_obs or k > max_params:
        raise ValueError(f"oracle limited to n <= {max_obs}, k <= {max_params}; got {n}, {k}")
    w = np.ones(n) if weights is None else np.asarray(weights, dtype=float)
    subsets = np.array(list(itertools.combinations(range(n), k)), dtype=int)
    A = X[subsets]
    scale = np.prod(np.linalg.norm(A, axis=2), axis=1)
    det = np.linalg.det(A)
    ok = np.abs(det) > 1e-10 * np.maximum(scale, 1e-300)
    if not ok.any():
        raise DataError("every observation subset is singular")
    B = np.linalg.solve(A[ok], y[subsets[ok]][..., None])[..., 0]
    obj = (_pinball(y[None, :] - B @ X.T, tau) * w[None, :]).sum(axis=1)
    best = obj.min()
    tie = np.flatnonzero(obj <= best + 1e-12 * (1.0 + abs(best)))
    cand = B[tie]
    pick = tie[np.lexsort(cand.T[::-1])[0]]
    return OracleResult(B[pick], float(obj[pick]), int(ok.sum()))
