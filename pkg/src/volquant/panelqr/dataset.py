from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import pandas as pd

from ..errors import DataError
from ..marketdata import _readonly, as_dates

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PanelDataset:
    """Balanced date x asset panel of next-day returns and lagged regressors.

    ``y[t, i]`` is the return of asset ``i`` on ``dates[t]``; ``X[t, i, :]``
    holds the regressors observed on that asset's previous trading date.
    """

    assets: tuple
    dates: np.ndarray
    y: np.ndarray
    X: np.ndarray
    columns: tuple

    def __post_init__(self):
        assets = tuple(str(a) for a in self.assets)
        columns = tuple(str(c) for c in self.columns)
        dates = as_dates(self.dates)
        y = np.asarray(self.y, dtype=float)
        X = np.asarray(self.X, dtype=float)
        T, N, K = len(dates), len(assets), len(columns)
        if y.shape != (T, N):
            raise ValueError(f"y has shape {y.shape}, expected {(T, N)}")
        if X.shape != (T, N, K):
            raise ValueError(f"X has shape {X.shape}, expected {(T, N, K)}")
        if len(set(assets)) != N or len(set(columns)) != K:
            raise ValueError("asset and column names must be unique")
        if T > 1 and not np.all(dates[1:] > dates[:-1]):
            raise ValueError("dates must be strictly increasing")
        if not (np.all(np.isfinite(y)) and np.all(np.isfinite(X))):
            raise DataError("panel contains missing or non-finite cells")
        object.__setattr__(self, "assets", assets)
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "dates", _readonly(dates))
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "X", _readonly(X))

    @property
    def n_assets(self):
        return len(self.assets)

    @property
    def n_dates(self):
        return len(self.dates)

    @property
    def n_obs(self):
        return self.y.size

    @property
    def n_params(self):
        return len(self.assets) + len(self.columns)

    @property
    def param_names(self):
        return [f"alpha[{a}]" for a in self.assets] + [f"beta[{c}]" for c in self.columns]

    def design(self):
        """Dummy-variable design: one intercept per asset, then the regressors.

        Rows are date-major (all assets of ``dates[0]`` first).
        """
        T, N, K = self.X.shape
        dummies = np.tile(np.eye(N), (T, 1))
        Xd = np.hstack([dummies, self.X.reshape(T * N, K)])
        return Xd, self.y.reshape(T * N)

    def take(self, mask):
        """Sub-panel on a boolean mask, index array or slice over dates."""
        idx = np.arange(self.n_dates)[mask if isinstance(mask, slice) else np.asarray(mask)]
        return PanelDataset(self.assets, self.dates[idx], self.y[idx], self.X[idx], self.columns)

    def select_assets(self, assets):
        idx = [self.assets.index(a) for a in assets]
        return PanelDataset(tuple(assets), self.dates, self.y[:, idx], self.X[:, idx], self.columns)

    def select_columns(self, columns):
        idx = [self.columns.index(c) for c in columns]
        return PanelDataset(self.assets, self.dates, self.y, self.X[:, :, idx], tuple(columns))

    def scale_column(self, column, factor):
        X = np.array(self.X)
        X[:, :, self.columns.index(column)] *= factor
        return PanelDataset(self.assets, self.dates, self.y, X, self.columns)

    def shift_asset(self, asset, shift):
        y = np.array(self.y)
        y[:, self.assets.index(asset)] += shift
        return PanelDataset(self.assets, self.dates, y, self.X, self.columns)

    def to_frame(self):
        T, N, _ = self.X.shape
        idx = pd.MultiIndex.from_product([pd.DatetimeIndex(self.dates), self.assets],
                                         names=["date", "asset"])
        frame = pd.DataFrame(self.X.reshape(T * N, -1), index=idx, columns=list(self.columns))
        frame.insert(0, "y", self.y.reshape(T * N))
        return frame


def _aligned(returns, regs, columns, asset):
    """Target-date frame for one asset: y at t+1, regressors at t."""
    rd = returns.dates
    if len(rd) < 2:
        return pd.DataFrame(columns=["y", *columns])
    frame = pd.DataFrame({"y": returns.values[1:]}, index=pd.DatetimeIndex(rd[1:]))
    prev = pd.DatetimeIndex(rd[:-1])
    for c in columns:
        s = regs[c].get(asset)
        if s is None:
            raise DataError(f"regressor {c!r} missing for asset {asset!r}")
        frame[c] = pd.Series(s.values, index=pd.DatetimeIndex(s.dates)).reindex(prev).to_numpy()
    return frame.dropna()


def build_panel(returns: Mapping, regressors: Mapping, assets: Sequence | None = None,
                strict: bool = False):
    """Align returns with one-day-lagged regressors and balance the panel.

    Parameters
    ----------
    returns : mapping asset -> ReturnSeries
    regressors : mapping column -> (mapping asset -> dated series)
        Each regressor value on a trading date is matched with the asset's
        return on its next trading date (succession in the return calendar).
    assets : sequence, optional
        Asset order; defaults to sorted keys of ``returns``.
    strict : bool
        Raise :class:`DataError` listing the missing asset-dates instead of
        dropping dates not shared by every asset.
    """
    assets = list(sorted(returns) if assets is None else assets)
    columns = list(regressors)
    if not assets:
        raise DataError("no assets supplied")
    frames = {}
    for a in assets:
        if a not in returns:
            raise DataError(f"no returns for asset {a!r}")
        frames[a] = _aligned(returns[a], regressors, columns, a)
    common = None
    for f in frames.values():
        common = f.index if common is None else common.intersection(f.index)
    union = pd.DatetimeIndex(sorted(set().union(*(f.index for f in frames.values()))))
    missing = [(a, str(d.date())) for a in assets for d in union.difference(frames[a].index)]
    if missing:
        msg = (f"unbalanced panel: {len(missing)} missing asset-dates, e.g. "
               + ", ".join(f"{a}@{d}" for a, d in missing[:10]))
        if strict or len(common) == 0:
            raise DataError(msg if len(common) else msg + "; no common dates remain")
        log.info("%s; dropping %d dates", msg, len(union) - len(common))
    common = common.sort_values()
    y = np.column_stack([frames[a].loc[common, "y"].to_numpy() for a in assets])
    X = np.stack([frames[a].loc[common, columns].to_numpy() for a in assets], axis=1)
    return PanelDataset(tuple(assets), common.to_numpy().astype("datetime64[D]"),
                        y, X.reshape(len(common), len(assets), len(columns)), tuple(columns))
