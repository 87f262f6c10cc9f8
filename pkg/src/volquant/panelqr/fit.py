from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from ..errors import DataError
from .dataset import PanelDataset
from .solver import check_loss, column_rank_check, solve_check_loss

log = logging.getLogger(__name__)

DEFAULT_TAUS = (0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95)


def validate_tau(tau):
    tau = float(tau)
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must lie strictly between 0 and 1, got {tau}")
    return tau


def validate_taus(taus):
    taus = [validate_tau(t) for t in taus]
    if not taus:
        raise ValueError("empty tau grid")
    if any(b <= a for a, b in zip(taus, taus[1:])):
        raise ValueError("tau grid must be strictly increasing")
    return taus


@dataclass(frozen=True)
class SolverReport:
    iterations: int
    pivots: int
    gap: float
    status: str

    @property
    def iters(self):
        return self.iterations + self.pivots


@dataclass(frozen=True)
class QuantileFit:
    tau: float
    beta: dict
    alpha: dict
    objective: float
    solver: SolverReport = field(default_factory=lambda: SolverReport(0, 0, 0.0, "unknown"))
    n_obs: int = 0

    @property
    def params(self):
        """Coefficients in design order: fixed effects, then slopes."""
        return np.array(list(self.alpha.values()) + list(self.beta.values()), dtype=float)

    @property
    def param_names(self):
        return [f"alpha[{a}]" for a in self.alpha] + [f"beta[{c}]" for c in self.beta]

    def predict(self, data: PanelDataset):
        """Fitted conditional quantiles, shape ``(T, N)``."""
        a = np.array([self.alpha[x] for x in data.assets])
        b = np.array([self.beta[c] for c in data.columns])
        return a[None, :] + data.X @ b

    def to_dict(self):
        return {
            "tau": self.tau,
            "beta": {k: float(v) for k, v in self.beta.items()},
            "alpha": {k: float(v) for k, v in self.alpha.items()},
            "objective": float(self.objective),
            "solver": {"iters": self.solver.iters, "gap": float(self.solver.gap),
                       "status": self.solver.status},
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        s = d.get("solver", {})
        return cls(tau=float(d["tau"]), beta=dict(d["beta"]), alpha=dict(d["alpha"]),
                   objective=float(d["objective"]),
                   solver=SolverReport(int(s.get("iters", 0)), 0, float(s.get("gap", 0.0)),
                                       s.get("status", "unknown")))


def _as_vector(values, names, what):
    if isinstance(values, Mapping):
        if list(values) != list(names):
            raise ValueError(f"{what} keys {list(values)} do not match {list(names)}")
        values = list(values.values())
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.shape != (len(names),):
        raise ValueError(f"{what} has {v.size} entries, expected {len(names)}")
    return v


def objective(data: PanelDataset, tau, alpha, beta):
    """Total check loss of ``r - alpha_i - X'beta`` over every (asset, date)."""
    tau = validate_tau(tau)
    a = _as_vector(alpha, data.assets, "alpha")
    b = _as_vector(beta, data.columns, "beta")
    resid = data.y - a[None, :] - data.X @ b
    return float(check_loss(resid, tau).sum())


def fit_panel_qr(data: PanelDataset, tau, date_weights=None):
    """Fixed-effects panel quantile regression, unpenalised.

    Each asset gets its own intercept (dummy variable); the slopes are common.
    ``date_weights`` multiplies every observation of a date, which is how the
    day-slice bootstrap expresses resampling with replacement.

    Raises
    ------
    ValueError
        ``tau`` outside (0, 1).
    DataError
        Too few observations for the number of parameters.
    RankDeficiencyError
        A design column is collinear with earlier ones (named in the message).
    """
    tau = validate_tau(tau)
    Xd, yv = data.design()
    names = data.param_names
    w = None
    if date_weights is not None:
        dw = np.asarray(date_weights, dtype=float)
        if dw.shape != (data.n_dates,):
            raise ValueError("date_weights must have one entry per date")
        w = np.repeat(dw, data.n_assets)
    active = np.ones(len(yv), dtype=bool) if w is None else w > 0
    if active.sum() <= data.n_params:
        raise DataError(f"{int(active.sum())} observations for {data.n_params} parameters")
    column_rank_check(Xd[active], names)
    res = solve_check_loss(Xd, yv, tau, weights=w)
    N = data.n_assets
    return QuantileFit(
        tau=tau,
        beta=dict(zip(data.columns, map(float, res.coef[N:]))),
        alpha=dict(zip(data.assets, map(float, res.coef[:N]))),
        objective=res.objective,
        solver=SolverReport(res.iterations, res.pivots, res.gap, res.status),
        n_obs=int(active.sum()),
    )


def fit_univariate_qr(data: PanelDataset, tau, asset=None):
    """Single-asset quantile regression; the asset's fixed effect is the intercept."""
    if asset is None:
        if data.n_assets != 1:
            raise ValueError("dataset has several assets; name one")
    else:
        data = data.select_assets([asset])
    return fit_panel_qr(data, tau)


@dataclass(frozen=True)
class CrossingReport:
    """Observations whose fitted quantiles decrease between adjacent taus."""

    n_crossings: int
    n_checked: int
    pairs: tuple

    @property
    def fraction(self):
        return self.n_crossings / self.n_checked if self.n_checked else 0.0


@dataclass(frozen=True)
class QuantileCurve:
    fits: tuple
    crossing: CrossingReport

    def __iter__(self):
        return iter(self.fits)

    def __len__(self):
        return len(self.fits)

    def __getitem__(self, k):
        return self.fits[k]

    @property
    def taus(self):
        return [f.tau for f in self.fits]


def crossing_diagnostic(fits: Sequence[QuantileFit], data: PanelDataset, tol=1e-12):
    preds = [f.predict(data) for f in fits]
    pairs = []
    total = 0
    for k in range(len(preds) - 1):
        bad = int(np.sum(preds[k + 1] < preds[k] - tol))
        total += bad
        if bad:
            pairs.append((fits[k].tau, fits[k + 1].tau, bad))
    checked = data.n_obs * max(len(preds) - 1, 0)
    return CrossingReport(total, checked, tuple(pairs))


def _fit_one(args):
    data, tau = args
    return fit_panel_qr(data, tau)


def fit_quantile_curve(data: PanelDataset, taus, n_jobs=1):
    """Independent fits over a strictly increasing tau grid plus a crossing check.

    Crossings are reported, never corrected; see :func:`rearranged_quantiles`.
    """
    taus = validate_taus(taus)
    jobs = [(data, t) for t in taus]
    if n_jobs == 1 or len(taus) == 1:
        fits = [_fit_one(j) for j in jobs]
    else:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            fits = list(ex.map(_fit_one, jobs))
    crossing = crossing_diagnostic(fits, data)
    if crossing.n_crossings:
        log.warning("quantile crossing at %d of %d adjacent-tau checks",
                    crossing.n_crossings, crossing.n_checked)
    return QuantileCurve(tuple(fits), crossing)


def rearranged_quantiles(curve, data: PanelDataset):
    """Monotone rearrangement: sort fitted quantiles across tau per observation.

    Returns an array of shape ``(T, N, len(taus))``.  Off by default in every
    pipeline; provided as an optional post-process.
    """
    preds = np.stack([f.predict(data) for f in curve], axis=-1)
    return np.sort(preds, axis=-1)


def directional_derivatives(data: PanelDataset, fit: QuantileFit, zero_rtol=1e-10):
    """One-sided derivatives of the objective along +/- each parameter axis.

    Returns ``(plus, minus, scale)``, each of length ``n_params``; ``scale`` is
    the largest slope any single axis could show (sum of absolute column
    entries), which sets the tolerance of the optimality certificate.
    """
    tau = fit.tau
    Xd, yv = data.design()
    b = fit.params
    r = yv - Xd @ b
    ztol = zero_rtol * (np.abs(yv) + np.abs(Xd) @ np.abs(b) + 1e-300)
    zero = (np.abs(r) <= ztol)[:, None]
    pos = (r > 0)[:, None]

    def slope(g):
        # residual moves by g per unit step; zero residuals take the side g pushes them to
        up = (pos & ~zero) | (zero & (g > 0))
        return np.sum(np.where(up, tau * g, (tau - 1.0) * g), axis=0)

    G = -Xd
    return slope(G), slope(-G), np.abs(Xd).sum(axis=0)
