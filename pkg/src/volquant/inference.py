"""Day-slice bootstrap inference and confidence bands for panel quantile fits."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, SolverError
from .panelqr import PanelDataset, QuantileFit, fit_panel_qr
from .rng import make_rng

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BootstrapConfig:
    """Pairs bootstrap over trading dates.

    Every drawn date carries all assets' observations for that date.  With
    ``block_length > 1`` contiguous date blocks are drawn instead (moving
    blocks).
    """

    replicates: int = 1000
    seed: int = 0
    block_length: int = 1
    confidence_level: float = 0.95
    n_jobs: int = 1
    scheme: str = "day-slice"

    def __post_init__(self):
        if self.replicates < 2:
            raise ValueError("at least 2 bootstrap replicates are required")
        if not 0.0 < self.confidence_level < 1.0:
            raise ValueError("confidence_level must lie in (0, 1)")
        if self.block_length < 1:
            raise ValueError("block_length must be >= 1")
        if self.scheme != "day-slice":
            raise ValueError(f"unsupported scheme {self.scheme!r}")


@dataclass(frozen=True)
class ParameterInference:
    name: str
    estimate: float
    std_error: float
    t_stat: float
    lower: float
    upper: float


@dataclass(frozen=True)
class InferenceReport:
    tau: float
    fit: QuantileFit
    params: tuple
    confidence_level: float
    replicates: np.ndarray = field(repr=False)
    redraws: int = 0

    def __getitem__(self, name):
        for p in self.params:
            if p.name == name:
                return p
        raise KeyError(name)

    @property
    def names(self):
        return [p.name for p in self.params]

    def to_dict(self):
        return {
            "tau": self.tau,
            "confidence_level": self.confidence_level,
            "replicates": int(self.replicates.shape[0]),
            "redraws": self.redraws,
            "fit": self.fit.to_dict(),
            "params": [
                {"name": p.name, "estimate": p.estimate, "std_error": p.std_error,
                 "t_stat": None if math.isnan(p.t_stat) else p.t_stat,
                 "lower": p.lower, "upper": p.upper}
                for p in self.params
            ],
        }


def resample_counts(n_dates, rng, block_length=1):
    """Multiplicity of each date in one bootstrap draw."""
    L = min(block_length, n_dates)
    n_blocks = -(-n_dates // L)
    starts = rng.integers(0, n_dates - L + 1, n_blocks)
    idx = (starts[:, None] + np.arange(L)[None, :]).ravel()[:n_dates]
    return np.bincount(idx, minlength=n_dates)


def _replicate(data, tau, cfg, k, max_attempts):
    for attempt in range(max_attempts):
        rng = make_rng(cfg.seed, k, attempt)
        counts = resample_counts(data.n_dates, rng, cfg.block_length)
        try:
            fit = fit_panel_qr(data, tau, date_weights=counts)
        except (SolverError, DataError) as exc:
            log.debug("replicate %d attempt %d failed: %s", k, attempt, exc)
            continue
        return fit.params, attempt
    raise SolverError(f"bootstrap replicate {k} failed {max_attempts} times")


def _replicate_chunk(args):
    data, tau, cfg, ks, max_attempts = args
    return [_replicate(data, tau, cfg, k, max_attempts) for k in ks]


def bootstrap_fit(data: PanelDataset, tau, cfg: BootstrapConfig = BootstrapConfig(), fit=None):
    """Bootstrap standard errors, t-statistics and percentile intervals.

    Replicate ``k`` draws from its own stream (``seed``, ``k``, attempt), so the
    report is bit-identical for a given seed whatever ``n_jobs`` is.  A
    replicate whose fit fails is redrawn; more than ``10 * B`` redraws in
    total is an error.  t-statistics divide the full-sample estimate by the
    bootstrap standard error; a zero standard error leaves t missing (NaN).
    """
    if fit is None:
        fit = fit_panel_qr(data, tau)
    B = cfg.replicates
    cap = 10 * B
    ks = list(range(B))
    if cfg.n_jobs == 1:
        results = _replicate_chunk((data, tau, cfg, ks, cap))
    else:
        chunks = [ks[j::cfg.n_jobs] for j in range(cfg.n_jobs)]
        with ProcessPoolExecutor(max_workers=cfg.n_jobs) as ex:
            parts = list(ex.map(_replicate_chunk, [(data, tau, cfg, c, cap) for c in chunks]))
        results = [None] * B
        for c, part in zip(chunks, parts):
            for k, r in zip(c, part):
                results[k] = r
    reps = np.array([r[0] for r in results])
    redraws = int(sum(r[1] for r in results))
    if redraws > cap:
        raise SolverError(f"{redraws} bootstrap redraws exceed the cap of {cap}")

    est = fit.params
    se = reps.std(axis=0, ddof=1)
    spread = np.ptp(reps, axis=0)
    identical = spread <= 1e-12 * (np.abs(reps).max(axis=0) + 1e-300)
    se = np.where(identical, 0.0, se)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(se > 0, est / np.where(se > 0, se, 1.0), np.nan)
    c = cfg.confidence_level
    lo, hi = np.quantile(reps, [(1 - c) / 2, (1 + c) / 2], axis=0)
    params = tuple(
        ParameterInference(n, float(e), float(s), float(tt), float(l), float(h))
        for n, e, s, tt, l, h in zip(fit.param_names, est, se, t, lo, hi)
    )
    return InferenceReport(float(tau), fit, params, c, reps, redraws)


@dataclass(frozen=True)
class Band:
    """Pointwise interval over a tau grid for one parameter."""

    taus: tuple
    lower: np.ndarray
    upper: np.ndarray
    estimate: np.ndarray | None = None

    @property
    def empty(self):
        return self.lower > self.upper

    def contains(self, values):
        values = np.asarray(values, dtype=float)
        return (self.lower <= values) & (values <= self.upper)


def confidence_bands(reports):
    """Collect per-tau intervals into ``{parameter: Band}``, ordered by tau."""
    reports = sorted(reports, key=lambda r: r.tau)
    if not reports:
        raise ValueError("no reports given")
    names = reports[0].names
    for r in reports[1:]:
        if r.names != names:
            raise ValueError(f"parameter sets differ: {names} vs {r.names}")
    taus = tuple(r.tau for r in reports)
    return {
        n: Band(taus,
                np.array([r[n].lower for r in reports]),
                np.array([r[n].upper for r in reports]),
                np.array([r[n].estimate for r in reports]))
        for n in names
    }


def intersect_bands(*bands):
    """Pointwise intersection; where it is empty, ``Band.empty`` flags the tau."""
    if not bands:
        raise ValueError("no bands given")
    taus = bands[0].taus
    for b in bands[1:]:
        if tuple(b.taus) != tuple(taus):
            raise ValueError("bands are defined on different tau grids")
    lower = np.max([b.lower for b in bands], axis=0)
    upper = np.min([b.upper for b in bands], axis=0)
    return Band(tuple(taus), lower, upper)
