"""Table and figure-data emission for estimation runs.

Every writer here is deterministic: same input, same bytes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .inference import Band, intersect_bands
from .marketdata import descriptive_stats, format_float
from .varengine import COLUMN_TAGS, gamma

DESCRIPTIVE_HEADER = ["block", "asset", "n", "mean", "st_dev", "skewness", "kurtosis",
                      "median", "minimum", "maximum"]
FIGURE_FILES = ("fig_coefficients.csv", "fig_normal_samples.csv",
                "fig_normal_models.csv", "fig_univariate.csv")


def param_label(name):
    """``beta[rv_sqrt]`` -> ``beta_RV``; ``alpha[CL]`` -> ``alpha_CL``."""
    kind, _, inner = name.partition("[")
    inner = inner.rstrip("]")
    if kind == "beta":
        return "beta_" + COLUMN_TAGS.get(inner, inner)
    return f"{kind}_{inner}"


def tau_label(tau):
    return format(tau, "g")


def _fixed(v, digits):
    s = f"{v:.{digits}f}"
    # "-0.000" reads as a sign where there is none
    return s[1:] if s.startswith("-") and float(s) == 0 else s


def estimate_cell(estimate, t_stat):
    t = "NA" if t_stat is None or math.isnan(t_stat) else _fixed(t_stat, 2)
    return f"{_fixed(estimate, 3)} ({t})"


@dataclass
class ModelResult:
    """All tau-level estimates of one model on one sample."""

    sample: str
    model: str
    columns: tuple
    assets: tuple
    period: tuple
    n_dates: int
    reports: list = field(default_factory=list)   # per tau, InferenceReport or None
    fits: list = field(default_factory=list)
    crossing: dict = field(default_factory=dict)

    @property
    def taus(self):
        return [f.tau for f in self.fits]

    @property
    def param_names(self):
        names = self.fits[0].param_names
        # slopes first, then fixed effects
        return [n for n in names if n.startswith("beta")] + [n for n in names if n.startswith("alpha")]

    def param(self, k, name):
        """``(estimate, std_error, t, lower, upper)`` at tau index ``k``."""
        rep = self.reports[k]
        if rep is None:
            fit = self.fits[k]
            est = dict(zip(fit.param_names, fit.params))[name]
            return est, math.nan, math.nan, math.nan, math.nan
        p = rep[name]
        return p.estimate, p.std_error, p.t_stat, p.lower, p.upper

    def band(self, name):
        vals = [self.param(k, name) for k in range(len(self.fits))]
        return Band(tuple(self.taus), np.array([v[3] for v in vals]),
                    np.array([v[4] for v in vals]), np.array([v[0] for v in vals]))

    def to_dict(self):
        out = {
            "sample": self.sample, "model": self.model, "columns": list(self.columns),
            "assets": list(self.assets), "period": list(self.period), "n_dates": self.n_dates,
            "crossing": self.crossing, "estimates": [],
        }
        for k, fit in enumerate(self.fits):
            params = []
            for n in self.param_names:
                e, s, t, lo, hi = self.param(k, n)
                params.append({"name": n, "estimate": e, "std_error": _nan_none(s),
                               "t_stat": _nan_none(t), "lower": _nan_none(lo),
                               "upper": _nan_none(hi)})
            out["estimates"].append({"tau": fit.tau, "fit": fit.to_dict(), "params": params})
        return out


def _nan_none(v):
    return None if v is None or math.isnan(v) else float(v)


def _none_nan(v):
    return math.nan if v is None else float(v)


class _StoredReport:
    """Read-back of a serialised per-tau parameter list; quacks like InferenceReport."""

    def __init__(self, params):
        self._p = {p["name"]: p for p in params}

    def __getitem__(self, name):
        p = self._p[name]
        return _Param(p["estimate"], _none_nan(p["std_error"]), _none_nan(p["t_stat"]),
                      _none_nan(p["lower"]), _none_nan(p["upper"]))


@dataclass(frozen=True)
class _Param:
    estimate: float
    std_error: float
    t_stat: float
    lower: float
    upper: float


def model_result_from_dict(d):
    from .panelqr import QuantileFit

    fits = [QuantileFit.from_dict(e["fit"]) for e in d["estimates"]]
    reports = [_StoredReport(e["params"]) for e in d["estimates"]]
    return ModelResult(d["sample"], d["model"], tuple(d["columns"]), tuple(d["assets"]),
                       tuple(d["period"]), d["n_dates"], reports, fits, d.get("crossing", {}))


# ---------------------------------------------------------------------------
# Estimation outputs
# ---------------------------------------------------------------------------

def write_estimate_table(path, results, taus):
    """Rows ``sample, model, parameter`` by tau columns of ``estimate (t)`` cells."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "model", "parameter", *map(tau_label, taus)])
        for res in results:
            if [round(t, 12) for t in res.taus] != [round(t, 12) for t in taus]:
                raise ValueError(f"{res.sample}/{res.model} was fitted on a different tau grid")
            for name in res.param_names:
                cells = []
                for k in range(len(taus)):
                    e, _, t, _, _ = res.param(k, name)
                    cells.append(estimate_cell(e, t))
                w.writerow([res.sample, res.model, param_label(name), *cells])


def write_appendix_json(path, results, taus, univariate=(), meta=None):
    doc = {
        "meta": meta or {},
        "taus": list(taus),
        "results": [r.to_dict() for r in results],
        "univariate": list(univariate),
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, allow_nan=False)
        fh.write("\n")


def read_appendix_json(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"missing upstream artifact {path}; run 'estimate' first") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from exc
    doc["results"] = [model_result_from_dict(r) for r in doc["results"]]
    return doc


def write_descriptive_csv(path, blocks):
    """``blocks`` is a list of ``(block_name, {asset: series})``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DESCRIPTIVE_HEADER)
        for block, series in blocks:
            for asset in sorted(series):
                s = descriptive_stats(series[asset].values)
                w.writerow([block, asset, s.n, *map(format_float, s.as_row())])


# ---------------------------------------------------------------------------
# Figure data
# ---------------------------------------------------------------------------

def write_coefficient_figure(path, results):
    """Slope curves with their percentile bands, one row per (sample, model, beta, tau)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "model", "parameter", "tau", "estimate", "lower", "upper"])
        for res in results:
            for name in res.param_names:
                if not name.startswith("beta"):
                    continue
                for k, tau in enumerate(res.taus):
                    e, _, _, lo, hi = res.param(k, name)
                    w.writerow([res.sample, res.model, param_label(name), format_float(tau),
                                format_float(e), format_float(lo), format_float(hi)])


def write_normal_overlay(path, curves, taus):
    """Slope curves next to normal quantiles plus their pointwise band intersection.

    ``curves`` is a list of ``(label, Band)`` sharing ``taus``.  ``empty`` is 1
    where the intersection is empty.
    """
    header = ["tau", "gamma"]
    for label, _ in curves:
        header += [f"beta_{label}", f"low_{label}", f"high_{label}"]
    header += ["intersection_low", "intersection_high", "empty"]
    inter = intersect_bands(*[b for _, b in curves]) if curves else None
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        if inter is None:
            return
        for k, tau in enumerate(taus):
            row = [format_float(tau), format_float(gamma(tau))]
            for _, b in curves:
                row += [format_float(b.estimate[k]), format_float(b.lower[k]), format_float(b.upper[k])]
            lo, hi = inter.lower[k], inter.upper[k]
            missing = math.isnan(lo) or math.isnan(hi)
            row += [format_float(lo), format_float(hi), "NA" if missing else str(int(lo > hi))]
            w.writerow(row)


def write_univariate_figure(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample", "model", "asset", "tau", "beta"])
        for r in rows:
            w.writerow([r["sample"], r["model"], r["asset"], format_float(r["tau"]),
                        format_float(r["beta"])])


def single_vol_results(results):
    return [r for r in results if len(r.columns) == 1]


def write_figures(out_dir, doc):
    """Write the four figure-data files from a read-back appendix document."""
    from pathlib import Path

    out = Path(out_dir)
    results, taus = doc["results"], doc["taus"]
    write_coefficient_figure(out / FIGURE_FILES[0], results)

    single = single_vol_results(results)
    # same model across samples
    first_model = single[0].model if single else None
    by_sample = [(r.sample, r.band(r.param_names[0])) for r in single if r.model == first_model]
    write_normal_overlay(out / FIGURE_FILES[1], by_sample, taus)

    # single-regressor models on the last sample that has more than one of them
    by_model = []
    samples = list(dict.fromkeys(r.sample for r in single))
    for s in reversed(samples):
        group = [r for r in single if r.sample == s]
        if len(group) > 1 or s == samples[0]:
            by_model = [(r.model, r.band(r.param_names[0])) for r in group]
            break
    write_normal_overlay(out / FIGURE_FILES[2], by_model, taus)

    write_univariate_figure(out / FIGURE_FILES[3], doc.get("univariate", []))
    return [out / f for f in FIGURE_FILES]
