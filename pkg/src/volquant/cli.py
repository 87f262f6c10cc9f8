"""Command-line entry point: ``volquant <subcommand> [options]``.

Exit codes: 0 ok, 1 usage, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import configparser
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import implied, marketdata, report, synth, varengine
from .errors import DataError, SolverError
from .rng import RNG_ALGORITHM
from .inference import BootstrapConfig, bootstrap_fit, confidence_bands
from .marketdata import IngestStats, RealizedVolSeries, ReturnSeries, TradingCalendar
from .panelqr import DEFAULT_TAUS, build_panel, fit_panel_qr, fit_quantile_curve, validate_taus


EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

MODELS = {
    "rv": ("RV", ("rv_sqrt",)),
    "index": ("INDEX", ("vol_daily",)),
    "both": ("RV+INDEX", ("rv_sqrt", "vol_daily")),
}

# key -> (default, parser); config values and flags both pass through the parser
SETTINGS = {
    "taus": (",".join(format(t, "g") for t in DEFAULT_TAUS), None),
    "seed": ("0", int),
    "replicates": ("1000", int),
    "block_length": ("1", int),
    "confidence_level": ("0.95", float),
    "model": ("rv", None),
    "split": ("", None),
    "n_jobs": ("1", int),
    "strict": ("false", None),
    "calendar": ("", None),
    "ticks": ("", None),
    "returns": ("", None),
    "rv": ("", None),
    "index": ("", None),
    "estimates": ("", None),
    "sample": ("full", None),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

def load_config(args):
    """Merge defaults, the ``[run]`` section of ``--config`` and explicit flags."""
    cfg = {k: v for k, (v, _) in SETTINGS.items()}
    if getattr(args, "config", None):
        parser = configparser.ConfigParser()
        try:
            if not parser.read(args.config):
                raise UsageError(f"config file {args.config} not found")
        except configparser.Error as exc:
            raise UsageError(f"invalid config file: {exc}") from exc
        if parser.has_section("run"):
            for k, v in parser["run"].items():
                if k not in SETTINGS:
                    raise UsageError(f"unknown config key {k!r}")
                cfg[k] = v
    for k in SETTINGS:
        v = getattr(args, k, None)
        if v is None:
            continue
        if isinstance(v, list):
            v = ",".join(v)
        elif isinstance(v, bool):
            v = "true" if v else "false"
        cfg[k] = str(v)
    return cfg


def typed(cfg, key):
    conv = SETTINGS[key][1]
    try:
        return conv(cfg[key]) if conv else cfg[key]
    except ValueError as exc:
        raise UsageError(f"invalid value for {key}: {cfg[key]!r}") from exc


def parse_taus(text):
    try:
        return validate_taus(float(t) for t in text.split(",") if t.strip())
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def parse_split(text):
    if not text:
        return None
    pre, sep, post = text.partition(":")
    try:
        if not sep:
            return np.datetime64(pre, "D"), None
        return np.datetime64(pre, "D"), np.datetime64(post, "D")
    except ValueError as exc:
        raise UsageError(f"--split expects DATE:DATE, got {text!r}") from exc


def parse_models(text):
    keys = [m.strip() for m in text.split(",") if m.strip()]
    bad = [m for m in keys if m not in MODELS]
    if bad or not keys:
        raise UsageError(f"--model must be among {sorted(MODELS)}, got {text!r}")
    return list(dict.fromkeys(keys))


def write_config(out, cfg, command):
    parser = configparser.ConfigParser()
    parser["run"] = {"command": command, **{k: cfg[k] for k in sorted(cfg)}}
    with open(out / f"config_{command}.ini", "w") as fh:
        parser.write(fh)


def bootstrap_config(cfg):
    B = typed(cfg, "replicates")
    if B == 0:
        return None
    try:
        return BootstrapConfig(replicates=B, seed=typed(cfg, "seed"),
                               block_length=typed(cfg, "block_length"),
                               confidence_level=typed(cfg, "confidence_level"),
                               n_jobs=typed(cfg, "n_jobs"))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc


def out_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def require(cfg, key):
    if not cfg[key]:
        raise UsageError(f"--{key.replace('_', '-')} is required")
    path = Path(cfg[key])
    if not path.exists():
        raise DataError(f"input file {path} does not exist")
    return path


# ---------------------------------------------------------------------------
# Shared data loading
# ---------------------------------------------------------------------------

def load_inputs(cfg, models):
    returns = marketdata.read_series_csv(require(cfg, "returns"), ReturnSeries)
    rv = index = None
    if any("rv_sqrt" in MODELS[m][1] for m in models):
        rv = marketdata.read_series_csv(require(cfg, "rv"), RealizedVolSeries)
    if any("vol_daily" in MODELS[m][1] for m in models):
        index = marketdata.read_series_csv(require(cfg, "index"))
    return returns, rv, index


def model_panel(key, returns, rv, index, strict):
    _, columns = MODELS[key]
    sources = {"rv_sqrt": rv, "vol_daily": index}
    regs = {c: sources[c] for c in columns}
    assets = sorted(set(returns).intersection(*[set(r) for r in regs.values()]))
    if not assets:
        raise DataError(f"no asset has returns and all of {list(columns)}")
    return build_panel(returns, regs, assets=assets, strict=strict)


def samples(data, split):
    if split is None:
        return [("full", data)]
    pre, post = marketdata.split_sample(data, split[0], split[1])
    out = [(name, d) for name, d in (("pre", pre), ("post", post)) if d.n_dates]
    return out + [("full", data)]


def _period(d):
    return (str(d.dates[0]), str(d.dates[-1])) if d.n_dates else ("", "")


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_ingest_ticks(args, cfg):
    out = out_dir(args)
    calendar = load_calendar(cfg)
    ticks = marketdata.read_ticks(require(cfg, "ticks"))
    stats = IngestStats()
    bars = marketdata.build_bars(ticks, calendar, stats=stats)
    returns = marketdata.open_close_returns(bars, stats)
    rv = marketdata.realized_volatility(bars, stats)
    marketdata.write_bars_csv(out / "bars.csv", bars)
    marketdata.write_series_csv(out / "returns.csv", returns)
    marketdata.write_series_csv(out / "rv.csv", rv)
    write_config(out, cfg, "ingest-ticks")
    days = sum(len(s) for s in rv.values())
    zero = sum(len(s.zero_days) for s in rv.values())
    print(f"ingest-ticks: {len(rv)} instruments, {days} instrument-days, {zero} zero-RV days, "
          f"{stats.rejected_ticks} rejected ticks, {stats.excluded_days} excluded days, "
          f"{stats.empty_sessions} empty sessions, {stats.short_days} short days", file=sys.stderr)


def cmd_parse_index(args, cfg):
    out = out_dir(args)
    series, missing = {}, 0
    for item in args.source:
        asset, sep, path = item.partition("=")
        if not sep or not asset or not path:
            raise UsageError(f"--source expects ASSET=PATH, got {item!r}")
        if not Path(path).exists():
            raise DataError(f"input file {path} does not exist")
        s = implied.parse_index_csv(path, asset)
        series[asset] = s
        missing += s.n_missing
    marketdata.write_series_csv(out / "index.csv", series)
    write_config(out, cfg, "parse-index")
    rows = sum(len(s) for s in series.values())
    print(f"parse-index: {len(series)} series, {rows} rows, {missing} missing values dropped",
          file=sys.stderr)


def _fit_grid(data, taus, bcfg):
    curve = fit_quantile_curve(data, taus)
    reports = [None if bcfg is None else bootstrap_fit(data, f.tau, bcfg, fit=f) for f in curve]
    crossing = {"n_crossings": curve.crossing.n_crossings, "n_checked": curve.crossing.n_checked}
    return list(curve.fits), reports, crossing


def cmd_estimate(args, cfg):
    out = out_dir(args)
    taus = parse_taus(cfg["taus"])
    models = parse_models(cfg["model"])
    split = parse_split(cfg["split"])
    bcfg = bootstrap_config(cfg)
    strict = cfg["strict"].lower() in ("1", "true", "yes")
    returns, rv, index = load_inputs(cfg, models)

    results, univariate = [], []
    for key in models:
        tag, columns = MODELS[key]
        panel = model_panel(key, returns, rv, index, strict)
        for name, data in samples(panel, split):
            fits, reports, crossing = _fit_grid(data, taus, bcfg)
            results.append(report.ModelResult(name, tag, columns, data.assets, _period(data),
                                              data.n_dates, reports, fits, crossing))
            if len(columns) == 1:
                for asset in data.assets:
                    one = data.select_assets([asset])
                    for tau in taus:
                        f = fit_panel_qr(one, tau)
                        univariate.append({"sample": name, "model": tag, "asset": asset,
                                           "tau": tau, "beta": f.beta[columns[0]]})
            print(f"estimate: {name}/{tag} {data.n_dates} dates x {data.n_assets} assets, "
                  f"{len(taus)} taus", file=sys.stderr)

    meta = {"seed": typed(cfg, "seed"), "replicates": typed(cfg, "replicates"),
            "block_length": typed(cfg, "block_length"),
            "confidence_level": typed(cfg, "confidence_level"),
            "models": [MODELS[m][0] for m in models], "split": cfg["split"]}
    report.write_estimate_table(out / "estimates.csv", results, taus)
    report.write_appendix_json(out / "estimates.json", results, taus, univariate, meta)
    blocks = [("returns", returns)]
    if rv is not None:
        blocks.append(("rv", rv))
    if index is not None:
        blocks.append(("index", index))
    report.write_descriptive_csv(out / "descriptive.csv", blocks)
    write_config(out, cfg, "estimate")


def cmd_bootstrap(args, cfg):
    out = out_dir(args)
    taus = parse_taus(cfg["taus"])
    models = parse_models(cfg["model"])
    bcfg = bootstrap_config(cfg)
    if bcfg is None:
        raise UsageError("bootstrap needs --replicates >= 2")
    strict = cfg["strict"].lower() in ("1", "true", "yes")
    returns, rv, index = load_inputs(cfg, models)
    wanted = cfg["sample"]
    docs = []
    for key in models:
        tag, _ = MODELS[key]
        panel = model_panel(key, returns, rv, index, strict)
        chosen = dict(samples(panel, parse_split(cfg["split"])))
        if wanted not in chosen:
            raise UsageError(f"sample {wanted!r} not available; have {sorted(chosen)}")
        data = chosen[wanted]
        reps = [bootstrap_fit(data, tau, bcfg) for tau in taus]
        bands = confidence_bands(reps)
        docs.append({"sample": wanted, "model": tag, "reports": [r.to_dict() for r in reps],
                     "bands": {n: {"lower": b.lower.tolist(), "upper": b.upper.tolist()}
                               for n, b in bands.items()}})
        print(f"bootstrap: {wanted}/{tag} B={bcfg.replicates}, "
              f"{sum(r.redraws for r in reps)} redraws", file=sys.stderr)
    with open(out / "bootstrap.json", "w") as fh:
        json.dump({"taus": taus, "results": docs}, fh, indent=2, allow_nan=False)
        fh.write("\n")
    write_config(out, cfg, "bootstrap")


def _next_trading_day(d, calendar):
    holidays = sorted(calendar.excluded_dates)
    weekmask = [int(k in calendar.included_weekdays) for k in range(7)]
    return np.busday_offset(np.datetime64(d, "D"), 1, roll="forward",
                            weekmask=weekmask, holidays=holidays)


def load_calendar(cfg):
    if cfg["calendar"]:
        return TradingCalendar.from_file(require(cfg, "calendar"))
    return TradingCalendar.default()


def estimates_path(cfg, out):
    return Path(cfg["estimates"]) if cfg["estimates"] else out / "estimates.json"


def cmd_forecast(args, cfg):
    out = out_dir(args)
    doc = report.read_appendix_json(estimates_path(cfg, out))
    keys = [k for k, (tag, _) in MODELS.items() if tag in {r.model for r in doc["results"]}]
    returns, rv, index = load_inputs(cfg, keys)
    sources = {"rv_sqrt": rv, "vol_daily": index}
    calendar = load_calendar(cfg)
    wanted = cfg["sample"]
    forecasts, backtest = [], []
    for res in doc["results"]:
        if res.sample != wanted:
            continue
        key = next(k for k, (tag, _) in MODELS.items() if tag == res.model)
        panel = model_panel(key, returns, rv, index, False)
        for asset in res.assets:
            latest = [sources[c][asset] for c in res.columns]
            last = min(s.dates[-1] for s in latest)
            x = {c: float(s.values[s.dates <= last][-1]) for c, s in zip(res.columns, latest)}
            target = _next_trading_day(last, calendar)
            for fit in res.fits:
                forecasts.append(varengine.forecast_var(fit, x, asset, target, res.model))
                if res.columns == ("rv_sqrt",):
                    forecasts.append(varengine.VaRForecast(
                        asset, target, fit.tau, varengine.parametric_var(fit.tau, x["rv_sqrt"]),
                        "parametric"))
        for fit in res.fits:
            backtest += varengine.forecast_panel(fit, panel.select_assets(list(res.assets)), res.model)
    if not forecasts:
        raise DataError(f"no estimates for sample {wanted!r} in {cfg['estimates']}")
    varengine.write_forecasts_csv(out / "forecasts.csv", forecasts)
    rows = varengine.violation_rate(backtest, returns)
    varengine.write_coverage_csv(out / "coverage.csv", rows)
    write_config(out, cfg, "forecast")
    print(f"forecast: {len(forecasts)} forecasts, in-sample coverage over {len(backtest)} "
          "fitted quantiles", file=sys.stderr)


def cmd_report(args, cfg):
    out = out_dir(args)
    doc = report.read_appendix_json(estimates_path(cfg, out))
    written = report.write_figures(out, doc)
    single = [r for r in report.single_vol_results(doc["results"]) if r.sample == "full"]
    if single:
        res = single[0]
        band = res.band(res.param_names[0])
        rows = varengine.compare_to_normal(res.fits, band=band)
        varengine.write_comparison_csv(out / "normal_comparison.csv", rows)
        written.append(out / "normal_comparison.csv")
    write_config(out, cfg, "report")
    print(f"report: wrote {len(written)} files", file=sys.stderr)


def cmd_simulate(args, cfg):
    out = out_dir(args)
    spec = synth.SynthSpec(n_assets=args.assets, n_days=args.days, innovation=args.innovation,
                           index_noise=args.index_noise or None, seed=typed(cfg, "seed"))
    sp = synth.generate_panel(spec)
    marketdata.write_series_csv(out / "returns.csv", sp.returns)
    marketdata.write_series_csv(out / "rv.csv", sp.rv)
    if sp.index is not None:
        for asset, s in sp.index.items():
            with open(out / f"index_{asset}.csv", "w") as fh:
                fh.write(f"DATE,{asset}VOL\n")
                for d, v in zip(s.dates, s.index_annual):
                    fh.write(f"{d},{marketdata.format_float(v)}\n")
    taus = parse_taus(cfg["taus"])
    truth = {"spec": {"n_assets": spec.n_assets, "n_days": spec.n_days,
                      "innovation": spec.innovation, "df": spec.df,
                      "index_noise": spec.index_noise, "seed": spec.seed},
             "alpha": sp.true_alpha(),
             "beta": {"rv_sqrt": {format(t, "g"): sp.true_beta(t) for t in taus}},
             "rng": RNG_ALGORITHM}
    if spec.index_noise:
        truth["beta"]["vol_daily"] = {format(t, "g"): 0.0 for t in taus}
    with open(out / "truth.json", "w") as fh:
        json.dump(truth, fh, indent=2)
        fh.write("\n")
    if args.tick_days:
        calendar = TradingCalendar.default()
        days = [d.item() for d in synth.business_days(spec.start_date, args.tick_days * 2)
                if calendar.is_trading_day(d.item())][:args.tick_days]
        ticks = synth.simulate_ticks(spec.asset_names, days, calendar, seed=spec.seed)
        synth.write_ticks_csv(out / "ticks.csv", ticks)
    write_config(out, cfg, "simulate")
    print(f"simulate: {spec.n_assets} assets x {spec.n_days} days ({spec.innovation})",
          file=sys.stderr)


# ---------------------------------------------------------------------------
# Argument parsing
# ---------------------------------------------------------------------------

def build_parser():
    p = _Parser(prog="volquant", description="Panel quantile regression VaR toolkit.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, inputs=()):
        sp.add_argument("--config", help="INI file with a [run] section")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int)
        for name in inputs:
            sp.add_argument(f"--{name}")

    def modelling(sp):
        sp.add_argument("--taus", help="comma-separated, strictly increasing")
        sp.add_argument("--model", action="append", choices=sorted(MODELS),
                        help="repeatable; default rv")
        sp.add_argument("--split", metavar="DATE:DATE",
                        help="last date of the first sub-sample and first date of the second")
        sp.add_argument("--replicates", type=int, help="bootstrap replicates, 0 to skip")
        sp.add_argument("--block-length", dest="block_length", type=int)
        sp.add_argument("--confidence-level", dest="confidence_level", type=float)
        sp.add_argument("--n-jobs", dest="n_jobs", type=int)
        sp.add_argument("--strict", action="store_const", const=True,
                        help="fail on unbalanced panels instead of dropping dates")

    sp = sub.add_parser("ingest-ticks", help="ticks -> 5-minute bars, returns, realized volatility")
    common(sp, ["ticks", "calendar"])
    sp.set_defaults(func=cmd_ingest_ticks)

    sp = sub.add_parser("parse-index", help="FRED-style index files -> daily volatility CSV")
    common(sp)
    sp.add_argument("--source", action="append", required=True, metavar="ASSET=PATH")
    sp.set_defaults(func=cmd_parse_index)

    sp = sub.add_parser("estimate", help="quantile fits with bootstrap t-statistics")
    common(sp, ["returns", "rv", "index"])
    modelling(sp)
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("bootstrap", help="bootstrap reports and bands for one sample")
    common(sp, ["returns", "rv", "index", "sample"])
    modelling(sp)
    sp.set_defaults(func=cmd_bootstrap)

    sp = sub.add_parser("forecast", help="next-day VaR from stored estimates")
    common(sp, ["estimates", "returns", "rv", "index", "sample", "calendar"])
    sp.set_defaults(func=cmd_forecast)

    sp = sub.add_parser("report", help="figure-data files from stored estimates")
    common(sp, ["estimates"])
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("simulate", help="synthetic panel with known quantiles")
    common(sp)
    sp.add_argument("--taus")
    sp.add_argument("--assets", type=int, default=7)
    sp.add_argument("--days", type=int, default=1000)
    sp.add_argument("--innovation", choices=synth.LAWS, default="normal")
    sp.add_argument("--index-noise", dest="index_noise", type=float, default=0.1,
                    help="log-noise of the implied-volatility proxy; 0 disables it")
    sp.add_argument("--tick-days", dest="tick_days", type=int, default=0,
                    help="also write simulated ticks for this many sessions")
    sp.set_defaults(func=cmd_simulate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = load_config(args)
        args.func(args, cfg)
    except UsageError as exc:
        print(f"volquant: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"volquant: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"volquant: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
