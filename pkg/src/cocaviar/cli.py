"""Command-line front end.

Subcommands: simulate, fit, forecast, backtest, compare, mc-study. Options
can be supplied on the command line or through a flat key=value config file
(``--config``); command-line flags override file values. Data CSVs are
written with full float precision so ingest-then-emit round-trips exactly;
report tables use 6 significant digits. Exit codes: 0 ok, 1 validation
error, 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import backtest as bt
from . import simulation
from .core import (
    LossSeries,
    NAMED_VARIANTS,
    NumericalError,
    ProbLevels,
    ValidationError,
    expand_spec,
    param_roles,
    validate_series,
)
from .estimation import OptimizerConfig, fit_two_step

__all__ = ["RunConfig", "ingest_csv", "run", "main"]

DATA_FMT = ".17g"     # lossless float round-trip
REPORT_FMT = ".6g"    # display precision for report tables

MODEL_CHOICES = tuple(NAMED_VARIANTS) + ("garch-chol", "garch-sym")


@dataclass
class RunConfig:
    """A parsed command with its fully-resolved options."""

    command: str
    options: dict


class _CliParser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _fmt(value, spec=DATA_FMT) -> str:
    if isinstance(value, float) or isinstance(value, np.floating):
        return format(float(value), spec)
    return str(value)


def _write_csv(path: Path, header, rows, fmt=DATA_FMT):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v, fmt) for v in row])


def read_config_file(path) -> dict:
    """Flat key=value file; '#' starts a comment, blank lines are ignored."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(
                    f"{path}:{lineno}: expected key=value, got {raw.strip()!r}"
                )
            key, value = line.split("=", 1)
            values[key.strip().replace("-", "_")] = value.strip()
    return values


def ingest_csv(path, negate_returns: bool = False) -> LossSeries:
    """Read a loss series from CSV with header date,x,y[,z1..zk].

    ``negate_returns`` converts log-returns into log-losses by negation of
    x and y (covariates are left untouched).
    """
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"input file not found: {path}")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValidationError(f"{path}: file is empty") from None
        names = [h.strip().lower() for h in header]
        for required in ("date", "x", "y"):
            if required not in names:
                raise ValidationError(f"{path}: missing column {required!r}")
        idx_date, idx_x, idx_y = names.index("date"), names.index("x"), names.index("y")
        z_cols = [(i, h) for i, h in enumerate(names) if h.startswith("z") and h[1:].isdigit()]
        labels, xs, ys, zs = [], [], [], []
        for rowno, row in enumerate(reader, start=1):
            if len(row) != len(names):
                raise ValidationError(
                    f"{path}: malformed row {rowno}: expected {len(names)} cells, "
                    f"got {len(row)}"
                )
            labels.append(row[idx_date])
            for name, i, dest in (("x", idx_x, xs), ("y", idx_y, ys)):
                try:
                    dest.append(float(row[i]))
                except ValueError:
                    raise ValidationError(
                        f"{path}: non-numeric cell in column {name!r} at row {rowno}"
                    ) from None
            if z_cols:
                zrow = []
                for i, name in z_cols:
                    try:
                        zrow.append(float(row[i]))
                    except ValueError:
                        raise ValidationError(
                            f"{path}: non-numeric cell in column {name!r} at row {rowno}"
                        ) from None
                zs.append(zrow)
    x = np.asarray(xs)
    y = np.asarray(ys)
    if negate_returns:
        x, y = -x, -y
    series = LossSeries(x, y, np.asarray(zs) if zs else None, tuple(labels))
    return validate_series(series)


def _emit_series(path: Path, series: LossSeries):
    header = ["date", "x", "y"]
    if series.z is not None:
        header += [f"z{i}" for i in range(series.z.shape[1])]
    rows = []
    for i in range(series.n):
        label = series.labels[i] if series.labels is not None else i
        row = [label, series.x[i], series.y[i]]
        if series.z is not None:
            row += list(series.z[i])
        rows.append(row)
    _write_csv(path, header, rows)


def _emit_forecasts(path: Path, records):
    _write_csv(
        path,
        ["t", "model", "v_forecast", "c_forecast", "x", "y"],
        [[r.t, r.model_id, r.v_forecast, r.c_forecast, r.x, r.y] for r in records],
    )


def _read_forecasts(path) -> list:
    path = Path(path)
    if not path.exists():
        raise ValidationError(f"forecast file not found: {path}")
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"t", "model", "v_forecast", "c_forecast", "x", "y"}
        if reader.fieldnames is None or not required.issubset(set(reader.fieldnames)):
            raise ValidationError(
                f"{path}: forecast CSV must have columns {sorted(required)}"
            )
        for rowno, row in enumerate(reader, start=1):
            try:
                records.append(bt.ForecastRecord(
                    t=int(row["t"]),
                    v_forecast=float(row["v_forecast"]),
                    c_forecast=float(row["c_forecast"]),
                    x=float(row["x"]),
                    y=float(row["y"]),
                    model_id=row["model"],
                ))
            except ValueError:
                raise ValidationError(
                    f"{path}: malformed forecast row {rowno}"
                ) from None
    return records


def _emit_plot_series(out_dir: Path, records, stem: str):
    """Plot-ready CSVs: (t, x, v_forecast) and (t, y, c_forecast) with the
    VaR-hit marker used to highlight stress periods."""
    hits = [int(r.x >= r.v_forecast) for r in records]
    _write_csv(
        out_dir / f"{stem}_var.csv",
        ["t", "x", "v_forecast", "var_hit"],
        [[r.t, r.x, r.v_forecast, h] for r, h in zip(records, hits)],
    )
    _write_csv(
        out_dir / f"{stem}_covar.csv",
        ["t", "y", "c_forecast", "var_hit"],
        [[r.t, r.y, r.c_forecast, h] for r, h in zip(records, hits)],
    )


def _eccc_from_options(o) -> simulation.EcccParams:
    innovation = simulation.Innovation(o["dist"], o["nu"], o["rho"])
    return simulation.EcccParams(
        omega=np.array([o["omega1"], o["omega2"]]),
        A=np.array([[o["a11"], o["a12"]], [o["a21"], o["a22"]]]),
        B=np.array([[o["b11"], o["b12"]], [o["b21"], o["b22"]]]),
        innovation=innovation,
    )


def _levels(o) -> ProbLevels:
    return ProbLevels(beta=o["beta"], alpha=o["alpha"])


def _optimizer(o) -> OptimizerConfig:
    return OptimizerConfig(
        restarts=o["restarts"],
        max_iters=o["max_iters"],
        fatol=o["obj_tol"],
        seed=o["seed"],
    )


def _cmd_simulate(o) -> int:
    series = simulation.simulate_eccc(
        _eccc_from_options(o), o["n"], o["burn_in"], seed=o["seed"]
    )
    out = Path(o["out_dir"]) / o["out"]
    _emit_series(out, series)
    print(f"wrote {series.n} observations to {out}")
    return 0


def _cmd_fit(o) -> int:
    series = ingest_csv(o["input"], o["negate_returns"])
    spec = expand_spec(o["variant"], _levels(o))
    result = fit_two_step(spec, series, _optimizer(o))
    var_roles, covar_roles = param_roles(spec)
    rows = []
    for eq, roles, theta, se in (
        ("var", var_roles, result.params.theta_v, result.se_v),
        ("covar", covar_roles, result.params.theta_c, result.se_c),
    ):
        for role, est, s in zip(roles, theta, se):
            rows.append([eq, role, est, s])
    out = Path(o["out_dir"]) / o["out"]
    _write_csv(out, ["equation", "role", "estimate", "std_error"], rows, fmt=REPORT_FMT)
    print(f"variant={o['variant']} n={series.n} "
          f"avg_var_score={result.avg_score_var:{REPORT_FMT}} "
          f"avg_covar_score={result.avg_score_covar:{REPORT_FMT}}")
    print(f"wrote fit report to {out}")
    return 0


def _model_from_option(name: str, levels: ProbLevels):
    if name in NAMED_VARIANTS:
        return expand_spec(name, levels)
    if name == "garch-chol":
        return bt.BenchmarkModel("cholesky", levels)
    if name == "garch-sym":
        return bt.BenchmarkModel("symmetric", levels)
    raise ValidationError(f"unknown model {name!r}; choose from {MODEL_CHOICES}")


def _cmd_forecast(o) -> int:
    series = ingest_csv(o["input"], o["negate_returns"])
    model = _model_from_option(o["model"], _levels(o))
    records = bt.rolling_forecast(series, model, o["window"], o["refit_every"],
                                  _optimizer(o))
    out_dir = Path(o["out_dir"])
    _emit_forecasts(out_dir / o["out"], records)
    _emit_plot_series(out_dir, records, Path(o["out"]).stem + "_plot")
    print(f"wrote {len(records)} forecasts to {out_dir / o['out']}")
    return 0


def _cmd_backtest(o) -> int:
    series = ingest_csv(o["input"], o["negate_returns"])
    levels = _levels(o)
    model = _model_from_option(o["model"], levels)
    records = bt.rolling_forecast(series, model, o["window"], o["refit_every"],
                                  _optimizer(o))
    out_dir = Path(o["out_dir"])
    _emit_forecasts(out_dir / o["out"], records)
    sv, sc = bt.record_scores(records, levels)
    var_rate, covar_rate = bt.hit_stats(records, levels)
    # presentation rescaling applies to the printed report only
    scale_v, scale_c = (10.0, 1000.0) if o["display_rescale"] else (1.0, 1.0)
    report = [[
        records[0].model_id,
        float(np.mean(sv)) * scale_v,
        float(np.mean(sc)) * scale_c,
        100.0 * var_rate,
        "" if covar_rate is None else 100.0 * covar_rate,
        len(records),
    ]]
    _write_csv(out_dir / "backtest_report.csv",
               ["model", "var_score", "covar_score", "var_hits_pct",
                "covar_hits_pct", "n_forecasts"],
               report, fmt=REPORT_FMT)
    print(f"model={records[0].model_id} var_score={report[0][1]:{REPORT_FMT}} "
          f"covar_score={report[0][2]:{REPORT_FMT}} var_hits={var_rate:.2%} "
          f"covar_hits={'n/a' if covar_rate is None else format(covar_rate, '.2%')}")
    return 0


def _cmd_compare(o) -> int:
    base = _read_forecasts(o["baseline"])
    alt = _read_forecasts(o["alternative"])
    levels = _levels(o)
    zone = bt.traffic_light(base, alt, levels, o["significance"], o["hac_lags"])
    rows = []
    for name, records in (("baseline", base), ("alternative", alt)):
        sv, sc = bt.record_scores(records, levels)
        var_rate, covar_rate = bt.hit_stats(records, levels)
        rows.append([
            name, records[0].model_id, float(np.mean(sv)), float(np.mean(sc)),
            100.0 * var_rate, "" if covar_rate is None else 100.0 * covar_rate,
            zone.zone, zone.p_var,
            "" if zone.p_covar is None else zone.p_covar,
        ])
    out = Path(o["out_dir"]) / o["out"]
    _write_csv(out, ["role", "model", "var_score", "covar_score", "var_hits_pct",
                     "covar_hits_pct", "zone", "p_var", "p_covar"],
               rows, fmt=REPORT_FMT)
    p_c = "n/a" if zone.p_covar is None else format(zone.p_covar, REPORT_FMT)
    print(f"zone={zone.zone} p_var={zone.p_var:{REPORT_FMT}} p_covar={p_c}")
    return 0


def _cmd_mc_study(o) -> int:
    config = simulation.McConfig(
        replications=o["m"],
        n=o["n"],
        levels=_levels(o),
        eccc=_eccc_from_options(o),
        variant=o["variant"],
        burn_in=o["burn_in"],
        seed=o["seed"],
        workers=o["threads"],
        optimizer=_optimizer(o),
        oracle_draws=o["mc_draws"],
    )
    result = simulation.run_mc_study(config)
    out = Path(o["out_dir"]) / o["out"]
    _write_csv(
        out,
        ["alpha", "beta", "n", "parameter", "truth", "bias", "median_bias",
         "sd_empirical", "sd_asymptotic", "ci95_coverage"],
        [[r.alpha, r.beta, r.n, r.parameter, r.truth, r.mean_bias, r.median_bias,
          r.sd_empirical, r.sd_asymptotic_median, r.ci95_coverage]
         for r in result.rows],
        fmt=REPORT_FMT,
    )
    print(f"{result.n_ok} replications ok, {result.n_failed} failed; wrote {out}")
    return 0


_COMMANDS = {
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "forecast": _cmd_forecast,
    "backtest": _cmd_backtest,
    "compare": _cmd_compare,
    "mc-study": _cmd_mc_study,
}


def _add_common(p):
    p.add_argument("--config", default=None, help="flat key=value options file")
    p.add_argument("--out-dir", default=".", help="directory for output files")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="worker-count cap")


def _add_levels(p):
    p.add_argument("--beta", type=float, default=0.95, help="VaR level of x")
    p.add_argument("--alpha", type=float, default=0.95, help="CoVaR level of y")


def _add_optimizer(p):
    p.add_argument("--restarts", type=int, default=10)
    p.add_argument("--max-iters", type=int, default=4000)
    p.add_argument("--obj-tol", type=float, default=1e-9)


def _add_dgp(p):
    p.add_argument("--dist", choices=("t", "gaussian"), default="t")
    p.add_argument("--nu", type=float, default=8.0)
    p.add_argument("--rho", type=float, default=0.5)
    for name, default in (
        ("omega1", 0.04), ("omega2", 0.02),
        ("a11", 0.1), ("a12", 0.0), ("a21", 0.0), ("a22", 0.15),
        ("b11", 0.8), ("b12", 0.0), ("b21", 0.0), ("b22", 0.75),
    ):
        p.add_argument(f"--{name}", type=float, default=default)
    p.add_argument("--burn-in", type=int, default=1000)


def build_parser() -> _CliParser:
    parser = _CliParser(prog="cocaviar",
                        description="Joint dynamic (VaR, CoVaR) modeling, "
                                    "estimation, forecasting and backtesting")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a bivariate loss series")
    _add_common(p)
    _add_dgp(p)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", default="simulated.csv")

    p = sub.add_parser("fit", help="two-step fit of a model on a CSV series")
    _add_common(p)
    _add_levels(p)
    _add_optimizer(p)
    p.add_argument("--input", required=True)
    p.add_argument("--variant", choices=tuple(NAMED_VARIANTS), default="SAV_diag")
    p.add_argument("--negate-returns", action="store_true",
                   help="input holds log-returns; negate into log-losses")
    p.add_argument("--out", default="fit_report.csv")

    for name, help_text in (("forecast", "rolling one-step-ahead forecasts"),
                            ("backtest", "rolling forecasts plus calibration report")):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)
        _add_levels(p)
        _add_optimizer(p)
        p.add_argument("--input", required=True)
        p.add_argument("--model", choices=MODEL_CHOICES, default="SAV_diag")
        p.add_argument("--window", type=int, required=True)
        p.add_argument("--refit-every", type=int, default=100)
        p.add_argument("--negate-returns", action="store_true")
        p.add_argument("--out", default="forecasts.csv")
        if name == "backtest":
            p.add_argument("--display-rescale", action="store_true",
                           help="report VaR scores x10 and CoVaR scores x1000")

    p = sub.add_parser("compare", help="traffic-light comparison of two forecast files")
    _add_common(p)
    _add_levels(p)
    p.add_argument("--baseline", required=True)
    p.add_argument("--alternative", required=True)
    p.add_argument("--significance", type=float, default=0.10)
    p.add_argument("--hac-lags", type=int, default=None)
    p.add_argument("--out", default="comparison.csv")

    p = sub.add_parser("mc-study", help="replication study of the estimator")
    _add_common(p)
    _add_levels(p)
    _add_optimizer(p)
    _add_dgp(p)
    p.add_argument("--m", type=int, required=True, help="number of replications")
    p.add_argument("--n", type=int, required=True, help="sample size per replication")
    p.add_argument("--variant", choices=tuple(NAMED_VARIANTS), default="SAV_diag")
    p.add_argument("--mc-draws", type=int, default=simulation.ORACLE_DRAWS)
    p.add_argument("--out", default="mc_table.csv")

    return parser


def _resolve_options(parser, argv) -> RunConfig:
    args = parser.parse_args(argv)
    options = vars(args)
    command = options.pop("command")
    config_path = options.pop("config", None)
    if config_path:
        file_values = read_config_file(config_path)
        explicit = _explicit_flags(argv)
        for key, raw in file_values.items():
            if key not in options:
                raise ValidationError(f"unknown config key {key!r}")
            if key in explicit:
                continue  # command-line flags override the file
            current = options[key]
            if isinstance(current, bool):
                options[key] = raw.lower() in ("1", "true", "yes", "on")
            elif isinstance(current, int) and not isinstance(current, bool):
                options[key] = int(raw)
            elif isinstance(current, float):
                options[key] = float(raw)
            else:
                options[key] = raw
    return RunConfig(command=command, options=options)


def _explicit_flags(argv) -> set:
    explicit = set()
    for token in argv:
        if token.startswith("--"):
            explicit.add(token[2:].split("=", 1)[0].replace("-", "_"))
    return explicit


def run(config: RunConfig) -> int:
    """Dispatch a resolved command; returns the process exit status."""
    out_dir = Path(config.options.get("out_dir", "."))
    out_dir.mkdir(parents=True, exist_ok=True)
    return _COMMANDS[config.command](config.options)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        config = _resolve_options(parser, argv)
        return run(config)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
