"""Command-line front end.

Exit codes: 0 success, 2 validation or usage error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys

import numpy as np

from .calibration import calibrate
from .corrections import CORRECTION_METHODS, correct_values
from .data_model import (
    CalibrationArtifact,
    has_column,
    load_artifact,
    load_calibration_pairs,
    load_column,
    load_labels,
    load_trial,
    save_artifact,
)
from .density import DEFAULT_DENSITY_FLOOR_FRAC
from .diagnostics import calibration_regression, format_table, write_table_csv, write_table_json
from .errors import NumericalError, ValidationError
from .estimators import PropensitySpec, diff_in_means, hajek_weights, iptw_ate, ppi_ate
from .simulation import SimConfig, mean_r2, read_sweep_csv, run_sweep, summarize, write_sweep_csv

log = logging.getLogger("shrinkage_debias")

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 2, 3


def _defaulted(name, value):
    log.info("using default %s=%s", name, value)
    return value


def _require_file(path, what):
    if not os.path.isfile(path):
        raise ValidationError(f"{what} not found: {path}")


def _require_out_dir(path):
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent):
        raise ValidationError(f"output directory does not exist: {parent}")


# --- calibrate -------------------------------------------------------------


def cmd_calibrate(args) -> int:
    _require_file(args.pairs, "calibration pairs")
    _require_out_dir(args.out)
    pairs = load_calibration_pairs(args.pairs)
    sigma_pairs = None
    if args.sigma_source == "training":
        if not args.training_pairs:
            raise ValidationError("--sigma-source training needs --training-pairs")
        sigma_pairs = load_calibration_pairs(args.training_pairs)
    artifact, fit = calibrate(pairs, args.sigma_source, sigma_pairs)
    save_artifact(artifact, args.out)
    print(f"k_hat      {artifact.k_hat:.6g}")
    print(f"m_hat      {artifact.m_hat:.6g}")
    print(f"sigma2_hat {artifact.sigma2_hat:.6g}  ({artifact.sigma_source})")
    print(f"n_cal      {artifact.n_cal}")
    print(f"R^2        {fit.r_squared:.4f}")
    return EXIT_OK


# --- correct ---------------------------------------------------------------


def _resolve_artifact(args, method) -> CalibrationArtifact | None:
    if method == "naive":
        return None
    base = load_artifact(args.artifact) if args.artifact else None
    if base is None:
        k = args.k if args.k is not None else _defaulted("k", 1.0)
        m = args.m if args.m is not None else _defaulted("m", 0.0)
        if method == "tweedie" and args.sigma2 is None:
            raise ValidationError("tweedie without --artifact needs --sigma2")
        sigma2 = args.sigma2 if args.sigma2 is not None else 0.0
        return CalibrationArtifact(k_hat=k, m_hat=m, sigma2_hat=sigma2, n_cal=3)
    overrides = {}
    if args.k is not None:
        overrides["k_hat"] = args.k
    if args.m is not None:
        overrides["m_hat"] = args.m
    if args.sigma2 is not None:
        overrides["sigma2_hat"] = args.sigma2
    if overrides:
        log.info("overriding artifact fields %s", overrides)
        base = CalibrationArtifact(**{**_artifact_fields(base), **overrides})
    return base


def _artifact_fields(a: CalibrationArtifact) -> dict:
    return {f: getattr(a, f) for f in ("k_hat", "m_hat", "sigma2_hat", "n_cal", "sigma_source", "schema_version")}


def cmd_correct(args) -> int:
    _require_file(args.trial, "trial")
    _require_out_dir(args.out)
    if args.artifact:
        _require_file(args.artifact, "artifact")
    trial = load_trial(args.trial)
    artifact = _resolve_artifact(args, args.method)
    kde_kwargs = {}
    if args.method == "tweedie":
        floor = args.density_floor if args.density_floor is not None else _defaulted(
            "density_floor", DEFAULT_DENSITY_FLOOR_FRAC
        )
        kde_kwargs["density_floor_frac"] = floor
        if args.score_clamp is not None:
            kde_kwargs["score_clamp"] = args.score_clamp
        else:
            _defaulted("score_clamp", "2/bandwidth")
        if args.weight_by_propensity:
            e = PropensitySpec.parse(args.weight_by_propensity).resolve(trial)
            kde_kwargs["weights"] = hajek_weights(trial.treatment, e)
        log.info("tweedie with k=%s sigma2=%s", artifact.k_hat, artifact.sigma2_hat)
    values = correct_values(trial, artifact, args.method, **kde_kwargs)
    if not np.all(np.isfinite(values)):
        raise NumericalError("correction produced non-finite values")
    extra = [c for c in ("confounder", "propensity") if getattr(trial, c) is not None]
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["unit_id", "y_pred", "treatment", "y_corrected", "method", *extra])
        for rec, v in zip(trial.records, values):
            writer.writerow(
                [rec.unit_id, repr(rec.y_pred), rec.treatment, repr(float(v)), args.method]
                + [repr(getattr(rec, c)) for c in extra]
            )
    print(f"wrote {len(values)} corrected rows ({args.method}) to {args.out}")
    return EXIT_OK


# --- estimate --------------------------------------------------------------


def cmd_estimate(args) -> int:
    _require_file(args.trial, "trial")
    if args.estimator == "ppi" and not args.labeled:
        raise ValidationError("--estimator ppi needs --labeled")
    if args.estimator != "ppi" and args.labeled:
        raise ValidationError("ground-truth labels are only accepted by --estimator ppi")
    trial = load_trial(args.trial)
    corrected = has_column(args.trial, "y_corrected")
    method = args.method
    if method is None:
        if args.estimator == "ppi":
            method = "ppi"
        elif corrected and has_column(args.trial, "method"):
            methods = {m.strip() for m in _read_text_column(args.trial, "method")}
            method = methods.pop() if len(methods) == 1 else "naive"
        else:
            method = "naive"
    propensity = None
    if args.propensity:
        propensity = PropensitySpec.parse(args.propensity).resolve(trial)
    elif args.estimator == "iptw":
        raise ValidationError("--estimator iptw needs --propensity (column, sigmoid or const:<p>)")

    if args.estimator == "ppi":
        _require_file(args.labeled, "labels")
        report = ppi_ate(trial, load_labels(args.labeled), propensity)
    else:
        values = load_column(args.trial, "y_corrected") if corrected else trial.y_pred
        if args.estimator == "dm":
            report = diff_in_means(values, trial.treatment, method)
        else:
            report = iptw_ate(values, trial.treatment, propensity, method)
    if not math.isfinite(report.tau_hat):
        raise NumericalError("estimate is not finite")
    print(f"method={report.method} estimator={report.estimator} tau_hat={report.tau_hat:.6g} "
          f"n_treated={report.n_treated} n_control={report.n_control}")
    if args.out:
        _require_out_dir(args.out)
        with open(args.out, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["method", "estimator", "tau_hat", "n_treated", "n_control"])
            writer.writerow([report.method, report.estimator, repr(report.tau_hat), report.n_treated, report.n_control])
    return EXIT_OK


def _read_text_column(path, column):
    with open(path, newline="", encoding="utf-8-sig") as fh:
        return [row[column] for row in csv.DictReader(fh)]


# --- simulate --------------------------------------------------------------


def _load_sim_config(args) -> SimConfig:
    doc = {}
    if args.config:
        _require_file(args.config, "config")
        try:
            with open(args.config, encoding="utf-8") as fh:
                doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config {args.config} is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise ValidationError("config must be a JSON object")
    if args.tau_grid is not None:
        start, stop, num = args.tau_grid
        if num != int(num) or num < 1:
            raise ValidationError("--tau-grid NUM must be a positive integer")
        doc["tau_grid"] = np.linspace(start, stop, int(num)).tolist()
    for name in ("seed", "n_train", "n_test"):
        value = getattr(args, name)
        if value is not None:
            doc[name] = value
    cfg = SimConfig.from_dict(doc)
    for name, value in cfg.to_dict().items():
        if name not in doc:
            shown = f"{len(value)} points in [{min(value)}, {max(value)}]" if name == "tau_grid" else value
            _defaulted(name, shown)
    return cfg


def cmd_simulate(args) -> int:
    cfg = _load_sim_config(args)
    os.makedirs(args.out, exist_ok=True)
    results = run_sweep(cfg, n_jobs=args.jobs)
    sweep_path = os.path.join(args.out, "sweep.csv")
    write_sweep_csv(results, sweep_path)
    print(f"wrote {sweep_path} ({len(results)} tau points, mean out-of-sample R^2 {mean_r2(results):.3f})")
    tau = np.array([r.tau_true for r in results])
    if tau.size < 4 or np.ptp(tau) == 0:
        print("tau grid has no spread; calibration regression skipped. Per-method estimates:")
        for r in results:
            for _, method, tau_hat, _ in r.rows():
                print(f"  tau={r.tau_true:+.3f} {method:<9} {tau_hat:+.4f}")
        return EXIT_OK
    diagnostics = summarize(results)
    summary_path = os.path.join(args.out, "summary.csv")
    write_table_csv(diagnostics, summary_path)
    print(format_table(diagnostics))
    print(f"wrote {summary_path}")
    return EXIT_OK


# --- report ----------------------------------------------------------------


def cmd_report(args) -> int:
    _require_file(args.sweep, "sweep")
    by_method = read_sweep_csv(args.sweep)
    diagnostics = {m: calibration_regression(t, h) for m, (t, h) in by_method.items()}
    print(format_table(diagnostics))
    if args.out:
        _require_out_dir(args.out)
        if args.out.endswith(".json"):
            write_table_json(diagnostics, args.out)
        else:
            write_table_csv(diagnostics, args.out)
    return EXIT_OK


# --- entry point -----------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shrinkage-debias", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log at debug level")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("calibrate", help="fit k, m, sigma^2 on labeled calibration pairs")
    p.add_argument("pairs", help="CSV with y_true,y_pred")
    p.add_argument("--out", required=True, help="artifact JSON to write")
    p.add_argument("--sigma-source", choices=("calibration", "training"), default="calibration")
    p.add_argument("--training-pairs", help="CSV of training pairs (for --sigma-source training)")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("correct", help="debias the predictions of a trial")
    p.add_argument("trial", help="CSV with unit_id,y_pred,treatment[,confounder,propensity]")
    p.add_argument("--method", choices=CORRECTION_METHODS, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--artifact")
    p.add_argument("--k", type=float)
    p.add_argument("--m", type=float)
    p.add_argument("--sigma2", type=float)
    p.add_argument("--density-floor", type=float)
    p.add_argument("--score-clamp", type=float)
    p.add_argument("--weight-by-propensity", metavar="SPEC",
                   help="fit each arm's KDE with IPTW weights (column, sigmoid or const:<p>)")
    p.set_defaults(func=cmd_correct)

    p = sub.add_parser("estimate", help="treatment effect from a trial or corrected CSV")
    p.add_argument("trial")
    p.add_argument("--estimator", choices=("dm", "iptw", "ppi"), required=True)
    p.add_argument("--labeled", help="CSV with unit_id,y_true (ppi only)")
    p.add_argument("--propensity", help="column, sigmoid or const:<p>")
    p.add_argument("--method", choices=("naive", "lcc", "tweedie", "ppi", "oracle"))
    p.add_argument("--out", help="CSV file for the report row")
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("simulate", help="run the benchmark sweep")
    p.add_argument("--config", help="JSON file of simulation settings")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--tau-grid", nargs=3, type=float, metavar=("START", "STOP", "NUM"))
    p.add_argument("--seed", type=int)
    p.add_argument("--n-train", type=int)
    p.add_argument("--n-test", type=int)
    p.add_argument("--jobs", type=int, default=1, help="worker processes (results are identical)")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("report", help="diagnostics table from a sweep CSV")
    p.add_argument("sweep")
    p.add_argument("--out", help="CSV (or .json) summary to write")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO, format="%(levelname)s %(message)s",
                        stream=sys.stderr)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
