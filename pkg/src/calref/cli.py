"""Command-line surface: decompose, calibrate, stop, theory, simulate.

Exit codes: 0 success, 2 input error, 3 method incompatibility, 4 numerical
failure.  All float output uses 17 significant digits; given identical flags
and seeds, output is byte-stable.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import sys

import numpy as np

from .calibrate import IsotonicCalibrator, apply_calibrator, fit_isotonic, fit_temperature
from .decompose import EstimatorKind, cv_refinement, decompose_risk
from .errors import (
    CalrefError,
    MethodCompatibilityError,
    NumericalError,
    ValidationError,
)
from .gaussian import invert_estar
from .highdim import lambda_sweep, minimizer_gap_and_gain
from .io import (
    FLOAT_FMT,
    list_epoch_files,
    read_calibrator,
    read_prediction_file,
    write_calibrator,
    write_prediction_file,
)
from .scores import LossKind, empirical_risk
from .simulate import replicate_fig4
from .spectra import SpectralDist
from .stopping import STOPPING_METRICS, EpochTracker, canonical_metric

F = FLOAT_FMT


def _fmt(x) -> str:
    return F % x


def _bool_flag(value: str) -> bool:
    v = value.strip().lower()
    if v in ("on", "true", "1", "yes"):
        return True
    if v in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {value!r}")


def _lambda_grid(args) -> np.ndarray:
    if args.lambda_min <= 0 or args.lambda_max <= args.lambda_min:
        raise ValidationError("need 0 < lambda-min < lambda-max")
    if args.lambda_steps < 2:
        raise ValidationError("lambda-steps must be >= 2")
    return np.logspace(np.log10(args.lambda_min), np.log10(args.lambda_max), args.lambda_steps)


def _float_list(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated floats, got {text!r}")


def cmd_decompose(args) -> int:
    data = read_prediction_file(args.preds, logits=args.logits, renormalize=args.renormalize)
    loss = LossKind.parse(args.loss)
    if args.method == "cv-ts":
        risk = empirical_risk(loss, data)
        refinement = cv_refinement(data, loss, smoothing=args.smoothing)
        payload = {"risk": risk, "calibration": risk - refinement, "refinement": refinement}
        estimator = "cv-ts"
    else:
        dec = decompose_risk(data, loss, EstimatorKind.parse(args.method), smoothing=args.smoothing)
        payload = {"risk": dec.risk, "calibration": dec.calibration, "refinement": dec.refinement}
        estimator = dec.estimator.value
    payload.update({"loss": loss.value, "estimator": estimator, "n": data.n, "k": data.k})
    if args.format == "json":
        print(json.dumps(payload, indent=2, default=float))
    else:
        writer = csv.writer(sys.stdout)
        writer.writerow(list(payload))
        writer.writerow(
            [_fmt(v) if isinstance(v, float) else v for v in payload.values()]
        )
    return 0


def cmd_calibrate(args) -> int:
    data = read_prediction_file(args.preds, logits=args.logits, renormalize=args.renormalize)
    if args.mode == "fit":
        if args.method == "ts":
            cal = fit_temperature(data, LossKind.parse(args.loss), smoothing=args.smoothing)
        else:
            cal = fit_isotonic(data, smoothing=args.smoothing)
        write_calibrator(args.out, cal)
        return 0
    cal = read_calibrator(args.calibrator)
    if isinstance(cal, IsotonicCalibrator) and data.k != 2:
        raise MethodCompatibilityError("isotonic calibrator requires k=2 predictions")
    calibrated = data.replace_probs(apply_calibrator(cal, data.probs))
    write_prediction_file(args.out, calibrated)
    return 0


def cmd_stop(args) -> int:
    tracker = EpochTracker(smoothing=args.smoothing, retain_predictions=args.test_dir is not None)
    for epoch, path in list_epoch_files(args.epoch_dir):
        tracker.record_epoch(epoch, read_prediction_file(path, logits=args.logits))
    metrics = STOPPING_METRICS if args.report_all or args.metric is None else (canonical_metric(args.metric),)
    for metric in metrics:
        print(f"best-epoch {metric} {tracker.best_epoch(metric)} {_fmt(tracker.best_value(metric))}")
    if args.test_dir is not None:
        test_sets = {
            epoch: read_prediction_file(path, logits=args.logits)
            for epoch, path in list_epoch_files(args.test_dir)
        }
        report = tracker.compare_policies(test_sets)
        writer = csv.writer(sys.stdout)
        writer.writerow(
            [
                "stopping_metric",
                "epoch",
                "logloss",
                "brier",
                "accuracy",
                "ece",
                "logloss_ts",
                "brier_ts",
                "accuracy_ts",
                "ece_ts",
            ]
        )
        for row in report.rows:
            writer.writerow(
                [row.stopping_metric, row.epoch]
                + [
                    _fmt(v)
                    for v in (
                        row.logloss,
                        row.brier,
                        row.accuracy,
                        row.ece,
                        row.logloss_ts,
                        row.brier_ts,
                        row.accuracy_ts,
                        row.ece_ts,
                    )
                ]
            )
    return 0


def _emit(args, text: str) -> None:
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_theory(args) -> int:
    spectrum = SpectralDist(args.alpha, args.beta, args.eps)
    lams = _lambda_grid(args)
    buf = _io.StringIO()
    writer = csv.writer(buf)
    if args.mode == "curve":
        if args.r is None or args.estar is None:
            raise ValidationError("theory curve requires --r and --estar")
        sweep = lambda_sweep(spectrum, args.r, args.estar, lams)
        writer.writerow(["lambda", "risk", "calibration", "refinement", "error_rate", "alignment", "norm"])
        for i, lam in enumerate(sweep.lambdas):
            if sweep.ok[i]:
                writer.writerow(
                    [_fmt(lam)]
                    + [
                        _fmt(v)
                        for v in (
                            sweep.risk[i],
                            sweep.calibration[i],
                            sweep.refinement[i],
                            sweep.error_rate[i],
                            sweep.alignment[i],
                            sweep.norm[i],
                        )
                    ]
                )
            else:
                writer.writerow([_fmt(lam), "NA", "NA", "NA", "NA", "NA", "NA"])
        if sweep.failures:
            print(f"{len(sweep.failures)} solver failures, first: {sweep.failures[0][1]}", file=sys.stderr)
        if not sweep.ok.any():
            raise NumericalError("solver failed on every lambda grid point")
        for column in ("risk", "calibration", "refinement"):
            lam, _, boundary = sweep.argmin_lambda(column)
            buf.write(f"# argmin {column}: lambda={_fmt(lam)} boundary={str(boundary).lower()}\n")
        buf.write(f"# refine_then_calibrate_gain={_fmt(sweep.refine_then_calibrate_gain())}\n")
    else:
        if not args.r_grid or not args.estar_grid:
            raise ValidationError("theory heatmap requires --r-grid and --estar-grid")
        cells = minimizer_gap_and_gain(spectrum, args.r_grid, args.estar_grid, lams, workers=args.workers)
        writer.writerow(
            [
                "r",
                "estar",
                "lambda_cal",
                "lambda_ref",
                "lambda_risk",
                "log10_gap",
                "gain_pct",
                "cal_boundary",
                "ref_boundary",
            ]
        )
        failed = 0
        grid = [(r, e) for r in args.r_grid for e in args.estar_grid]
        for (r, estar), cell in zip(grid, cells):
            if cell is None:
                failed += 1
                writer.writerow([_fmt(r), _fmt(estar)] + ["NA"] * 7)
            else:
                writer.writerow(
                    [
                        _fmt(cell.r),
                        _fmt(cell.estar),
                        _fmt(cell.lambda_cal),
                        _fmt(cell.lambda_ref),
                        _fmt(cell.lambda_risk),
                        _fmt(cell.log10_gap),
                        _fmt(cell.gain_pct),
                        str(cell.cal_boundary).lower(),
                        str(cell.ref_boundary).lower(),
                    ]
                )
        if failed:
            print(f"{failed} heatmap cells failed to solve", file=sys.stderr)
        if failed == len(grid):
            raise NumericalError("solver failed on every heatmap cell")
    _emit(args, buf.getvalue())
    return 0


def cmd_simulate(args) -> int:
    if args.seeds < 1:
        raise ValidationError("--seeds must be >= 1")
    spectrum = SpectralDist(args.alpha, args.beta, args.eps)
    if args.lambda_grid:
        lams = np.asarray(args.lambda_grid, dtype=np.float64)
        if np.any(lams <= 0) or np.any(np.diff(lams) <= 0):
            raise ValidationError("--lambda-grid must be strictly increasing and positive")
    else:
        lams = _lambda_grid(args)
    c = invert_estar(args.estar, spectrum)
    rep = replicate_fig4(
        spectrum, args.r, c, lams, n=args.n, seeds=args.seeds, workers=args.workers
    )
    sweep = lambda_sweep(spectrum, args.r, args.estar, lams)
    buf = _io.StringIO()
    writer = csv.writer(buf)
    writer.writerow(
        [
            "lambda",
            "cal_mean",
            "cal_lo",
            "cal_hi",
            "ref_mean",
            "ref_lo",
            "ref_hi",
            "risk_mean",
            "risk_lo",
            "risk_hi",
            "theory_cal",
            "theory_ref",
            "theory_risk",
        ]
    )
    for i, lam in enumerate(lams):
        row = [
            lam,
            rep.cal_mean[i],
            rep.cal_mean[i] - rep.cal_half[i],
            rep.cal_mean[i] + rep.cal_half[i],
            rep.ref_mean[i],
            rep.ref_mean[i] - rep.ref_half[i],
            rep.ref_mean[i] + rep.ref_half[i],
            rep.risk_mean[i],
            rep.risk_mean[i] - rep.risk_half[i],
            rep.risk_mean[i] + rep.risk_half[i],
        ]
        theory = (
            [sweep.calibration[i], sweep.refinement[i], sweep.risk[i]] if sweep.ok[i] else None
        )
        writer.writerow(
            [_fmt(v) for v in row] + (["NA"] * 3 if theory is None else [_fmt(v) for v in theory])
        )
    buf.write(f"# seeds_used={rep.n_seeds} dropped_seeds={list(rep.dropped_seeds)}\n")
    _emit(args, buf.getvalue())
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="calref",
        description="Calibration/refinement decomposition, refinement-based stopping, "
        "and high-dimensional logistic-regression learning curves.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("decompose", help="decompose a prediction file's risk")
    p.add_argument("--preds", required=True)
    p.add_argument("--loss", default="logloss", choices=["logloss", "brier"])
    p.add_argument("--method", default="ts", choices=["ts", "isotonic", "bruteforce", "cv-ts"])
    p.add_argument("--logits", action="store_true", help="read z0.. logit columns")
    p.add_argument("--renormalize", action="store_true")
    p.add_argument("--smoothing", type=_bool_flag, default=False)
    p.add_argument("--format", default="json", choices=["json", "csv"])
    p.set_defaults(func=cmd_decompose)

    p = sub.add_parser("calibrate", help="fit or apply a post-hoc calibrator")
    p.add_argument("mode", choices=["fit", "apply"])
    p.add_argument("--preds", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", default="ts", choices=["ts", "isotonic"])
    p.add_argument("--loss", default="logloss", choices=["logloss", "brier"])
    p.add_argument("--calibrator", help="calibrator JSON (apply mode)")
    p.add_argument("--logits", action="store_true")
    p.add_argument("--renormalize", action="store_true")
    p.add_argument("--smoothing", type=_bool_flag, default=False)
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("stop", help="best-epoch selection over an epoch directory")
    p.add_argument("--epoch-dir", required=True)
    p.add_argument("--metric", default=None)
    p.add_argument("--report-all", action="store_true")
    p.add_argument("--test-dir", default=None)
    p.add_argument("--logits", action="store_true")
    p.add_argument("--smoothing", type=_bool_flag, default=True)
    p.set_defaults(func=cmd_stop)

    p = sub.add_parser("theory", help="theoretical learning curves and heatmaps")
    p.add_argument("mode", choices=["curve", "heatmap"])
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--r", type=float, default=None)
    p.add_argument("--estar", type=float, default=None)
    p.add_argument("--r-grid", type=_float_list, default=None)
    p.add_argument("--estar-grid", type=_float_list, default=None)
    p.add_argument("--lambda-min", type=float, default=1e-3)
    p.add_argument("--lambda-max", type=float, default=1e2)
    p.add_argument("--lambda-steps", type=int, default=60)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_theory)

    p = sub.add_parser("simulate", help="finite-sample replication with theory overlay")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--estar", type=float, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--lambda-grid", type=_float_list, default=None,
                   help="explicit comma-separated grid; overrides min/max/steps")
    p.add_argument("--lambda-min", type=float, default=1e-3)
    p.add_argument("--lambda-max", type=float, default=1e2)
    p.add_argument("--lambda-steps", type=int, default=25)
    p.add_argument("--seeds", type=int, default=50)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "command", None) == "calibrate" and args.mode == "apply" and not args.calibrator:
        print("error: calibrate apply requires --calibrator", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except MethodCompatibilityError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except CalrefError as exc:  # pragma: no cover - catch-all for new subtypes
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
