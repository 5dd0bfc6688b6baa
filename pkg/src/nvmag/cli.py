"""NV-diamond vector magnetometer simulator and processing tools.

Exit codes: 0 success, 2 validation error, 3 I/O error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import analysis, calibration, io
from .config import RunConfig
from .errors import NumericalError, ValidationError
from .geodesy import LocalFrame
from .nv_physics import ImperfectionModel
from .pipeline import process_frames
from .scenarios import DEFAULTS, KINDS, Scenario, chamber_imperfections, generate_dataset

log = logging.getLogger("nvmag")

EXIT_OK, EXIT_VALIDATION, EXIT_IO, EXIT_NUMERICAL = 0, 2, 3, 4


def _vector(text):
    try:
        values = [float(v) for v in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if len(values) == 1:
        values *= 3
    if len(values) != 3:
        raise argparse.ArgumentTypeError("expected one or three comma-separated numbers")
    return np.array(values)


def _keyvalue(text):
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, value = text.split("=", 1)
    try:
        return key, float(value)
    except ValueError:
        raise argparse.ArgumentTypeError(f"parameter {key} needs a number") from None


def _fitted_at(args):
    if args.fitted_at:
        return args.fitted_at
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch:
        return datetime.fromtimestamp(int(epoch), timezone.utc).isoformat()
    return None


def _with_stamp(model, args):
    stamp = _fitted_at(args)
    if stamp is None:
        return model
    return calibration.CalibrationModel(model.matrix, model.offset, model.temp_coeffs, model.ref_temp, model.fit_report, stamp)


def cmd_sim(args, config):
    params = dict(args.param or [])
    defaults = DEFAULTS[args.scenario]
    if args.duration is not None:
        if "duration" not in defaults:
            raise ValidationError(f"scenario {args.scenario} has no duration")
        params["duration"] = args.duration
    if args.n is not None:
        params["n"] = args.n
    seed = config.seed if args.seed is None else args.seed
    scenario = Scenario(args.scenario, params, args.rate, seed, args.temperature)
    base = ImperfectionModel.table1_before() if args.imperfections == "table1" else ImperfectionModel()
    imperfections = chamber_imperfections(args.asd, args.rate, base)
    paths = generate_dataset(scenario, imperfections, args.mode, args.out, config)
    for name, path in paths.items():
        print(f"{name}: {path}")
    return EXIT_OK


def cmd_pipeline(args, config):
    out_fh = open(args.output, "w", encoding="utf-8", newline="\n")
    diag_path = args.diag or os.path.splitext(args.output)[0] + ".diag.csv"
    diag_fh = open(diag_path, "w", encoding="utf-8", newline="\n")
    n_valid = n_bad = n_relock = 0
    with out_fh, diag_fh:
        out_fh.write(",".join(io.TS_HEADER) + "\n")
        diag_fh.write("frame,t_s,valid,relocked,residual_nT,sx_nT,sy_nT,sz_nT,fit_quality,message\n")
        for res in process_frames(io.iter_spectra(args.spectra), config):
            if res.valid:
                r = res.reading
                b = r.field.as_array()
                out_fh.write(",".join(io.fmt(v) for v in (r.timestamp, *b, r.diamond_temp)) + "\n")
                s = r.field_sigma
                diag_fh.write(
                    f"{res.frame_id},{io.fmt(res.timestamp)},1,{int(res.relocked)},{io.fmt(r.inversion_residual)},"
                    f"{io.fmt(s[0])},{io.fmt(s[1])},{io.fmt(s[2])},{io.fmt(r.aux['fit_quality'])},\n"
                )
                n_valid += 1
                n_relock += res.relocked
            else:
                msg = (res.error or "").replace(",", ";").replace("\n", " ")
                diag_fh.write(f"{res.frame_id},{io.fmt(res.timestamp)},0,0,nan,nan,nan,nan,nan,{msg}\n")
                n_bad += 1
            out_fh.flush()
    print(f"frames: {n_valid} valid, {n_bad} invalid, {n_relock} re-detections")
    return EXIT_OK


def _table_report(model, residual_std=None):
    table = calibration.cal_table(model)
    return table.format(residual_std)


def cmd_cal(args, config):
    sub = args.cal_command
    if sub == "fit":
        measured = io.read_timeseries(args.measured)
        reference = io.read_timeseries(args.reference)
        temps = measured.temp if args.with_temp else None
        model = calibration.fit_affine_calibration(measured.field, reference.field, temps)
        model = _with_stamp(model, args)
        io.write_model(args.output, model)
        print(_table_report(model, model.fit_report["residual_std"]))
        print(f"training residual std (nT): {' '.join(f'{v:.3f}' for v in model.fit_report['residual_std'])}")
    elif sub == "apply":
        model = io.read_model(args.model)
        series = io.read_timeseries(args.input)
        io.write_timeseries(args.output, calibration.apply_calibration(model, series))
    elif sub == "spin":
        series = io.read_timeseries(args.measured)
        model = calibration.spin_calibration(series, args.reference_tmi, args.offsets_only)
        model = _with_stamp(model, args)
        io.write_model(args.output, model)
        rep = model.fit_report
        print(_table_report(model))
        print(f"raw TMI std {rep['raw_tmi_std']:.3f} nT, spread {rep['raw_tmi_spread']:.3f} nT")
        print(f"corrected TMI std {rep['tmi_std']:.3f} nT, max deviation {rep['tmi_max_dev']:.3f} nT")
    elif sub == "temp":
        series = io.read_timeseries(args.measured)
        base = io.read_model(args.model) if args.model else None
        if base is not None:
            series = calibration.apply_calibration(base, series)
        fit = calibration.fit_temperature_model(series, args.field)
        for i, name in enumerate("XYZ"):
            print(
                f"{name}: slope {fit.slope[i]:.4f} +/- {fit.slope_se[i]:.4f} nT/K, "
                f"intercept {fit.intercept[i]:.3f} +/- {fit.intercept_se[i]:.3f} nT"
            )
        print(f"reference temperature {fit.ref_temp:.3f} K")
        if args.output:
            io.write_model(args.output, _with_stamp(fit.correction(base), args))
    elif sub == "eval":
        model = io.read_model(args.model)
        measured = io.read_timeseries(args.measured)
        reference = io.read_timeseries(args.reference)
        report = calibration.evaluate_accuracy(model, measured.field, reference.field, measured.temp)
        print(_table_report(model, report.std))
        print(report.format())
    return EXIT_OK


def cmd_allan(args, config):
    series = io.read_timeseries(args.input)
    if len(series) < 3:
        raise ValidationError("series too short for Allan analysis")
    rate = args.rate or 1.0 / float(np.median(np.diff(series.t)))
    taus = args.taus
    if taus is not None and args.tau not in taus:
        taus = sorted(set(taus) | {args.tau})
    if taus is None:
        taus = sorted(set(analysis.default_taus(len(series), rate).tolist()) | {args.tau})
    curve = analysis.allan_deviation(series.field, rate, taus)
    if args.output:
        io.write_allan_report(args.output, curve)
    sens = analysis.sensitivity_at(curve, args.tau)
    print(f"sensitivity at tau={args.tau:g} s (pT/sqrt(Hz)): " + " ".join(f"{v:.1f}" for v in sens))
    print("knee tau (s): " + " ".join(f"{v:g}" for v in curve.knee()))
    return EXIT_OK


def cmd_survey(args, config):
    series = io.read_timeseries(args.input)
    frame = LocalFrame(*args.origin) if args.origin is not None else LocalFrame()
    grid = analysis.grid_tmi_map(series, spacing=args.spacing, frame=frame)
    io.write_grid(args.output, grid)
    j, i = grid.argmax_cell()
    xs, ys = grid.spec.centers()
    print(f"grid {grid.values.shape[0]}x{grid.values.shape[1]}, max TMI {np.nanmax(grid.values):.3f} nT at east {xs[i]:g} m, north {ys[j]:g} m")
    return EXIT_OK


def cmd_diurnal(args, config):
    survey = io.read_timeseries(args.survey)
    base = io.read_timeseries(args.base)
    corrected = analysis.diurnal_correct(survey, base)
    io.write_timeseries(args.output, corrected)
    print("corrected std (nT): " + " ".join(f"{v:.3f}" for v in corrected.field.std(axis=0)))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="nvmag", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="key=value run configuration file")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sim", help="generate a synthetic dataset")
    s.add_argument("scenario", choices=KINDS)
    s.add_argument("--out", default="sim_out", help="output directory")
    s.add_argument("--mode", choices=("fields", "spectra"), default="fields")
    s.add_argument("--rate", type=float, default=10.0, help="sample rate, Hz")
    s.add_argument("--seed", type=int)
    s.add_argument("--duration", type=float)
    s.add_argument("--n", type=int, help="point count for coil_points")
    s.add_argument("--temperature", type=float, default=298.15, help="diamond temperature, K")
    s.add_argument("--imperfections", choices=("none", "table1"), default="none")
    s.add_argument("--asd", type=_vector, default=np.array([400.0] * 3), help="white noise ASD per axis, pT/sqrt(Hz)")
    s.add_argument("--param", type=_keyvalue, action="append", metavar="KEY=VALUE", help="scenario parameter")
    s.set_defaults(func=cmd_sim)

    s = sub.add_parser("pipeline", help="spectra file -> field readings")
    s.add_argument("spectra")
    s.add_argument("-o", "--output", default="readings.csv")
    s.add_argument("--diag", help="per-frame diagnostics CSV (default: <output>.diag.csv)")
    s.set_defaults(func=cmd_pipeline)

    s = sub.add_parser("cal", help="calibration tools")
    cal = s.add_subparsers(dest="cal_command", required=True)
    c = cal.add_parser("fit", help="affine fit against reference fields")
    c.add_argument("--measured", required=True)
    c.add_argument("--reference", required=True)
    c.add_argument("--with-temp", action="store_true", help="also fit a linear temperature term")
    c.add_argument("-o", "--output", default="model.txt")
    c.add_argument("--fitted-at", help="ISO-8601 stamp recorded in the model file")
    c = cal.add_parser("apply", help="apply a model to a time series")
    c.add_argument("--model", required=True)
    c.add_argument("--input", required=True)
    c.add_argument("-o", "--output", default="corrected.csv")
    c = cal.add_parser("spin", help="constant-TMI spin calibration")
    c.add_argument("--measured", required=True)
    c.add_argument("--reference-tmi", type=float)
    c.add_argument("--offsets-only", action="store_true")
    c.add_argument("-o", "--output", default="model.txt")
    c.add_argument("--fitted-at")
    c = cal.add_parser("temp", help="offset-vs-temperature regression in a constant field")
    c.add_argument("--measured", required=True)
    c.add_argument("--field", type=_vector, default=np.zeros(3), help="known constant field, nT")
    c.add_argument("--model", help="apply this model first and extend it")
    c.add_argument("-o", "--output")
    c.add_argument("--fitted-at")
    c = cal.add_parser("eval", help="accuracy of a model on test data")
    c.add_argument("--model", required=True)
    c.add_argument("--measured", required=True)
    c.add_argument("--reference", required=True)
    s.set_defaults(func=cmd_cal)

    s = sub.add_parser("allan", help="Allan deviation and sensitivity")
    s.add_argument("input")
    s.add_argument("-o", "--output", help="report file tau_s,sx_nT,sy_nT,sz_nT")
    s.add_argument("--rate", type=float, help="sample rate (default: from timestamps)")
    s.add_argument("--taus", type=lambda t: [float(v) for v in t.split(",")])
    s.add_argument("--tau", type=float, default=1.0, help="tau for the sensitivity figure")
    s.set_defaults(func=cmd_allan)

    s = sub.add_parser("survey", help="grid a geo-referenced survey into a TMI map")
    s.add_argument("input")
    s.add_argument("-o", "--output", default="grid.txt")
    s.add_argument("--spacing", type=float, default=5.0, help="cell size, m")
    s.add_argument("--origin", type=lambda t: tuple(float(v) for v in t.split(",")), help="local frame origin lat,lon")
    s.set_defaults(func=cmd_survey)

    s = sub.add_parser("diurnal", help="base-station diurnal correction")
    s.add_argument("--survey", required=True)
    s.add_argument("--base", required=True)
    s.add_argument("-o", "--output", default="diurnal_corrected.csv")
    s.set_defaults(func=cmd_diurnal)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        config = RunConfig.load(args.config)
        return args.func(args, config)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
