"""Acceptance criteria, each at its stated tolerance and runtime budget.

Every test records one PASS/FAIL line; ``conftest.py`` prints them at the end
of the session and ``python3 tests/test_acceptance.py`` prints them directly.
"""

import os
import sys
import time

import numpy as np
import pytest

from nvmag.analysis import (
    allan_deviation,
    compute_tmi,
    diurnal_correct,
    grid_tmi_map,
    sensitivity_at,
    white_noise_std,
)
from nvmag.calibration import (
    cal_table,
    evaluate_accuracy,
    fit_affine_calibration,
    inverse_of_imperfections,
    spin_calibration,
)
from nvmag.cli import main
from nvmag.inversion import invert_frame
from nvmag.io import read_timeseries
from nvmag.nv_physics import BiasFieldConfig, ImperfectionModel, NvConstants, apply_imperfections, forward_resonances
from nvmag.scenarios import Scenario, chamber_imperfections, coil_points, measure, ramp

RESULTS = []

# Knee of sigma^2(tau) = S^2/(2 tau) + (r tau)^2/2 for S = 0.4 nT/sqrt(Hz),
# r = 0.05 nT/s, found by scanning tau on a 1e-4 s grid before the build.
KNEE_ORACLE_S = 3.1748

# TMI anomaly 50 m above a vertical dipole of -62500 A m^2 in a -50000 nT
# vertical background: |Bz| = 2e-7 * 62500 / 50^3 * 1e9 = 100 nT, aligned.
SURVEY_PEAK_ORACLE_NT = 100.0


def record(number, name, ok, detail, elapsed, budget=None):
    within = budget is None or elapsed < budget
    status = "PASS" if ok and within else "FAIL"
    timing = f"{elapsed:.1f} s" + (f" (budget {budget:g} s)" if budget is not None else "")
    RESULTS.append(f"[{status}] {number:>2}. {name}: {detail}; {timing}")
    return ok and within


def cli(argv):
    return main([str(a) for a in argv])


def test_01_roundtrip_exactness():
    start = time.perf_counter()
    const, bias = NvConstants(), BiasFieldConfig()
    rng = np.random.default_rng(2024)
    d = rng.normal(size=(1000, 3))
    fields = d / np.linalg.norm(d, axis=1, keepdims=True) * 60000.0 * rng.uniform(0, 1, (1000, 1)) ** (1 / 3)
    temps = const.T0 + rng.uniform(-20.0, 20.0, 1000)
    err_b = err_t = 0.0
    for b, temp in zip(fields, temps):
        reading = invert_frame(forward_resonances(bias.vector(temp) + b, temp), const, bias=bias)
        err_b = max(err_b, np.abs(reading.field.as_array() - b).max())
        err_t = max(err_t, abs(reading.diamond_temp - temp))
    ok = err_b <= 1e-6 and err_t <= 1e-6
    assert record(1, "round-trip exactness", ok, f"max |dB| {err_b:.2e} nT, max |dT| {err_t:.2e} K", time.perf_counter() - start, 5)


def test_02_sensitivity_reproduction():
    start = time.perf_counter()
    asd = np.array([346.0, 434.0, 401.0])
    rate = 10.0
    estimates = []
    for seed in range(20):
        sc = Scenario("chamber", {"duration": 120.0}, sample_rate=rate, seed=seed)
        truth, _ = sc.truth()
        measured = measure(truth, chamber_imperfections(asd, rate), seed)
        estimates.append(sensitivity_at(allan_deviation(measured.field, rate, taus=[1.0]), 1.0))
    mean = np.mean(estimates, axis=0)
    rel = np.abs(mean / asd - 1)
    ok = bool(np.all(rel <= 0.15))
    detail = "recovered " + "/".join(f"{v:.0f}" for v in mean) + f" pT/sqrt(Hz), worst {100 * rel.max():.1f}% off"
    assert record(2, "sensitivity reproduction", ok, detail, time.perf_counter() - start, 30)


def test_03_allan_slope_and_knee():
    start = time.perf_counter()
    rate = 10.0
    rng = np.random.default_rng(3)
    sigma = white_noise_std(400.0, rate)
    white = rng.normal(0.0, sigma, (36000, 3))
    slope = allan_deviation(white, rate).slope(0.2, 5.0)
    slope = np.atleast_1d(slope)
    t = np.arange(36000) / rate
    drifting = rng.normal(0.0, sigma, t.size) + 0.05 * t
    knee = float(np.atleast_1d(allan_deviation(drifting, rate).knee())[0])
    ok_slope = bool(np.all((slope >= -0.55) & (slope <= -0.45)))
    ok_knee = KNEE_ORACLE_S / 2 <= knee <= KNEE_ORACLE_S * 2
    detail = "slopes " + "/".join(f"{s:.3f}" for s in slope) + f", knee {knee:.2f} s vs oracle {KNEE_ORACLE_S} s"
    assert record(3, "Allan slope and knee", ok_slope and ok_knee, detail, time.perf_counter() - start)


def test_04_accuracy_protocol():
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    sensor = ImperfectionModel.table1_before(noise_std=2.0)
    train, test = coil_points(379, seed=41), coil_points(253, seed=42)
    model = fit_affine_calibration(apply_imperfections(train, sensor, rng=rng), train)
    report = evaluate_accuracy(model, apply_imperfections(test, sensor, rng=rng), test)
    table, target = cal_table(model), cal_table(inverse_of_imperfections(sensor))
    d_off = np.abs(table.offset - target.offset).max()
    d_scale = np.abs(table.scale - target.scale).max()
    ok = bool(np.all(report.std < 5.0)) and d_off <= 5.0 and d_scale <= 2e-4
    detail = "test std " + "/".join(f"{s:.2f}" for s in report.std) + f" nT, offset err {d_off:.2f} nT, scale err {d_scale:.1e}"
    assert record(4, "accuracy protocol", ok, detail, time.perf_counter() - start, 10)


def test_05_ramp_nonlinearity():
    start = time.perf_counter()
    rng = np.random.default_rng(5)
    train = coil_points(379, seed=51)
    model = fit_affine_calibration(apply_imperfections(train, ImperfectionModel.table1_before(noise_std=2.0), rng=rng), train)
    truth = ramp(-50000.0, 50000.0, 201)
    measured = apply_imperfections(truth, ImperfectionModel.table1_before(noise_std=5.0), rng=rng)
    std = evaluate_accuracy(model, measured, truth).std
    ok = bool(np.all(std <= 7.5))
    assert record(5, "ramp nonlinearity", ok, "residual std " + "/".join(f"{s:.2f}" for s in std) + " nT", time.perf_counter() - start, 5)


def test_06_spin_calibration():
    start = time.perf_counter()
    rate = 10.0
    sc = Scenario("spin", sample_rate=rate, seed=6)
    truth, _ = sc.truth()
    assert compute_tmi(truth.field[0]) == pytest.approx(50000.0)
    sensor = chamber_imperfections(400.0, rate, ImperfectionModel.table1_before())
    measured = measure(truth, sensor, sc.seed).field
    raw_spread = np.ptp(compute_tmi(measured))
    model = spin_calibration(measured, reference_tmi=50000.0)
    tmi = compute_tmi(model.correct(measured))
    std, worst = tmi.std(), np.abs(tmi - tmi.mean()).max()
    ok = raw_spread >= 500.0 and std < 20.0 and worst < 60.0
    detail = f"raw spread {raw_spread:.0f} nT, corrected std {std:.2f} nT, max dev {worst:.2f} nT"
    assert record(6, "spin calibration", ok, detail, time.perf_counter() - start, 10)


def test_07_diurnal_correction():
    start = time.perf_counter()
    rate = 1.0
    sc = Scenario("storm", {"amplitude": 300.0}, sample_rate=rate, seed=7)
    truth, base_truth = sc.truth()
    sensor = chamber_imperfections(400.0, rate)
    floor = white_noise_std(400.0, rate)
    survey = measure(truth, sensor, 70)
    base = measure(base_truth, sensor, 71)
    raw = survey.field.std(axis=0)
    corrected = diurnal_correct(survey, base).field.std(axis=0)
    ok = bool(np.all(corrected <= 1.5 * floor))
    detail = f"raw std {raw.max():.1f} nT, corrected " + "/".join(f"{s:.3f}" for s in corrected) + f" nT vs floor {floor:.3f} nT"
    assert record(7, "diurnal correction", ok, detail, time.perf_counter() - start, 5)


def test_08_dipole_survey_map():
    start = time.perf_counter()
    sc = Scenario("survey", {"depth": 20.0, "lines": 10, "spacing": 10.0, "altitude": 30.0}, seed=8)
    truth, _ = sc.truth()
    measured = measure(truth, chamber_imperfections(400.0, sc.sample_rate), sc.seed)
    grid = grid_tmi_map(measured, spacing=5.0)
    j, i = grid.argmax_cell()
    xs, ys = grid.spec.centers()
    cell = grid.spec.spacing
    off = max(abs(xs[i] - 0.0), abs(ys[j] - 0.0))
    background = compute_tmi(np.array(sc.dipole().background))
    peak = np.nanmax(grid.values) - background
    rel = abs(peak / SURVEY_PEAK_ORACLE_NT - 1)
    ok = off <= cell and rel <= 0.05
    detail = f"peak at ({xs[i]:g}, {ys[j]:g}) m, cell {cell:g} m, anomaly {peak:.2f} nT vs {SURVEY_PEAK_ORACLE_NT:g} nT ({100 * rel:.1f}%)"
    assert record(8, "dipole survey map", ok, detail, time.perf_counter() - start, 10)


def test_09_end_to_end_pipeline(tmp_path, capsys):
    start = time.perf_counter()
    sim = tmp_path / "sim"
    assert cli(["sim", "chamber", "--mode", "spectra", "--duration", "120", "--rate", "10", "--seed", "9", "--out", sim]) == 0
    t_pipe = time.perf_counter()
    assert cli(["pipeline", sim / "spectra.csv", "-o", tmp_path / "readings.csv"]) == 0
    pipe_time = time.perf_counter() - t_pipe
    summary = capsys.readouterr().out.strip().splitlines()[-1]
    readings = read_timeseries(tmp_path / "readings.csv")
    measured = read_timeseries(sim / "measured.csv")
    n_valid = readings.t.size
    lossless = "0 invalid, 0 re-detections" in summary and n_valid == measured.t.size == 1200
    err = np.abs(readings.field - measured.field).max() if n_valid == measured.t.size else np.inf
    ok = lossless and err < 0.1
    detail = f"{n_valid} frames, max |dB| {err:.2e} nT, {summary}, pipeline {pipe_time:.1f} s"
    assert record(9, "end-to-end spectra pipeline", ok, detail, pipe_time, 60)


def _commands(d):
    return [
        ["sim", "coil_points", "--n", "379", "--imperfections", "table1", "--seed", "1", "--out", d / "coil"],
        ["sim", "ramp", "--imperfections", "table1", "--out", d / "ramp"],
        ["sim", "chamber", "--duration", "20", "--mode", "spectra", "--seed", "2", "--param", "temp_drift=0.5", "--out", d / "chamber"],
        ["sim", "spin", "--imperfections", "table1", "--seed", "3", "--out", d / "spin"],
        ["sim", "storm", "--rate", "0.1", "--seed", "4", "--out", d / "storm"],
        ["sim", "balloon", "--rate", "2", "--seed", "5", "--out", d / "balloon"],
        ["sim", "survey", "--seed", "6", "--out", d / "survey"],
        ["pipeline", d / "chamber" / "spectra.csv", "-o", d / "readings.csv"],
        ["cal", "fit", "--measured", d / "coil" / "measured.csv", "--reference", d / "coil" / "truth.csv", "-o", d / "affine.txt"],
        ["cal", "apply", "--model", d / "affine.txt", "--input", d / "ramp" / "measured.csv", "-o", d / "ramp_cal.csv"],
        ["cal", "eval", "--model", d / "affine.txt", "--measured", d / "ramp" / "measured.csv", "--reference", d / "ramp" / "truth.csv"],
        ["cal", "spin", "--measured", d / "spin" / "measured.csv", "--reference-tmi", "50000", "-o", d / "spin.txt"],
        ["cal", "temp", "--measured", d / "chamber" / "measured.csv", "-o", d / "temp.txt"],
        ["allan", d / "chamber" / "measured.csv", "-o", d / "allan.csv"],
        ["survey", d / "survey" / "measured.csv", "-o", d / "grid.txt"],
        ["diurnal", "--survey", d / "storm" / "measured.csv", "--base", d / "storm" / "base.csv", "-o", d / "diurnal.csv"],
    ]


def test_10_determinism(tmp_path, capsys, monkeypatch):
    start = time.perf_counter()
    monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
    runs = []
    for name in ("first", "second"):
        d = tmp_path / name
        d.mkdir()
        stdout = []
        for argv in _commands(d):
            code = cli(argv)
            stdout.append(capsys.readouterr().out.replace(str(d), "<dir>"))
            assert code == 0, argv
        files = {str(p.relative_to(d)): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}
        runs.append((files, stdout))
    (a, out_a), (b, out_b) = runs
    differing = sorted(k for k in a if a[k] != b.get(k)) + sorted(set(b) - set(a))
    ok = not differing and out_a == out_b
    detail = f"{len(_commands(tmp_path))} commands, {len(a)} files compared, " + (f"differing: {differing}" if differing else "all byte-identical")
    assert record(10, "determinism", ok, detail, time.perf_counter() - start)


if __name__ == "__main__":
    sys.exit(pytest.main([os.path.abspath(__file__), "-q", "-p", "no:cacheprovider"]))
