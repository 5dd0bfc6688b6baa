import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nvmag.calibration import (
    CalibrationModel,
    CalTable,
    angular_coverage,
    apply_calibration,
    cal_table,
    evaluate_accuracy,
    fit_affine_calibration,
    fit_temperature_model,
    from_table,
    inverse_of_imperfections,
    spin_calibration,
)
from nvmag.errors import CoverageError, IllPosedError, ValidationError
from nvmag.nv_physics import ImperfectionModel, apply_imperfections
from nvmag.scenarios import coil_points, spin_calibration_run
from nvmag.types import FieldVector, MagReading, TimeSeries

BEFORE = ImperfectionModel.table1_before()


def sphere(n, radius, seed):
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(n, 3))
    return radius * d / np.linalg.norm(d, axis=1, keepdims=True)


def test_model_invariants():
    with pytest.raises(ValidationError):
        CalibrationModel(0.1 * np.eye(3))
    with pytest.raises(ValidationError):
        CalibrationModel(np.eye(3), [np.nan, 0, 0])
    with pytest.raises(ValidationError):
        CalibrationModel(np.eye(3), temp_coeffs=[1, 2, 3])


def test_affine_identity_data():
    b = coil_points(50, seed=1)
    model = fit_affine_calibration(b, b)
    np.testing.assert_allclose(model.matrix, np.eye(3), atol=1e-9)
    np.testing.assert_allclose(model.offset, 0.0, atol=1e-9)


def test_affine_accepts_pairs():
    b = coil_points(20, seed=2)
    pairs = [(FieldVector.from_array(x), FieldVector.from_array(x)) for x in b]
    np.testing.assert_allclose(fit_affine_calibration(pairs).matrix, np.eye(3), atol=1e-9)


def test_affine_exact_on_noiseless_affine_data():
    truth = coil_points(100, seed=3)
    measured = apply_imperfections(truth, BEFORE)
    model = fit_affine_calibration(measured, truth)
    exact = inverse_of_imperfections(BEFORE)
    np.testing.assert_allclose(model.matrix, exact.matrix, atol=1e-9)
    np.testing.assert_allclose(model.offset, exact.offset, atol=1e-6)
    assert model.fit_report["max_abs_error"] < 1e-9 * 60000


def test_affine_too_few_or_coplanar():
    b = coil_points(11, seed=4)
    with pytest.raises(IllPosedError):
        fit_affine_calibration(b, b)
    flat = coil_points(40, seed=5)
    flat[:, 2] = 0.0
    with pytest.raises(IllPosedError):
        fit_affine_calibration(flat, flat)


def test_affine_table1_protocol():
    truth = coil_points(379 + 253, seed=10)
    rng = np.random.default_rng(11)
    measured = apply_imperfections(truth, ImperfectionModel.table1_before(noise_std=2.0), rng=rng)
    model = fit_affine_calibration(measured[:379], truth[:379])
    table = cal_table(model)
    target = cal_table(inverse_of_imperfections(BEFORE))
    assert np.all(np.abs(table.scale - target.scale) < 2e-4)
    assert np.all(np.abs(table.offset - target.offset) < 5.0)
    report = evaluate_accuracy(model, measured[379:], truth[379:])
    assert np.all(report.std < 5.0)
    np.testing.assert_allclose(model.fit_report["residual_std"], 2.0, rtol=0.15)


def test_affine_with_temperature_term():
    truth = coil_points(200, seed=12)
    temps = np.linspace(290, 310, 200)
    model_in = ImperfectionModel(offset=(10.0, 0.0, -5.0), offset_temp_slope=(2.0, -1.0, 0.5))
    measured = apply_imperfections(truth, model_in, temperature=temps)
    model = fit_affine_calibration(measured, truth, temps)
    np.testing.assert_allclose(model.correct(measured, temps), truth, atol=1e-6)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_affine_never_worse_on_training(seed):
    truth = coil_points(40, seed=seed)
    rng = np.random.default_rng(seed)
    measured = truth + rng.normal(0, 5.0, truth.shape) + rng.normal(0, 50.0, 3)
    model = fit_affine_calibration(measured, truth)
    before = (measured - truth).std(axis=0, ddof=1)
    after = (model.correct(measured) - truth).std(axis=0, ddof=1)
    assert np.all(after <= before + 1e-9)


def test_apply_identity_unchanged():
    reading = MagReading(1.0, FieldVector(1.0, 2.0, 3.0), 300.0, 0.1, np.ones(3), {"k": 1})
    out = apply_calibration(CalibrationModel(), reading)
    assert out.field == reading.field
    assert out.timestamp == 1.0 and out.diamond_temp == 300.0 and out.aux == {"k": 1}
    np.testing.assert_array_equal(out.field_sigma, reading.field_sigma)


def test_apply_exact_inverse():
    truth = coil_points(100, seed=6)
    model_in = ImperfectionModel.table1_before(offset_temp_slope=(1.0, -2.0, 3.0))
    temps = np.linspace(290, 310, 100)
    measured = apply_imperfections(truth, model_in, temperature=temps)
    series = TimeSeries(np.arange(100.0), measured, temps)
    out = apply_calibration(inverse_of_imperfections(model_in), series)
    np.testing.assert_allclose(out.field, truth, atol=1e-9)


def test_apply_offset_only():
    model = CalibrationModel(np.eye(3), (0.0, 0.0, 2244.0))
    reading = MagReading(0.0, FieldVector(0.0, 0.0, -2244.0), 298.15)
    np.testing.assert_allclose(apply_calibration(model, reading).field.as_array(), 0.0)


def test_apply_transforms_sigma():
    model = CalibrationModel(np.diag([2.0, 1.0, 1.0]))
    reading = MagReading(0.0, FieldVector(1.0, 1.0, 1.0), 298.15, field_sigma=[1.0, 2.0, 3.0])
    np.testing.assert_allclose(apply_calibration(model, reading).field_sigma, [2.0, 2.0, 3.0])


def test_cal_table_identity():
    table = cal_table(CalibrationModel())
    np.testing.assert_allclose(table.scale, 1.0)
    np.testing.assert_allclose(table.orthogonality, 0.0, atol=1e-15)
    np.testing.assert_allclose(table.offset, 0.0)


def test_cal_table_after_values_roundtrip():
    table = CalTable((0.99998, 0.99997, 1.00014), (4e-5, -9e-5, -20e-5), (2.1, 4.2, 2.1))
    model = from_table(table)
    assert np.abs(model.matrix - np.eye(3)).max() < 3e-4
    back = cal_table(model)
    np.testing.assert_allclose(back.scale, table.scale, atol=1e-12)
    np.testing.assert_allclose(back.orthogonality, table.orthogonality, atol=1e-12)
    np.testing.assert_allclose(from_table(back).matrix, model.matrix, atol=1e-12)


def test_cal_table_of_before_model():
    table = cal_table(CalibrationModel(BEFORE.matrix, BEFORE.offset))
    np.testing.assert_allclose(table.scale, [1.00323, 1.00950, 1.00209], atol=1e-12)
    np.testing.assert_allclose(table.orthogonality, [860e-5, 336e-5, 115e-5], atol=1e-12)
    np.testing.assert_allclose(table.rotation, np.eye(3), atol=1e-12)


def test_cal_table_inverse_values():
    # hand oracle for the exact inverse of the "before" model
    table = cal_table(inverse_of_imperfections(BEFORE))
    np.testing.assert_allclose(table.offset, [-312.99, 87.88, 2240.27], atol=0.01)


def test_cal_table_roundtrip_1000_seeds():
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        m = np.eye(3) + rng.uniform(-0.02, 0.02, (3, 3))
        model = CalibrationModel(m, rng.uniform(-3000, 3000, 3))
        back = from_table(cal_table(model))
        np.testing.assert_allclose(back.matrix, model.matrix, rtol=0, atol=1e-12)
        np.testing.assert_allclose(back.offset, model.offset, rtol=0, atol=1e-12)


def test_cal_table_warns_far_from_identity():
    m = np.array([[1.0, 0, 0], [0.5, 1.0, 0], [0, 0, 1.0]])
    with pytest.warns(UserWarning):
        table = cal_table(CalibrationModel(m))
    np.testing.assert_allclose(from_table(table).matrix, m, atol=1e-12)


def _drift_series(slopes, span, seed, noise=1.0, known=(1000.0, -2000.0, 500.0)):
    rng = np.random.default_rng(seed)
    temps = np.linspace(300 - span / 2, 300 + span / 2, 400)
    field = np.asarray(known) + np.outer(temps - 300, slopes) + rng.normal(0, noise, (400, 3))
    return TimeSeries(np.arange(400.0), field, temps), FieldVector.from_array(known)


def test_temperature_fit_recovers_slope():
    series, known = _drift_series((10.0, 0.0, 0.0), 20.0, seed=1)
    fit = fit_temperature_model(series, known)
    assert fit.slope[0] == pytest.approx(10.0, abs=0.5)
    np.testing.assert_allclose(fit.slope[1:], 0.0, atol=0.5)
    assert np.all(fit.slope_se < 0.1)


def test_temperature_fit_zero_drift_within_ci():
    series, known = _drift_series((0.0, 0.0, 0.0), 20.0, seed=2)
    fit = fit_temperature_model(series, known)
    assert np.all(np.abs(fit.slope) < 4 * fit.slope_se)
    assert np.all(np.abs(fit.intercept) < 4 * fit.intercept_se)


def test_temperature_fit_span_too_small():
    series, known = _drift_series((1.0, 0.0, 0.0), 0.5, seed=3)
    with pytest.raises(IllPosedError):
        fit_temperature_model(series, known)


def test_temperature_fit_accepts_readings():
    series, known = _drift_series((3.0, 1.0, -2.0), 10.0, seed=4, noise=0.0)
    fit = fit_temperature_model(series.readings(), known)
    np.testing.assert_allclose(fit.slope, [3.0, 1.0, -2.0], atol=1e-9)


def test_temperature_correction_removes_drift():
    series, known = _drift_series((5.0, -3.0, 1.0), 20.0, seed=5, noise=0.0)
    model = fit_temperature_model(series, known).correction()
    np.testing.assert_allclose(model.correct(series.field, series.temp), np.tile(known.as_array(), (400, 1)), atol=1e-9)


def test_spin_perfect_sphere():
    model = spin_calibration(sphere(300, 50000.0, seed=1))
    np.testing.assert_allclose(model.matrix, np.eye(3), atol=1e-6)
    np.testing.assert_allclose(model.offset, 0.0, atol=1e-6 * 50000)


def test_spin_offset_recovery():
    x = sphere(200, 50000.0, seed=2) + np.array([1000.0, -500.0, 200.0])
    x += np.random.default_rng(3).normal(0, 5.0, x.shape)
    model = spin_calibration(x, reference_tmi=50000.0)
    corrected = np.linalg.norm(model.correct(x), axis=1)
    assert corrected.std() < 20.0
    # offset expressed in measured space: the fitted ellipsoid center
    center = -np.linalg.solve(model.matrix, model.offset)
    np.testing.assert_allclose(center, [1000.0, -500.0, 200.0], atol=10.0)


def test_spin_table1_before():
    x = apply_imperfections(sphere(500, 50000.0, seed=4), BEFORE)
    assert np.ptp(np.linalg.norm(x, axis=1)) > 500.0
    model = spin_calibration(x, reference_tmi=50000.0)
    assert np.linalg.norm(model.correct(x), axis=1).std() < 20.0


def test_spin_constant_magnitude_on_noisy_sphere():
    sigma = 3.0
    x = sphere(400, 50000.0, seed=5) + np.random.default_rng(6).normal(0, sigma, (400, 3))
    mags = np.linalg.norm(spin_calibration(x).correct(x), axis=1)
    assert np.ptp(mags) < 10 * sigma


def test_spin_permutation_invariant():
    x = apply_imperfections(sphere(300, 50000.0, seed=7), BEFORE)
    x += np.random.default_rng(8).normal(0, 2.0, x.shape)
    a = spin_calibration(x, reference_tmi=50000.0)
    b = spin_calibration(x[np.random.default_rng(9).permutation(300)], reference_tmi=50000.0)
    np.testing.assert_allclose(b.matrix, a.matrix, rtol=1e-6)
    np.testing.assert_allclose(b.offset, a.offset, rtol=1e-6, atol=1e-6 * 50000)


def test_spin_coverage_error():
    x = sphere(400, 50000.0, seed=10)
    x = x[x[:, 2] > 0]
    with pytest.raises(CoverageError) as err:
        spin_calibration(x)
    assert err.value.max_gap_deg >= 60.0


def test_spin_too_few_points():
    with pytest.raises(IllPosedError):
        spin_calibration(sphere(49, 50000.0, seed=11))


def test_spin_run_covers_sphere():
    _, b = spin_calibration_run((0.0, 30000.0, 40000.0))
    gap, covered = angular_coverage(b)
    assert gap < 60.0
    assert covered >= 2 * np.pi


def test_spin_offsets_only_mode():
    x = sphere(300, 50000.0, seed=12) + np.array([300.0, 0.0, -100.0])
    model = spin_calibration(x, offsets_only=True)
    np.testing.assert_array_equal(model.matrix, np.eye(3))
    np.testing.assert_allclose(model.offset, [-300.0, 0.0, 100.0], atol=1e-6)


def test_evaluate_perfect_model():
    b = coil_points(30, seed=13)
    report = evaluate_accuracy(CalibrationModel(), b, b)
    for stat in (report.mean, report.std, report.max_abs):
        np.testing.assert_array_equal(stat, 0.0)
    assert report.n_points == 30
    assert "axis" in report.format()


def test_ramp_through_calibrated_model():
    truth = coil_points(379, seed=14)
    rng = np.random.default_rng(15)
    model = fit_affine_calibration(apply_imperfections(truth, ImperfectionModel.table1_before(noise_std=2.0), rng=rng), truth)
    ramp = np.zeros((201, 3))
    ramp[:, 0] = np.linspace(-50000, 50000, 201)
    measured = apply_imperfections(ramp, ImperfectionModel.table1_before(noise_std=5.0), rng=rng)
    assert np.all(evaluate_accuracy(model, measured, ramp).std <= 7.5)


def test_no_warning_for_near_identity():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        cal_table(CalibrationModel(BEFORE.matrix))
