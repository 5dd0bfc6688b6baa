"""Coil-system calibration of scale, orthogonality and offset.

The uncalibrated unit is modelled with the scale, non-orthogonality and
offset values of the "before" table. 379 coil points train an affine
model; 253 other points test it. A ramp from -50 to +50 uT then checks
the calibrated response.
"""

import numpy as np

from nvmag.calibration import CalibrationModel, cal_table, evaluate_accuracy, fit_affine_calibration, inverse_of_imperfections
from nvmag.nv_physics import ImperfectionModel, apply_imperfections
from nvmag.scenarios import coil_points, ramp

rng = np.random.default_rng(7)
sensor = ImperfectionModel.table1_before(noise_std=2.0)

train, test = coil_points(379, seed=1), coil_points(253, seed=2)
model = fit_affine_calibration(apply_imperfections(train, sensor, rng=rng), train)

print("fitted correction:")
print(cal_table(model).format(model.fit_report["residual_std"]))
print("\nexact inverse of the injected distortion:")
print(cal_table(inverse_of_imperfections(sensor)).format())

before = evaluate_accuracy(CalibrationModel(), apply_imperfections(test, sensor, rng=rng), test)
after = evaluate_accuracy(model, apply_imperfections(test, sensor, rng=rng), test)
print("\ntest error std before (nT):", np.round(before.std, 1))
print("test error std after  (nT):", np.round(after.std, 2))

line = ramp(-50000.0, 50000.0, 201)
noisy = apply_imperfections(line, ImperfectionModel.table1_before(noise_std=5.0), rng=rng)
print("ramp residual std (nT):", np.round(evaluate_accuracy(model, noisy, line).std, 2))
