"""Removing a magnetic storm with a base station.

Survey and base sensors see the same 300 nT storm on top of different
static fields. Subtracting the base variation leaves the survey at its own
static value plus the noise of both sensors.
"""

import numpy as np

from nvmag.analysis import diurnal_correct, white_noise_std
from nvmag.scenarios import Scenario, chamber_imperfections, measure

rate = 1.0
sc = Scenario("storm", {"amplitude": 300.0}, sample_rate=rate, seed=5)
truth, base_truth = sc.truth()
sensor = chamber_imperfections(400.0, rate)
survey = measure(truth, sensor, 1)
base = measure(base_truth, sensor, 2)

print(f"12 h storm, {survey.t.size} samples per station")
print("survey std before correction (nT):", np.round(survey.field.std(axis=0), 1))
corrected = diurnal_correct(survey, base)
print("survey std after correction  (nT):", np.round(corrected.field.std(axis=0), 3))
print(f"single-sensor noise floor {white_noise_std(400.0, rate):.3f} nT; two sensors add in quadrature")
print("corrected mean (nT):", np.round(corrected.field.mean(axis=0), 1))
