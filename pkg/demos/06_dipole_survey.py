"""A drone survey over a buried dipole.

Ten flight lines 10 m apart at 30 m altitude over a dipole 20 m deep.
The readings are gridded to a TMI map whose maximum sits above the source;
its amplitude matches the on-axis dipole formula.
"""

import numpy as np

from nvmag.analysis import compute_tmi, grid_tmi_map
from nvmag.scenarios import Scenario, chamber_imperfections, dipole_field, measure

sc = Scenario("survey", seed=4)
truth, _ = sc.truth()
readings = measure(truth, chamber_imperfections(400.0, sc.sample_rate), sc.seed)
print(f"{readings.t.size} readings along {int(sc.params['lines'])} lines")

grid = grid_tmi_map(readings, spacing=5.0)
j, i = grid.argmax_cell()
xs, ys = grid.spec.centers()
source = sc.dipole()
background = compute_tmi(np.array(source.background))
peak = np.nanmax(grid.values) - background

above = dipole_field(source, [[0.0, 0.0, sc.params["altitude"]]])[0]
analytic = compute_tmi(np.array(source.background) + above) - background
print(f"map maximum at east {xs[i]:g} m, north {ys[j]:g} m")
print(f"peak anomaly {peak:.2f} nT, on-axis formula {analytic:.2f} nT")

# Coarse text rendering of the anomaly map.
shades = " .:-=+*#%@"
anomaly = grid.values - background
top = np.nanmax(anomaly)
for row in anomaly[::-2]:
    print("".join(" " if np.isnan(v) else shades[int(np.clip(v / top, 0, 0.999) * len(shades))] for v in row[::2]))
