"""Seeded synthetic campaigns: reference-coil point sets, ramps, zero-field
chamber runs, spin rotations, magnetic storms, balloon flights and drone
surveys over a buried dipole.

Every generator is a deterministic function of its parameters and seed.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .analysis import white_noise_std
from .config import RunConfig
from .errors import ValidationError
from .geodesy import LocalFrame
from .io import SpectrumWriter, fmt, write_keyvalue, write_timeseries
from .nv_physics import ImperfectionModel, apply_imperfections, forward_resonances, lorentzian
from .types import OdmrSpectrum, TimeSeries

MU0_OVER_4PI = 1e-7  # T m / A
KINDS = ("coil_points", "ramp", "chamber", "spin", "storm", "balloon", "survey")


def _rng(seed):
    return np.random.default_rng(seed)


def coil_points(n, max_amplitude=60000.0, seed=0):
    """``n`` reference fields with isotropic directions and uniform amplitudes."""
    if n < 1:
        raise ValidationError("n must be at least 1")
    rng = _rng(seed)
    d = rng.normal(size=(n, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return d * rng.uniform(0.0, max_amplitude, size=(n, 1))


def ramp(start, stop, steps, axis=0):
    if steps < 2:
        raise ValidationError("a ramp needs at least 2 steps")
    out = np.zeros((steps, 3))
    out[:, axis] = np.linspace(start, stop, steps)
    return out


def _time_axis(duration, rate):
    if rate <= 0:
        raise ValidationError("sample rate must be positive")
    n = int(round(duration * rate))
    return np.arange(n) / rate


def rotation_about(axis, angle):
    """Rotation matrices (Rodrigues) for an array of angles."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    a = np.asarray(angle, dtype=float)[..., None, None]
    return np.eye(3) + np.sin(a) * kx + (1 - np.cos(a)) * (kx @ kx)


def spin_trajectory(ambient, period, duration, rate, axis=(0.0, 0.0, 1.0), t0=0.0):
    """Body-frame field while the body spins uniformly about ``axis``.

    The body rotates by ``+2 pi t / period``, so the fixed ambient field
    appears rotated by the opposite angle.
    """
    if period <= 0:
        raise ValidationError("spin period must be positive")
    t = t0 + _time_axis(duration, rate)
    rot = rotation_about(axis, -2.0 * np.pi * (t - t0) / period)
    return t, rot @ np.asarray(ambient, dtype=float)


SPIN_AXES = ((0, 0, 1), (1, 0, 0), (0, 1, 0), (1, 1, 1), (1, -1, -1), (-1, 1, -1), (-1, -1, 1))


def spin_calibration_run(ambient, period=10.0, rate=10.0, axes=SPIN_AXES):
    """One full turn about each axis in turn: covers the sphere for spin calibration."""
    ts, fs = [], []
    for i, axis in enumerate(axes):
        t, b = spin_trajectory(ambient, period, period, rate, axis, t0=i * period)
        ts.append(t)
        fs.append(b)
    return np.concatenate(ts), np.vstack(fs)


def storm_profile(base, amplitude, duration, rate, seed=0, n_min=5, n_max=20, period_range=(600.0, 21600.0)):
    """Base field plus a smooth random perturbation, distinct on each axis.

    Each axis is a sum of 5-20 random-phase sinusoids with log-uniform
    periods; the sum is rescaled so its peak absolute deviation equals
    ``amplitude``.
    """
    if amplitude < 0:
        raise ValidationError("storm amplitude must be non-negative")
    t = _time_axis(duration, rate)
    rng = _rng(seed)
    out = np.tile(np.asarray(base, dtype=float), (t.size, 1))
    for k in range(3):
        m = int(rng.integers(n_min, n_max + 1))
        periods = np.exp(rng.uniform(np.log(period_range[0]), np.log(period_range[1]), m))
        phases = rng.uniform(0.0, 2 * np.pi, m)
        weights = rng.uniform(0.2, 1.0, m)
        wave = np.sin(2 * np.pi * t[:, None] / periods + phases) @ weights
        peak = np.abs(wave).max() if t.size else 0.0
        if peak > 0:
            out[:, k] += amplitude * wave / peak
    return t, out


def balloon_flight(ambient, spin_period, spin_stop_time, duration, rate, axis=(0.0, 0.0, 1.0)):
    """Spinning until ``spin_stop_time``, then frozen at the last attitude."""
    if not 0 < spin_stop_time <= duration:
        raise ValidationError("need 0 < spin_stop_time <= duration")
    if spin_period <= 0:
        raise ValidationError("spin period must be positive")
    t = _time_axis(duration, rate)
    angle = -2.0 * np.pi * np.minimum(t, spin_stop_time) / spin_period
    return t, rotation_about(axis, angle) @ np.asarray(ambient, dtype=float)


@dataclass(frozen=True)
class DipoleSource:
    """Point dipole (A m^2) at a local ENU position (m, depth is negative z)."""

    moment: tuple = (0.0, 0.0, -62500.0)
    position: tuple = (0.0, 0.0, -20.0)
    background: tuple = (0.0, 0.0, -50000.0)

    def __post_init__(self):
        if not np.linalg.norm(self.moment) > 0:
            raise ValidationError("dipole moment must be nonzero")


def dipole_field(source, positions):
    """Anomalous field (nT) of the dipole at ``positions`` (n, 3) in metres."""
    r = np.atleast_2d(np.asarray(positions, dtype=float)) - np.asarray(source.position, dtype=float)
    dist = np.linalg.norm(r, axis=1, keepdims=True)
    rhat = r / dist
    m = np.asarray(source.moment, dtype=float)
    b_tesla = MU0_OVER_4PI * (3.0 * (rhat @ m)[:, None] * rhat - m) / dist**3
    return b_tesla * 1e9


@dataclass
class SurveyData:
    t: np.ndarray
    positions: np.ndarray
    field: np.ndarray
    geo: np.ndarray


def flight_lines(lines, spacing, altitude, speed, rate, line_length, center=(0.0, 0.0)):
    """Boustrophedon east-west lines around ``center``, one sample per tick."""
    if lines < 1:
        raise ValidationError("need at least one flight line")
    step = speed / rate
    n_per = int(round(line_length / step)) + 1
    along = -0.5 * line_length + step * np.arange(n_per)
    pos = []
    for j in range(lines):
        # line lines//2 passes directly over the centre
        north = center[1] + (j - lines // 2) * spacing
        east = center[0] + (along if j % 2 == 0 else along[::-1])
        pos.append(np.column_stack([east, np.full(n_per, north), np.full(n_per, altitude)]))
    pos = np.vstack(pos)
    return np.arange(len(pos)) / rate, pos


def dipole_survey(source, lines=10, spacing=10.0, altitude=30.0, speed=5.0, rate=10.0, line_length=200.0, frame=None):
    """Geographic-frame field along flight lines over a dipole."""
    frame = frame or LocalFrame()
    center = (source.position[0], source.position[1])
    t, pos = flight_lines(lines, spacing, altitude, speed, rate, line_length, center)
    b = np.asarray(source.background, dtype=float) + dipole_field(source, pos)
    lat, lon = frame.to_geo(pos[:, 0], pos[:, 1])
    return SurveyData(t, pos, b, np.column_stack([lat, lon, pos[:, 2]]))


DEFAULTS = {
    "coil_points": {"n": 253, "max_amplitude": 60000.0},
    "ramp": {"start": -50000.0, "stop": 50000.0, "steps": 101, "axis": 0},
    "chamber": {"duration": 120.0, "field_drift": 0.0, "temp_drift": 0.0},
    "spin": {"ambient_x": 0.0, "ambient_y": 30000.0, "ambient_z": 40000.0, "period": 10.0},
    "storm": {
        "duration": 43200.0,
        "amplitude": 300.0,
        "survey_x": 17000.0,
        "survey_y": 2000.0,
        "survey_z": 50000.0,
        "base_x": 16800.0,
        "base_y": 2100.0,
        "base_z": 50200.0,
        "storm_seed": 1,
    },
    "balloon": {
        "ambient_x": 18000.0,
        "ambient_y": 0.0,
        "ambient_z": 48000.0,
        "spin_period": 5.0,
        "spin_stop_time": 600.0,
        "duration": 900.0,
    },
    "survey": {
        "lines": 10,
        "spacing": 10.0,
        "altitude": 30.0,
        "speed": 5.0,
        "line_length": 200.0,
        "depth": 20.0,
        "moment_x": 0.0,
        "moment_y": 0.0,
        "moment_z": -62500.0,
        "background_x": 0.0,
        "background_y": 0.0,
        "background_z": -50000.0,
        "storm_amplitude": 0.0,
        "storm_seed": 1,
    },
}


@dataclass(frozen=True)
class Scenario:
    """A campaign kind, its parameters and the seed driving all randomness."""

    kind: str
    params: dict = field(default_factory=dict)
    sample_rate: float = 10.0
    seed: int = 0
    temperature: float = 298.15

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValidationError(f"unknown scenario {self.kind!r}; valid: {', '.join(KINDS)}")
        if not self.sample_rate > 0:
            raise ValidationError("sample_rate must be positive")
        unknown = set(self.params) - set(DEFAULTS[self.kind])
        if unknown:
            raise ValidationError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        merged = dict(DEFAULTS[self.kind])
        merged.update(self.params)
        object.__setattr__(self, "params", merged)

    def truth(self):
        """Truth series (and, for storms, the base-station truth)."""
        p, rate, temp = self.params, self.sample_rate, self.temperature
        base = None
        geo = None
        frame = "sensor"
        if self.kind == "coil_points":
            b = coil_points(int(p["n"]), p["max_amplitude"], self.seed)
            t = np.arange(len(b), dtype=float)
        elif self.kind == "ramp":
            b = ramp(p["start"], p["stop"], int(p["steps"]), int(p["axis"]))
            t = np.arange(len(b), dtype=float)
        elif self.kind == "chamber":
            t = _time_axis(p["duration"], rate)
            b = np.zeros((t.size, 3)) + p["field_drift"] * t[:, None]
            temp = temp + p["temp_drift"] * t
        elif self.kind == "spin":
            ambient = (p["ambient_x"], p["ambient_y"], p["ambient_z"])
            t, b = spin_calibration_run(ambient, p["period"], rate)
        elif self.kind == "storm":
            t, b = storm_profile((p["survey_x"], p["survey_y"], p["survey_z"]), p["amplitude"], p["duration"], rate, int(p["storm_seed"]))
            _, bb = storm_profile((p["base_x"], p["base_y"], p["base_z"]), p["amplitude"], p["duration"], rate, int(p["storm_seed"]))
            base = TimeSeries(t, bb, temp, frame="geographic")
            frame = "geographic"
        elif self.kind == "balloon":
            ambient = (p["ambient_x"], p["ambient_y"], p["ambient_z"])
            t, b = balloon_flight(ambient, p["spin_period"], p["spin_stop_time"], p["duration"], rate)
        else:
            src = self.dipole()
            data = dipole_survey(src, int(p["lines"]), p["spacing"], p["altitude"], p["speed"], rate, p["line_length"])
            t, b, geo = data.t, data.field, data.geo
            frame = "geographic"
            if p["storm_amplitude"] > 0:
                _, s = storm_profile((0, 0, 0), p["storm_amplitude"], t[-1] + 1.0 / rate, rate, int(p["storm_seed"]))
                b = b + s[: t.size]
        return TimeSeries(t, b, temp, geo, frame), base

    def dipole(self):
        p = self.params
        return DipoleSource(
            (p["moment_x"], p["moment_y"], p["moment_z"]),
            (0.0, 0.0, -p["depth"]),
            (p["background_x"], p["background_y"], p["background_z"]),
        )

    def manifest_items(self):
        items = [("kind", self.kind), ("sample_rate", fmt(self.sample_rate)), ("seed", str(self.seed)), ("temperature_K", fmt(self.temperature))]
        for key in sorted(self.params):
            value = self.params[key]
            items.append((f"param.{key}", fmt(value) if isinstance(value, float) else str(value)))
        return items


def measure(truth, imperfections, seed):
    """Sensor readings of a truth series through ``imperfections``."""
    rng = np.random.default_rng(seed)
    measured = apply_imperfections(truth.field, imperfections, truth.temp, rng)
    return truth.with_field(measured)


def chamber_imperfections(asd_pT, rate, base=None):
    """Imperfection model with white noise of the given per-axis ASD."""
    base = base or ImperfectionModel()
    noise = np.broadcast_to(white_noise_std(asd_pT, rate), (3,))
    return ImperfectionModel(base.scale, base.misalignment, base.offset, base.offset_temp_slope, tuple(noise), base.reference_temperature)


def spectra_for(series, config=None, seed=0):
    """Yield one ODMR spectrum per reading of a sensor-frame series."""
    config = config or RunConfig()
    grid = config.grid()
    line = config.line
    rng = np.random.default_rng([seed, 0x5BEC])
    for i, (t, b, temp) in enumerate(zip(series.t, series.field, series.temp)):
        total = config.bias.vector(temp) + b
        peaks = forward_resonances(total, temp, config.geometry, config.constants, config.validity_nT)
        contrast = np.full(grid.shape, line.baseline)
        for c in peaks.centers:
            contrast -= line.contrast * lorentzian(grid, c, line.linewidth_fwhm)
        if config.spectrum_noise > 0:
            contrast += rng.normal(0.0, config.spectrum_noise, grid.size)
        yield OdmrSpectrum(grid, contrast, i, float(t))


def generate_dataset(scenario, imperfections=None, mode="fields", out_dir=".", config=None):
    """Write truth, measured (and spectra) files plus ``manifest.txt``.

    Returns a dict of the written paths. Spectra mode encodes the measured
    series: feeding the spectra through the pipeline recovers it.
    """
    if mode not in ("fields", "spectra"):
        raise ValidationError(f"mode must be 'fields' or 'spectra', got {mode!r}")
    imperfections = imperfections or ImperfectionModel()
    config = config or RunConfig()
    os.makedirs(out_dir, exist_ok=True)
    truth, base = scenario.truth()
    measured = measure(truth, imperfections, scenario.seed)
    paths = {"truth": os.path.join(out_dir, "truth.csv"), "measured": os.path.join(out_dir, "measured.csv")}
    write_timeseries(paths["truth"], truth)
    write_timeseries(paths["measured"], measured)
    if base is not None:
        paths["base"] = os.path.join(out_dir, "base.csv")
        write_timeseries(paths["base"], measure(base, imperfections, scenario.seed + 1))
    if mode == "spectra":
        paths["spectra"] = os.path.join(out_dir, "spectra.csv")
        with SpectrumWriter(paths["spectra"]) as writer:
            for spectrum in spectra_for(measured, config, scenario.seed):
                writer.write(spectrum)

    items = [("mode", mode)] + scenario.manifest_items()
    for name in ("scale", "misalignment", "offset", "offset_temp_slope", "noise_std"):
        items.append((f"imperfection.{name}", ",".join(fmt(v) for v in getattr(imperfections, name))))
    items.append(("imperfection.reference_temperature", fmt(imperfections.reference_temperature)))
    for key, value in config.items():
        items.append((f"config.{key}", fmt(value) if isinstance(value, float) else str(value)))
    items.append(("files", ",".join(os.path.basename(p) for p in paths.values())))
    paths["manifest"] = os.path.join(out_dir, "manifest.txt")
    write_keyvalue(paths["manifest"], items)
    return paths


__all__ = [
    "Scenario",
    "DipoleSource",
    "SurveyData",
    "coil_points",
    "ramp",
    "spin_trajectory",
    "spin_calibration_run",
    "storm_profile",
    "balloon_flight",
    "dipole_field",
    "dipole_survey",
    "flight_lines",
    "measure",
    "chamber_imperfections",
    "spectra_for",
    "generate_dataset",
]
