"""Plain-text file formats.

Time series CSV
    ``t_s,bx_nT,by_nT,bz_nT,temp_K`` with optional ``lat_deg,lon_deg,alt_m``.
Spectrum CSV
    ``frame,t_s,freq_Hz,contrast``, one row per sample, frames contiguous.
Calibration model, manifest
    ``key=value`` lines.

Floats are written with the shortest repr that round-trips, LF line endings,
no quoting, so files are byte-identical for identical inputs.
"""

from __future__ import annotations

import math
from collections.abc import Iterator
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .types import OdmrSpectrum, TimeSeries

TS_HEADER = ["t_s", "bx_nT", "by_nT", "bz_nT", "temp_K"]
GEO_HEADER = ["lat_deg", "lon_deg", "alt_m"]
SPECTRUM_HEADER = ["frame", "t_s", "freq_Hz", "contrast"]
ALLAN_HEADER = ["tau_s", "sx_nT", "sy_nT", "sz_nT"]


def fmt(x):
    """Shortest round-trip text for a float."""
    return repr(float(x))


def _open_write(path):
    return open(path, "w", encoding="utf-8", newline="\n")


def write_timeseries(path, ts):
    cols = [ts.t[:, None], ts.field, ts.temp[:, None]]
    header = list(TS_HEADER)
    if ts.geo is not None:
        cols.append(ts.geo)
        header += GEO_HEADER
    table = np.hstack(cols).tolist()
    with _open_write(path) as fh:
        fh.write(",".join(header) + "\n")
        fh.writelines(",".join(map(fmt, row)) + "\n" for row in table)


def read_timeseries(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        if header not in (TS_HEADER, TS_HEADER + GEO_HEADER):
            raise ValidationError(f"{path}: unexpected header {header}")
        rows = []
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            if len(parts) != len(header):
                raise ValidationError(f"{path}:{lineno}: expected {len(header)} columns")
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
    data = np.array(rows, dtype=float).reshape(-1, len(header))
    geo = data[:, 5:8] if len(header) == 8 else None
    return TimeSeries(data[:, 0], data[:, 1:4], data[:, 4], geo)


class SpectrumWriter:
    """Streaming writer for the spectrum CSV."""

    def __init__(self, path):
        self._fh = _open_write(path)
        self._fh.write(",".join(SPECTRUM_HEADER) + "\n")

    def write(self, spectrum):
        fid, t = str(int(spectrum.frame_id)), fmt(spectrum.timestamp)
        self._fh.writelines(
            f"{fid},{t},{fmt(f)},{fmt(c)}\n" for f, c in zip(spectrum.freqs.tolist(), spectrum.contrast.tolist())
        )

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


@dataclass
class SpectrumFrame:
    """One frame read from a spectrum file; ``error`` set when it is corrupt."""

    frame_id: int
    timestamp: float
    spectrum: OdmrSpectrum | None
    error: str | None = None


def _finish_frame(frame_id, t, freqs, vals, error):
    if error is None:
        try:
            arr_c = np.array(vals)
            if not np.all(np.isfinite(arr_c)) or not np.all(np.isfinite(freqs)):
                raise ValidationError("non-finite sample")
            return SpectrumFrame(frame_id, t, OdmrSpectrum(freqs, arr_c, frame_id, t))
        except ValidationError as exc:
            error = str(exc)
    return SpectrumFrame(frame_id, t, None, error)


def iter_spectra(path) -> Iterator[SpectrumFrame]:
    """Yield frames one at a time; a malformed frame is yielded with ``error``."""
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
        if not first.strip():
            return  # an empty file is an empty stream
        header = first.strip().split(",")
        if header != SPECTRUM_HEADER:
            raise ValidationError(f"{path}: unexpected header {header}")
        current = None
        t = math.nan
        freqs, vals, error = [], [], None
        last_id = None
        for lineno, line in enumerate(fh, start=2):
            if not line.strip():
                continue
            parts = line.strip().split(",")
            try:
                fid = int(parts[0])
            except ValueError:
                fid = current if current is not None else -1
                error = error or f"line {lineno}: bad frame id"
            if fid != current:
                if current is not None:
                    yield _finish_frame(current, t, freqs, vals, error)
                if last_id is not None and fid <= last_id:
                    raise ValidationError(f"{path}:{lineno}: frames must be contiguous and ascending")
                last_id = current = fid
                freqs, vals, error = [], [], None
                t = math.nan
            try:
                if len(parts) != 4:
                    raise ValueError("expected 4 columns")
                t = float(parts[1])
                freqs.append(float(parts[2]))
                vals.append(float(parts[3]))
            except ValueError as exc:
                error = error or f"line {lineno}: {exc}"
        if current is not None:
            yield _finish_frame(current, t, freqs, vals, error)


def write_spectra(path, spectra):
    with SpectrumWriter(path) as w:
        for s in spectra:
            w.write(s)


def write_keyvalue(path, items):
    with _open_write(path) as fh:
        for key, value in items:
            fh.write(f"{key}={value}\n")


def read_keyvalue(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValidationError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            key = key.strip()
            if key in out:
                raise ValidationError(f"{path}:{lineno}: duplicate key {key}")
            out[key] = value.strip()
    return out


def write_model(path, model):
    items = [(f"m{i}{j}", fmt(model.matrix[i, j])) for i in range(3) for j in range(3)]
    items += [(f"o{i}", fmt(model.offset[i])) for i in range(3)]
    if model.temp_coeffs is not None:
        items += [(f"t{i}", fmt(model.temp_coeffs[i])) for i in range(3)]
        items.append(("tref", fmt(model.ref_temp)))
    if model.fitted_at:
        items.append(("fitted_at", model.fitted_at))
    std = model.fit_report.get("residual_std")
    if std is not None:
        items.append(("residual_std", ",".join(fmt(s) for s in np.ravel(std))))
    write_keyvalue(path, items)


MODEL_KEYS = (
    {f"m{i}{j}" for i in range(3) for j in range(3)}
    | {f"o{i}" for i in range(3)}
    | {f"t{i}" for i in range(3)}
    | {"tref", "fitted_at", "residual_std"}
)


def read_model(path):
    from .calibration import CalibrationModel

    kv = read_keyvalue(path)
    unknown = set(kv) - MODEL_KEYS
    if unknown:
        raise ValidationError(f"{path}: unknown keys {sorted(unknown)}")

    def num(key):
        try:
            return float(kv[key])
        except KeyError:
            raise ValidationError(f"{path}: missing entry {key}") from None
        except ValueError:
            raise ValidationError(f"{path}: bad number for {key}") from None

    matrix = np.array([[num(f"m{i}{j}") for j in range(3)] for i in range(3)])
    offset = np.array([num(f"o{i}") if f"o{i}" in kv else 0.0 for i in range(3)])
    temp_keys = [f"t{i}" for i in range(3)]
    temp_coeffs, tref = None, None
    if any(k in kv for k in temp_keys) or "tref" in kv:
        temp_coeffs = np.array([num(k) for k in temp_keys])
        tref = num("tref")
    report = {}
    if "residual_std" in kv:
        try:
            report["residual_std"] = np.array([float(v) for v in kv["residual_std"].split(",")])
        except ValueError:
            raise ValidationError(f"{path}: bad residual_std") from None
    return CalibrationModel(matrix, offset, temp_coeffs, tref, report, kv.get("fitted_at"))


def write_allan_report(path, curve):
    with _open_write(path) as fh:
        fh.write(",".join(ALLAN_HEADER) + "\n")
        for tau, row in zip(curve.taus.tolist(), curve.deviations.tolist()):
            fh.write(",".join([fmt(tau)] + [fmt(v) for v in row]) + "\n")


def read_allan_report(path):
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1:]


def write_grid(path, grid):
    """Five header lines then ``ny`` rows of ``nx`` values, south row first."""
    ny, nx = grid.values.shape
    with _open_write(path) as fh:
        fh.write(f"origin_lat_deg={fmt(grid.origin[0])}\n")
        fh.write(f"origin_lon_deg={fmt(grid.origin[1])}\n")
        fh.write(f"spacing_m={fmt(grid.spacing)}\n")
        fh.write(f"dims={ny},{nx}\n")
        fh.write("empty=nan\n")
        for row in grid.values.tolist():
            fh.write(" ".join("nan" if math.isnan(v) else fmt(v) for v in row) + "\n")


def read_grid(path):
    """Return ``(origin, spacing, values)`` from a grid file."""
    with open(path, encoding="utf-8") as fh:
        head = [fh.readline().strip() for _ in range(5)]
        try:
            kv = dict(line.split("=", 1) for line in head)
            ny, nx = (int(v) for v in kv["dims"].split(","))
            values = np.array([[float(v) for v in line.split()] for line in fh if line.strip()])
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"{path}: malformed grid file ({exc})") from None
    if values.shape != (ny, nx):
        raise ValidationError(f"{path}: grid body {values.shape} does not match dims {(ny, nx)}")
    return (float(kv["origin_lat_deg"]), float(kv["origin_lon_deg"])), float(kv["spacing_m"]), values
