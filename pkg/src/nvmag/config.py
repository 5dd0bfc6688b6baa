"""Run configuration: physics constants, bias, line shape, grid and tracker
settings read from a ``key=value`` file. Unknown keys are rejected and every
value is validated when the file is loaded."""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .errors import NvmagError, ValidationError
from .io import read_keyvalue
from .nv_physics import (
    DEFAULT_BIAS_NT,
    DEFAULT_VALIDITY_NT,
    BiasFieldConfig,
    LineParams,
    NvConstants,
    frequency_grid,
    tetrahedral_axes,
)


@dataclass(frozen=True)
class RunConfig:
    D0_Hz: float = 2.870e9
    beta_Hz_per_K: float = -74.2e3
    gamma_Hz_per_nT: float = 28.024
    T0_K: float = 298.15
    bias_x_nT: float = DEFAULT_BIAS_NT[0]
    bias_y_nT: float = DEFAULT_BIAS_NT[1]
    bias_z_nT: float = DEFAULT_BIAS_NT[2]
    bias_tc_x_nT_per_K: float = 0.0
    bias_tc_y_nT_per_K: float = 0.0
    bias_tc_z_nT_per_K: float = 0.0
    bias_ref_temp_K: float = 298.15
    bias_separation_nT: float = 20000.0
    max_external_nT: float = 60000.0
    validity_nT: float = DEFAULT_VALIDITY_NT
    linewidth_Hz: float = 1.0e6
    contrast: float = 0.02
    baseline: float = 1.0
    grid_half_span_Hz: float = 24.0e6
    grid_step_Hz: float = 100.0e3
    spectrum_noise: float = 0.0
    track_window_fwhm: float = 5.0
    expected_x_nT: float = 0.0
    expected_y_nT: float = 0.0
    expected_z_nT: float = 0.0
    seed: int = 0

    _nested: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        try:
            constants = NvConstants(self.D0_Hz, self.beta_Hz_per_K, self.gamma_Hz_per_nT, self.T0_K)
            bias = BiasFieldConfig(
                (self.bias_x_nT, self.bias_y_nT, self.bias_z_nT),
                (self.bias_tc_x_nT_per_K, self.bias_tc_y_nT_per_K, self.bias_tc_z_nT_per_K),
                self.bias_ref_temp_K,
                self.bias_separation_nT,
                self.max_external_nT,
            ).validate()
            line = LineParams(self.linewidth_Hz, self.contrast, self.baseline)
        except NvmagError as exc:
            raise ValidationError(f"invalid configuration: {exc}") from exc
        if not 0 < self.grid_step_Hz <= self.linewidth_Hz / 4:
            raise ValidationError("grid_step_Hz must be positive and at most linewidth/4")
        if self.spectrum_noise < 0 or self.track_window_fwhm <= 0 or self.validity_nT <= 0:
            raise ValidationError("spectrum_noise >= 0, track_window_fwhm > 0 and validity_nT > 0 required")
        reach = self.gamma_Hz_per_nT * (np.abs(bias.projections()).max() + self.max_external_nT)
        if self.grid_half_span_Hz < reach + 3 * self.linewidth_Hz:
            raise ValidationError(
                f"grid_half_span_Hz must be at least {reach + 3 * self.linewidth_Hz:.6g} Hz for this bias"
            )
        self._nested.update(constants=constants, bias=bias, line=line)

    @property
    def constants(self):
        return self._nested["constants"]

    @property
    def bias(self):
        return self._nested["bias"]

    @property
    def line(self):
        return self._nested["line"]

    @property
    def geometry(self):
        return tetrahedral_axes()

    @property
    def expected_field(self):
        return np.array([self.expected_x_nT, self.expected_y_nT, self.expected_z_nT])

    def grid(self, temperature=None):
        return frequency_grid(self.constants, self.grid_half_span_Hz, self.grid_step_Hz, temperature)

    @classmethod
    def keys(cls):
        return [f.name for f in fields(cls) if not f.name.startswith("_")]

    @classmethod
    def from_mapping(cls, values):
        known = set(cls.keys())
        unknown = sorted(set(values) - known)
        if unknown:
            raise ValidationError(f"unknown config keys {unknown}; valid keys: {sorted(known)}")
        kwargs = {}
        for key, raw in values.items():
            try:
                kwargs[key] = int(raw) if key == "seed" else float(raw)
            except (TypeError, ValueError):
                raise ValidationError(f"config key {key}: cannot parse {raw!r}") from None
        return cls(**kwargs)

    @classmethod
    def load(cls, path=None):
        if path is None:
            return cls()
        return cls.from_mapping(read_keyvalue(path))

    def items(self):
        return [(k, getattr(self, k)) for k in self.keys()]
