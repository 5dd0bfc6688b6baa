"""Flat-earth mapping between local east/north metres and latitude/longitude.

Adequate for sites a few kilometres across; altitude passes through unchanged.
"""

from dataclasses import dataclass

import numpy as np

EARTH_RADIUS_M = 6371000.0


@dataclass(frozen=True)
class LocalFrame:
    lat0: float = 45.4215
    lon0: float = -75.6972

    @property
    def _m_per_deg_lat(self):
        return np.pi * EARTH_RADIUS_M / 180.0

    @property
    def _m_per_deg_lon(self):
        return self._m_per_deg_lat * np.cos(np.radians(self.lat0))

    def to_geo(self, east, north):
        lat = self.lat0 + np.asarray(north, dtype=float) / self._m_per_deg_lat
        lon = self.lon0 + np.asarray(east, dtype=float) / self._m_per_deg_lon
        return lat, lon

    def to_local(self, lat, lon):
        north = (np.asarray(lat, dtype=float) - self.lat0) * self._m_per_deg_lat
        east = (np.asarray(lon, dtype=float) - self.lon0) * self._m_per_deg_lon
        return east, north
