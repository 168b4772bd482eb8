"""Flat-earth geometry: degree/km conversion, distances, and the raster grid.

All coordinates are (lon, lat) in decimal degrees. Distances are computed in
an equirectangular approximation anchored at a reference latitude, which is
adequate for regions a few hundred km across.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import OutOfRegionError

__all__ = [
    "GeoPoint",
    "KmScale",
    "Grid",
    "dist_km",
]

# Mean length of one degree of latitude in km; longitude shrinks by cos(lat).
_KM_PER_DEG_LAT = 110.574
_KM_PER_DEG_LON_EQ = 111.320


class GeoPoint(NamedTuple):
    """A location as (lon, lat) in decimal degrees."""

    lon: float
    lat: float


@dataclass(frozen=True)
class KmScale:
    """Degrees-per-km conversion factors at a fixed reference latitude.

    ``delta_lon`` and ``delta_lat`` are the widths, in degrees, of one
    kilometre along each axis. A bandwidth of ``h`` km therefore spans
    ``h * delta_lon`` degrees of longitude and ``h * delta_lat`` degrees
    of latitude.
    """

    ref_lat: float
    delta_lon: float = field(init=False)
    delta_lat: float = field(init=False)

    def __post_init__(self) -> None:
        if not -89.0 <= self.ref_lat <= 89.0:
            raise ValueError("ref_lat must be in [-89, 89] degrees")
        object.__setattr__(
            self,
            "delta_lon",
            1.0 / (_KM_PER_DEG_LON_EQ * math.cos(math.radians(self.ref_lat))),
        )
        object.__setattr__(self, "delta_lat", 1.0 / _KM_PER_DEG_LAT)

    def to_km(self, points) -> np.ndarray:
        """Map (lon, lat) offsets in degrees to planar km coordinates."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return np.column_stack((pts[:, 0] / self.delta_lon, pts[:, 1] / self.delta_lat))


def dist_km(a, b, scale: KmScale) -> np.ndarray | float:
    """Planar distance in km between points ``a`` and ``b``.

    Either argument may be a single (lon, lat) pair or an (n, 2) array;
    broadcasting follows numpy rules on the leading axis.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dlon = (a[..., 0] - b[..., 0]) / scale.delta_lon
    dlat = (a[..., 1] - b[..., 1]) / scale.delta_lat
    d = np.hypot(dlon, dlat)
    return float(d) if d.ndim == 0 else d


@dataclass(frozen=True)
class Grid:
    """Regular raster of square cells tiling a lon/lat box.

    Rows run south to north (row 0 at ``lat_min``), columns west to east.
    Cells are ``cell_km`` on a side in the km plane of ``scale``, so every
    cell covers the same area ``cell_km ** 2``.
    """

    lon_min: float
    lat_min: float
    nrows: int
    ncols: int
    cell_km: float
    scale: KmScale

    def __post_init__(self) -> None:
        if self.nrows < 1 or self.ncols < 1:
            raise ValueError("grid must have at least one row and column")
        if self.cell_km <= 0:
            raise ValueError("cell_km must be positive")

    @classmethod
    def from_bbox(
        cls,
        lon_min: float,
        lat_min: float,
        lon_max: float,
        lat_max: float,
        cell_km: float,
        scale: KmScale,
    ) -> "Grid":
        """Tile the bbox with cells, widening the north/east edge to fit."""
        if lon_max <= lon_min or lat_max <= lat_min:
            raise ValueError("bbox must have positive extent")
        ext_lon_km = (lon_max - lon_min) / scale.delta_lon
        ext_lat_km = (lat_max - lat_min) / scale.delta_lat
        ncols = max(1, math.ceil(ext_lon_km / cell_km - 1e-9))
        nrows = max(1, math.ceil(ext_lat_km / cell_km - 1e-9))
        return cls(lon_min, lat_min, nrows, ncols, cell_km, scale)

    @property
    def cell_dlon(self) -> float:
        return self.cell_km * self.scale.delta_lon

    @property
    def cell_dlat(self) -> float:
        return self.cell_km * self.scale.delta_lat

    @property
    def lon_max(self) -> float:
        return self.lon_min + self.ncols * self.cell_dlon

    @property
    def lat_max(self) -> float:
        return self.lat_min + self.nrows * self.cell_dlat

    @property
    def n_cells(self) -> int:
        return self.nrows * self.ncols

    @property
    def cell_area(self) -> float:
        return self.cell_km**2

    def centers(self) -> np.ndarray:
        """Cell centres as an (n_cells, 2) array in row-major order."""
        lons = self.lon_min + (np.arange(self.ncols) + 0.5) * self.cell_dlon
        lats = self.lat_min + (np.arange(self.nrows) + 0.5) * self.cell_dlat
        gl, gt = np.meshgrid(lons, lats)
        return np.column_stack((gl.ravel(), gt.ravel()))

    def center_of(self, row: int, col: int) -> GeoPoint:
        return GeoPoint(
            self.lon_min + (col + 0.5) * self.cell_dlon,
            self.lat_min + (row + 0.5) * self.cell_dlat,
        )

    def contains(self, point) -> bool:
        lon, lat = float(point[0]), float(point[1])
        return (
            self.lon_min <= lon < self.lon_max and self.lat_min <= lat < self.lat_max
        )

    def cell_index(self, point) -> tuple[int, int]:
        """(row, col) of the cell containing ``point``; raises if outside."""
        if not self.contains(point):
            raise OutOfRegionError(f"point {tuple(point)} lies outside the grid")
        col = int((float(point[0]) - self.lon_min) / self.cell_dlon)
        row = int((float(point[1]) - self.lat_min) / self.cell_dlat)
        # guard the east/north edge against float round-up
        return min(row, self.nrows - 1), min(col, self.ncols - 1)

    def flat_index(self, point) -> int:
        row, col = self.cell_index(point)
        return row * self.ncols + col
