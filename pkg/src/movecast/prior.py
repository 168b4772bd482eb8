"""Daily expert-knowledge prior over the analysis grid.

A cell earns one raw level if it jointly has enough forest cover, enough
distance from security camps, and lies within the extended convex hull of
the group's recent sightings; each fresh informant report within reach adds
one more. Raw levels are normalised into a proper density per km².
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import shapely

from .errors import InsufficientHistoryError
from .geo import GeoPoint, Grid, KmScale, dist_km

__all__ = [
    "PriorConfig",
    "ForestRaster",
    "IntelReport",
    "ExpertPrior",
    "extended_hull_mask",
    "fresh_intel",
    "build_expert_prior",
    "prior_credibility",
]


@dataclass(frozen=True)
class PriorConfig:
    """Thresholds of the marking rules; defaults follow the operating doctrine."""

    forest_min: float = 0.5
    camp_km: float = 3.0
    hull_buffer_km: float = 10.0
    intel_km: float = 10.0
    intel_age_days: int = 10
    recent_count: int = 3
    credibility_with_intel: float = 0.5
    credibility_without: float = 0.1

    def __post_init__(self) -> None:
        if not 0.0 <= self.forest_min <= 1.0:
            raise ValueError("forest_min must be in [0, 1]")
        if min(self.camp_km, self.hull_buffer_km, self.intel_km) < 0:
            raise ValueError("distance thresholds must be non-negative")
        if self.intel_age_days < 0 or self.recent_count < 1:
            raise ValueError("intel_age_days must be >= 0 and recent_count >= 1")
        for p in (self.credibility_with_intel, self.credibility_without):
            if not 0.0 <= p < 1.0:
                raise ValueError("credibility weights must be in [0, 1)")


@dataclass(frozen=True)
class ForestRaster:
    """Per-cell forest density in [0, 1], aligned with a grid."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != (self.grid.nrows, self.grid.ncols):
            raise ValueError("forest raster shape must match the grid")
        if np.any(~np.isfinite(vals)) or vals.min() < 0.0 or vals.max() > 1.0:
            raise ValueError("forest densities must lie in [0, 1]")
        object.__setattr__(self, "values", vals)

    def flat(self) -> np.ndarray:
        """Values in grid centre order (row-major, south row first)."""
        return self.values.ravel()


class IntelReport(NamedTuple):
    """An informant's location tip and the day it arrived."""

    lon: float
    lat: float
    received_day: int


@dataclass(frozen=True)
class ExpertPrior:
    """Normalised expert density (per km²) with its derivation layers."""

    grid: Grid
    density: np.ndarray
    support_mask: np.ndarray
    raw_levels: np.ndarray
    fresh_intel_count: int = 0

    def __post_init__(self) -> None:
        dens = np.asarray(self.density, dtype=float)
        if dens.shape != (self.grid.n_cells,):
            raise ValueError("density must have one value per grid cell")
        if dens.min() < 0.0:
            raise ValueError("density must be non-negative")
        total = dens.sum() * self.grid.cell_area
        if abs(total - 1.0) > 1e-9:
            raise ValueError("density must integrate to one over the grid")
        object.__setattr__(self, "density", dens)

    def at(self, point) -> float:
        """Density value of the cell containing ``point``."""
        return float(self.density[self.grid.flat_index(point)])


def extended_hull_mask(
    recent: Sequence[GeoPoint], buffer_km: float, grid: Grid
) -> np.ndarray:
    """Cells whose centre lies within ``buffer_km`` of the recent-points hull.

    Degenerate hulls (a single point, collinear points) reduce to a disk or
    a stadium around the segment; the distance test covers all cases.
    """
    if len(recent) == 0:
        raise InsufficientHistoryError("hull mask needs at least one recent sighting")
    pts = np.atleast_2d(np.asarray(recent, dtype=float))
    scale = grid.scale
    hull = shapely.MultiPoint(scale.to_km(pts)).convex_hull
    cells = shapely.points(scale.to_km(grid.centers()))
    return shapely.distance(cells, hull) <= buffer_km


def fresh_intel(
    intel: Sequence[IntelReport], today: int, cfg: PriorConfig
) -> list[IntelReport]:
    """Reports already received and at most ``intel_age_days`` old, newest
    first, capped at the two most recent (the marking table has two slots)."""
    ok = [
        r
        for r in intel
        if r.received_day <= today and today - r.received_day <= cfg.intel_age_days
    ]
    ok.sort(key=lambda r: -r.received_day)
    return ok[:2]


def prior_credibility(intel_fresh: bool, cfg: PriorConfig | None = None) -> float:
    """Weight placed on the expert map: higher when fresh intel informed it."""
    cfg = cfg or PriorConfig()
    return cfg.credibility_with_intel if intel_fresh else cfg.credibility_without


def build_expert_prior(
    grid: Grid,
    forest: ForestRaster,
    camps: Sequence[GeoPoint],
    recent: Sequence[GeoPoint],
    intel: Sequence[IntelReport],
    today: int,
    scale: KmScale,
    cfg: PriorConfig | None = None,
) -> ExpertPrior:
    """Construct the day's expert prior from the marking rules.

    Raw level per cell = [forest >= threshold AND camps farther than the
    cutoff AND inside the extended hull] + one per fresh intel report within
    reach (at most two). If nothing is marked the density falls back to
    uniform over the hull mask, or over the whole grid as a last resort.
    """
    cfg = cfg or PriorConfig()
    pts = np.atleast_2d(np.asarray(recent, dtype=float))
    if pts.shape[0] != cfg.recent_count:
        raise InsufficientHistoryError(
            f"expert prior needs exactly {cfg.recent_count} recent sightings"
        )
    if forest.grid is not grid and (
        forest.grid.nrows != grid.nrows or forest.grid.ncols != grid.ncols
    ):
        raise ValueError("forest raster does not match the analysis grid")

    centers = grid.centers()
    hull_ok = extended_hull_mask(pts, cfg.hull_buffer_km, grid)
    forest_ok = forest.flat() >= cfg.forest_min
    if len(camps) == 0:
        camp_ok = np.ones(grid.n_cells, dtype=bool)
    else:
        camp_d = np.stack([dist_km(centers, np.asarray(c, dtype=float), scale) for c in camps])
        camp_ok = camp_d.min(axis=0) > cfg.camp_km
    main = forest_ok & camp_ok & hull_ok

    reports = fresh_intel(intel, today, cfg)
    raw = main.astype(int)
    for rep in reports:
        near = dist_km(centers, np.array([rep.lon, rep.lat]), scale) <= cfg.intel_km
        raw += near.astype(int)

    total = raw.sum()
    if total > 0:
        density = raw / (total * grid.cell_area)
    elif hull_ok.any():
        density = hull_ok / (hull_ok.sum() * grid.cell_area)
    else:
        density = np.full(grid.n_cells, 1.0 / (grid.n_cells * grid.cell_area))
    return ExpertPrior(
        grid=grid,
        density=density,
        support_mask=density > 0.0,
        raw_levels=raw,
        fresh_intel_count=len(reports),
    )
