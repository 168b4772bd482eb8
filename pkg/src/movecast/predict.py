"""Next-day location maps and the metrics used to judge them.

The predictive map blends the particle-averaged movement density with the
expert map at the day's credibility weight, on the analysis grid. Maps are
scored against the location that actually materialized: by the area ranked
at least as probable (smaller is a sharper hit), and by the area under the
proximity curve (how quickly the top-ranked cells approach the true spot).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AlignmentError, DegeneratePosteriorError
from .geo import Grid, KmScale, dist_km
from .inference import ParticleSet
from .missing import ConditionalFamily, Track
from .prior import ExpertPrior


@dataclass(frozen=True)
class PredictiveDensity:
    """Per-cell next-location density (per km²) with its blend components."""

    grid: Grid
    values: np.ndarray
    day: int
    gang_id: str
    data_part: np.ndarray
    expert_part: np.ndarray
    p_n: float

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float).copy()
        if values.shape != (self.grid.n_cells,):
            raise ValueError("values must be flat over the grid cells")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ValueError("density values must be finite and non-negative")
        total = values.sum() * self.grid.cell_area
        if abs(total - 1.0) > 1e-6:
            raise ValueError(f"grid mass {total} is not 1")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def at(self, point) -> float:
        return float(self.values[self.grid.flat_index(point)])


@dataclass(frozen=True)
class ProximityCurve:
    """Sampled curve p -> m(p): distance (km) from the top-p area to the hit."""

    samples: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        samples = tuple((float(p), float(m)) for p, m in self.samples)
        if len(samples) < 1:
            raise ValueError("curve needs at least one sample")
        ps = [p for p, _ in samples]
        ms = [m for _, m in samples]
        if any(not 0 <= p <= 1 for p in ps):
            raise ValueError("fractions must lie in [0, 1]")
        if any(b <= a for a, b in zip(ps, ps[1:])):
            raise ValueError("fractions must increase strictly")
        if any(m < 0 for m in ms):
            raise ValueError("distances must be non-negative")
        if any(b > a + 1e-12 for a, b in zip(ms, ms[1:])):
            raise ValueError("m(p) must be non-increasing")
        object.__setattr__(self, "samples", samples)

    @property
    def fractions(self) -> np.ndarray:
        return np.array([p for p, _ in self.samples])

    @property
    def distances(self) -> np.ndarray:
        return np.array([m for _, m in self.samples])


@dataclass(frozen=True)
class AssessmentRecord:
    gang_id: str
    instance: int
    day: int
    ram_km2: float
    aupc_km: float
    variant: str

    def __post_init__(self) -> None:
        if self.ram_km2 <= 0:
            raise ValueError("ranked-area metric must be positive")
        if self.aupc_km < 0:
            raise ValueError("proximity-curve area must be non-negative")


def predictive_density(
    ps: ParticleSet,
    track: Track,
    day: int,
    expert_prior: ExpertPrior | None,
    p_n: float,
    grid: Grid,
    scale: KmScale,
    gang_id: str | None = None,
    method: str = "exact",
) -> PredictiveDensity:
    """Blend the particle-averaged movement density with the expert map.

    The particle cloud is the parameter posterior from the days before
    ``day``; each cell gets (1-p_n) times the posterior-mean conditional
    density plus p_n times the expert map, then the grid is renormalized so
    truncation at the region edge cannot leak mass.
    """
    if not 0 <= p_n <= 1:
        raise ValueError("p_n must lie in [0, 1]")
    if p_n > 0 and expert_prior is None:
        raise ValueError("expert blending needs an expert prior")
    centers = grid.centers()
    weights = ps.weights / ps.weights.sum()
    family = ConditionalFamily(track, horizon=day, scale=scale, method=method)
    per_deg = family.weighted_density(centers, ps.thetas, ps.hs, weights)
    data_part = per_deg * (scale.delta_lon * scale.delta_lat)  # per km²
    if expert_prior is not None:
        if expert_prior.grid is not grid and expert_prior.grid != grid:
            raise AlignmentError("expert prior lives on a different grid")
        expert_part = np.asarray(expert_prior.density, dtype=float)
    else:
        expert_part = np.zeros(grid.n_cells)
    raw = (1.0 - p_n) * data_part + p_n * expert_part
    total = raw.sum() * grid.cell_area
    if total <= 0:
        raise DegeneratePosteriorError("predictive mass vanished on the grid")
    return PredictiveDensity(
        grid=grid,
        values=raw / total,
        day=day,
        gang_id=gang_id if gang_id is not None else track.gang_id,
        data_part=data_part,
        expert_part=expert_part,
        p_n=p_n,
    )


def ram(pd: PredictiveDensity, actual) -> float:
    """Area (km²) of cells at least as dense as the cell that came true."""
    level = pd.values[pd.grid.flat_index(actual)]
    return float(np.count_nonzero(pd.values >= level) * pd.grid.cell_area)


def _ranked_order(pd: PredictiveDensity) -> np.ndarray:
    """Cell order: density descending, then row, then column."""
    rows, cols = np.divmod(np.arange(pd.grid.n_cells), pd.grid.ncols)
    return np.lexsort((cols, rows, -pd.values))


def proximity_curve(
    pd: PredictiveDensity, actual, p_grid: Sequence[float] | None = None
) -> ProximityCurve:
    """m(p) = distance from the top-100p% ranked cells to the actual point."""
    if p_grid is None:
        p_grid = np.arange(1, 101) / 100.0
    p_grid = np.asarray(p_grid, dtype=float)
    if p_grid.size < 1 or np.any(p_grid <= 0) or np.any(p_grid > 1):
        raise ValueError("fractions must lie in (0, 1]")
    pd.grid.flat_index(actual)  # containment check
    order = _ranked_order(pd)
    d = dist_km(pd.grid.centers()[order], np.asarray(actual, dtype=float), pd.grid.scale)
    best = np.minimum.accumulate(d)
    counts = np.ceil(p_grid * pd.grid.n_cells).astype(int)
    samples = tuple(
        (float(p), float(best[c - 1])) for p, c in zip(p_grid, counts)
    )
    return ProximityCurve(samples)


def aupc(curve: ProximityCurve) -> float:
    """Normalized area under the proximity curve; smaller is better."""
    if len(curve.samples) < 2:
        raise ValueError("curve needs at least two samples")
    p = curve.fractions
    m = curve.distances
    return float(np.trapezoid(m, p) / (1.0 - p[0]))


@dataclass(frozen=True)
class VariantComparison:
    """Win rates of variant_a over variant_b on matched instances."""

    gang_id: str
    variant_a: str
    variant_b: str
    n_instances: int
    ram_strict_pct: float
    ram_at_least_pct: float
    aupc_strict_pct: float
    aupc_at_least_pct: float
    trailing: tuple[tuple[int, float, float], ...]


def compare_variants(
    records: Sequence[AssessmentRecord],
    variant_a: str,
    variant_b: str,
    min_tail: int = 10,
) -> tuple[VariantComparison, ...]:
    """Per-gang win percentages of one variant over another.

    Both metrics count smaller as better. ``trailing`` gives, for each
    starting instance k, the strict-win percentages over instances k..last
    while at least ``min_tail`` instances remain.
    """
    split: dict[str, dict[tuple[str, int, int], AssessmentRecord]] = {}
    for rec in records:
        if rec.variant not in (variant_a, variant_b):
            continue
        key = (rec.gang_id, rec.instance, rec.day)
        slot = split.setdefault(rec.variant, {})
        if key in slot:
            raise AlignmentError(f"duplicate assessment for {key} in {rec.variant}")
        slot[key] = rec
    a_map = split.get(variant_a, {})
    b_map = split.get(variant_b, {})
    if set(a_map) != set(b_map):
        raise AlignmentError("variants cover different instances")
    if not a_map:
        raise AlignmentError("no matched instances")

    out = []
    for gang_id in sorted({g for g, _, _ in a_map}):
        keys = sorted(
            (k for k in a_map if k[0] == gang_id), key=lambda k: (k[2], k[1])
        )
        ram_a = np.array([a_map[k].ram_km2 for k in keys])
        ram_b = np.array([b_map[k].ram_km2 for k in keys])
        au_a = np.array([a_map[k].aupc_km for k in keys])
        au_b = np.array([b_map[k].aupc_km for k in keys])
        n = len(keys)
        trailing = []
        for k in range(n):
            if n - k < min_tail:
                break
            trailing.append(
                (
                    k,
                    100.0 * np.mean(ram_a[k:] < ram_b[k:]),
                    100.0 * np.mean(au_a[k:] < au_b[k:]),
                )
            )
        out.append(
            VariantComparison(
                gang_id=gang_id,
                variant_a=variant_a,
                variant_b=variant_b,
                n_instances=n,
                ram_strict_pct=100.0 * float(np.mean(ram_a < ram_b)),
                ram_at_least_pct=100.0 * float(np.mean(ram_a <= ram_b)),
                aupc_strict_pct=100.0 * float(np.mean(au_a < au_b)),
                aupc_at_least_pct=100.0 * float(np.mean(au_a <= au_b)),
                trailing=tuple(trailing),
            )
        )
    return tuple(out)
