"""File formats: CSV interchange, snapshots, and the JSON run config.

Floats are written with ``repr``, the shortest round-tripping form, so
re-reading any emitted file reproduces the exact in-memory values and
repeated runs are byte-identical.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .geo import GeoPoint, Grid, KmScale
from .inference import FilterConfig, ParticleSet, PosteriorSummary, SupportBox
from .missing import Track
from .predict import AssessmentRecord
from .prior import ForestRaster, IntelReport, PriorConfig
from .simulate import SimConfig

OBSERVATION_COLUMNS = ["gang_id", "day_index", "lon", "lat"]
SUMMARY_COLUMNS = [
    "day", "theta_mean", "theta_lo", "theta_hi",
    "h_mean", "h_lo", "h_hi", "q0_prior", "q0_posterior",
]
STUDY_COLUMNS = [
    "update_index", "theta_mean", "theta_lo", "theta_hi", "h_mean", "h_lo", "h_hi",
]
SNAPSHOT_COLUMNS = ["day", "expert_mass", "theta", "h", "weight"]
METRIC_COLUMNS = ["gang_id", "instance", "day", "ram_km2", "aupc_km", "variant"]


def _fmt(x) -> str:
    return repr(float(x))


def _open_out(path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _read_rows(path, columns: list[str]) -> list[dict[str, str]]:
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        if header != columns:
            raise ValueError(f"{path}: expected columns {columns}, found {header}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(columns):
                raise ValueError(f"{path}:{lineno}: wrong field count")
            rows.append(dict(zip(columns, row)))
    return rows


def _write_rows(path, columns: list[str], rows: Iterable[Sequence[str]]) -> None:
    path = _open_out(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)


# ---- tracks ----


def write_observations(path, tracks: Sequence[Track]) -> None:
    rows = []
    for track in sorted(tracks, key=lambda t: t.gang_id):
        for day in sorted(track.observations):
            lon, lat = track.observations[day]
            rows.append([track.gang_id, str(day), _fmt(lon), _fmt(lat)])
    _write_rows(path, OBSERVATION_COLUMNS, rows)


def read_observations(path) -> dict[str, Track]:
    grouped: dict[str, dict[int, GeoPoint]] = {}
    for row in _read_rows(path, OBSERVATION_COLUMNS):
        try:
            day = int(row["day_index"])
            point = GeoPoint(float(row["lon"]), float(row["lat"]))
        except ValueError as exc:
            raise ValueError(f"{path}: bad observation row {row}: {exc}") from None
        obs = grouped.setdefault(row["gang_id"], {})
        if day in obs:
            raise ValueError(f"{path}: duplicate day {day} for gang {row['gang_id']}")
        obs[day] = point
    return {gid: Track(gid, obs) for gid, obs in grouped.items()}


# ---- prior inputs ----


def write_camps(path, camps: Sequence[GeoPoint]) -> None:
    _write_rows(path, ["lon", "lat"], ([_fmt(lon), _fmt(lat)] for lon, lat in camps))


def read_camps(path) -> list[GeoPoint]:
    return [
        GeoPoint(float(r["lon"]), float(r["lat"])) for r in _read_rows(path, ["lon", "lat"])
    ]


def write_intel(path, intel: Sequence[IntelReport]) -> None:
    _write_rows(
        path,
        ["lon", "lat", "received_day"],
        ([_fmt(r.lon), _fmt(r.lat), str(r.received_day)] for r in intel),
    )


def read_intel(path) -> list[IntelReport]:
    return [
        IntelReport(float(r["lon"]), float(r["lat"]), int(r["received_day"]))
        for r in _read_rows(path, ["lon", "lat", "received_day"])
    ]


def write_forest(path, raster: ForestRaster) -> None:
    """Sparse (row, col, density) form; cells left out are zero."""
    rows = []
    values = raster.values
    for r in range(values.shape[0]):
        for c in range(values.shape[1]):
            if values[r, c] != 0.0:
                rows.append([str(r), str(c), _fmt(values[r, c])])
    _write_rows(path, ["row", "col", "density"], rows)


def read_forest(path, grid: Grid) -> ForestRaster:
    """Accepts sparse (row, col, density) CSV or a dense value grid.

    Dense files carry no header: one line per grid row, south row first,
    ncols comma-separated values each.
    """
    path = Path(path)
    with path.open() as fh:
        first = fh.readline().strip()
    if first.replace(" ", "") == "row,col,density":
        values = np.zeros((grid.nrows, grid.ncols))
        for row in _read_rows(path, ["row", "col", "density"]):
            r, c = int(row["row"]), int(row["col"])
            if not (0 <= r < grid.nrows and 0 <= c < grid.ncols):
                raise ValueError(f"{path}: cell ({r}, {c}) outside the grid")
            values[r, c] = float(row["density"])
        return ForestRaster(grid, values)
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    if data.shape != (grid.nrows, grid.ncols):
        raise ValueError(
            f"{path}: dense raster shape {data.shape} does not match the grid"
        )
    return ForestRaster(grid, data)


# ---- filter outputs ----


def write_summaries(path, summaries: Sequence[PosteriorSummary]) -> None:
    _write_rows(
        path,
        SUMMARY_COLUMNS,
        (
            [str(s.day)] + [_fmt(v) for v in (
                s.theta_mean, s.theta_lo, s.theta_hi,
                s.h_mean, s.h_lo, s.h_hi, s.q0_prior, s.q0_posterior,
            )]
            for s in summaries
        ),
    )


def read_summaries(path) -> list[PosteriorSummary]:
    return [
        PosteriorSummary(
            day=int(r["day"]),
            theta_mean=float(r["theta_mean"]),
            theta_lo=float(r["theta_lo"]),
            theta_hi=float(r["theta_hi"]),
            h_mean=float(r["h_mean"]),
            h_lo=float(r["h_lo"]),
            h_hi=float(r["h_hi"]),
            q0_prior=float(r["q0_prior"]),
            q0_posterior=float(r["q0_posterior"]),
        )
        for r in _read_rows(path, SUMMARY_COLUMNS)
    ]


def write_study_series(path, summaries: Sequence[PosteriorSummary]) -> None:
    _write_rows(
        path,
        STUDY_COLUMNS,
        (
            [str(i)] + [_fmt(v) for v in (
                s.theta_mean, s.theta_lo, s.theta_hi, s.h_mean, s.h_lo, s.h_hi,
            )]
            for i, s in enumerate(summaries, start=1)
        ),
    )


def write_snapshot(path, ps: ParticleSet) -> None:
    _write_rows(
        path,
        SNAPSHOT_COLUMNS,
        (
            [str(ps.day), _fmt(ps.expert_mass), _fmt(t), _fmt(h), _fmt(w)]
            for t, h, w in zip(ps.thetas, ps.hs, ps.weights)
        ),
    )


def read_snapshot(path) -> ParticleSet:
    rows = _read_rows(path, SNAPSHOT_COLUMNS)
    if not rows:
        raise ValueError(f"{path}: snapshot has no particles")
    day = int(rows[0]["day"])
    expert_mass = float(rows[0]["expert_mass"])
    thetas = np.array([float(r["theta"]) for r in rows])
    hs = np.array([float(r["h"]) for r in rows])
    weights = np.array([float(r["weight"]) for r in rows])
    return ParticleSet(thetas, hs, weights, expert_mass=expert_mass, day=day)


# ---- maps and metrics ----


def write_density_map(path, grid: Grid, values: np.ndarray) -> None:
    centers = grid.centers()
    _write_rows(
        path,
        ["lon", "lat", "density"],
        (
            [_fmt(lon), _fmt(lat), _fmt(v)]
            for (lon, lat), v in zip(centers, values)
        ),
    )


def read_density_map(path) -> tuple[np.ndarray, np.ndarray]:
    rows = _read_rows(path, ["lon", "lat", "density"])
    coords = np.array([[float(r["lon"]), float(r["lat"])] for r in rows])
    values = np.array([float(r["density"]) for r in rows])
    return coords, values


def write_metrics(path, records: Sequence[AssessmentRecord]) -> None:
    _write_rows(
        path,
        METRIC_COLUMNS,
        (
            [r.gang_id, str(r.instance), str(r.day), _fmt(r.ram_km2), _fmt(r.aupc_km), r.variant]
            for r in records
        ),
    )


def read_metrics(path) -> list[AssessmentRecord]:
    return [
        AssessmentRecord(
            gang_id=r["gang_id"],
            instance=int(r["instance"]),
            day=int(r["day"]),
            ram_km2=float(r["ram_km2"]),
            aupc_km=float(r["aupc_km"]),
            variant=r["variant"],
        )
        for r in _read_rows(path, METRIC_COLUMNS)
    ]


def write_manifest(path, payload: Mapping) -> None:
    path = _open_out(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# ---- run configuration ----


@dataclass(frozen=True)
class RunConfig:
    """Everything a command needs, resolved from one JSON file."""

    seed: int
    out_dir: Path
    grid: Grid | None
    observations_path: Path | None
    camps_path: Path | None
    forest_path: Path | None
    intel_path: Path | None
    filter_config: FilterConfig
    prior_config: PriorConfig
    sim_config: SimConfig | None

    @property
    def scale(self) -> KmScale | None:
        return self.grid.scale if self.grid is not None else None

    def has_prior_inputs(self) -> bool:
        return self.forest_path is not None


def _take(section: dict, name: str, keys: set[str]) -> None:
    unknown = set(section) - keys
    if unknown:
        raise ValueError(f"config section '{name}' has unknown keys {sorted(unknown)}")


def load_config(path) -> RunConfig:
    """Parse and validate the JSON run config; paths resolve relative to it."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ValueError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ValueError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ValueError(f"config {path} must be a JSON object")
    _take(raw, "top level", {"seed", "out_dir", "grid", "paths", "filter", "prior", "simulate"})
    base = path.resolve().parent
    seed = int(raw.get("seed", 0))
    out_dir = base / raw.get("out_dir", "out")

    grid = None
    if "grid" in raw:
        g = dict(raw["grid"])
        _take(g, "grid", {"lon_min", "lat_min", "lon_max", "lat_max", "cell_km", "ref_lat"})
        try:
            scale = KmScale(ref_lat=float(g["ref_lat"]))
            grid = Grid.from_bbox(
                float(g["lon_min"]), float(g["lat_min"]),
                float(g["lon_max"]), float(g["lat_max"]),
                cell_km=float(g["cell_km"]), scale=scale,
            )
        except KeyError as exc:
            raise ValueError(f"config grid section is missing {exc}") from None

    paths = dict(raw.get("paths", {}))
    _take(paths, "paths", {"observations", "camps", "forest", "intel"})

    def _path(key):
        return (base / paths[key]) if key in paths else None

    flt = dict(raw.get("filter", {}))
    _take(flt, "filter", {
        "n_particles", "theta_min", "theta_max", "h_min", "h_max", "smoothing",
    })
    box = SupportBox(
        theta_min=float(flt.get("theta_min", 1.0)),
        theta_max=float(flt.get("theta_max", 500.0)),
        h_min=float(flt.get("h_min", 0.5)),
        h_max=float(flt.get("h_max", 50.0)),
    )
    filter_config = FilterConfig(
        n_particles=int(flt.get("n_particles", 1000)),
        support=box,
        smoothing=float(flt.get("smoothing", 0.15)),
    )

    pri = dict(raw.get("prior", {}))
    _take(pri, "prior", {
        "forest_min", "camp_km", "hull_buffer_km", "intel_km", "intel_age_days",
        "recent_count", "credibility_with_intel", "credibility_without",
    })
    prior_config = PriorConfig(**{k: v for k, v in pri.items()})

    sim_config = None
    if "simulate" in raw:
        sim = dict(raw["simulate"])
        _take(sim, "simulate", {
            "n", "theta_true", "h_true", "missing_frac", "seed", "center", "spread_km",
        })
        sim_scale = grid.scale if grid is not None else KmScale(ref_lat=23.5)
        center = sim.get("center")
        sim_config = SimConfig(
            n=int(sim["n"]),
            theta_true=float(sim["theta_true"]),
            h_true=float(sim["h_true"]),
            missing_frac=float(sim.get("missing_frac", 0.0)),
            seed=int(sim.get("seed", seed)),
            center=GeoPoint(*map(float, center)) if center else GeoPoint(78.5, 23.5),
            spread_km=float(sim.get("spread_km", 5.0)),
            scale=sim_scale,
        )

    return RunConfig(
        seed=seed,
        out_dir=out_dir,
        grid=grid,
        observations_path=_path("observations"),
        camps_path=_path("camps"),
        forest_path=_path("forest"),
        intel_path=_path("intel"),
        filter_config=filter_config,
        prior_config=prior_config,
        sim_config=sim_config,
    )
