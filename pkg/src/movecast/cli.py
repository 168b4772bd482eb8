"""Command-line entry points: simulate, fit, predict, evaluate.

Each command reads one JSON config, writes its outputs under the config's
output directory, and is deterministic given (config, seed). Exit codes:
0 success, 2 bad config or inputs, 3 not enough observations to fit,
4 missing fit state for prediction, 5 nothing to evaluate.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
import time
from collections import defaultdict
from pathlib import Path

from . import io
from .errors import AlignmentError, EmptyHistoryError, InsufficientHistoryError
from .inference import run_sequential
from .missing import Track
from .predict import (
    AssessmentRecord,
    aupc,
    compare_variants,
    predictive_density,
    proximity_curve,
    ram,
)
from .prior import build_expert_prior, fresh_intel, prior_credibility
from .simulate import mask_track, simulate_track
from .svgmap import write_svg_heatmap

_METHOD_BY_VARIANT = {"full": "exact", "partial": "partial"}


class CommandError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _load_config(args) -> io.RunConfig:
    try:
        cfg = io.load_config(args.config)
    except ValueError as exc:
        raise CommandError(2, str(exc)) from None
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _require(cfg: io.RunConfig, *, grid=False, observations=False, prior=False):
    if grid and cfg.grid is None:
        raise CommandError(2, "config needs a grid section")
    if observations and cfg.observations_path is None:
        raise CommandError(2, "config needs paths.observations")
    if prior and not cfg.has_prior_inputs():
        raise CommandError(2, "config needs paths.forest for expert-prior work")


def _read_tracks(cfg: io.RunConfig) -> dict[str, Track]:
    try:
        tracks = io.read_observations(cfg.observations_path)
    except (OSError, ValueError) as exc:
        raise CommandError(2, str(exc)) from None
    for track in tracks.values():
        for day, point in track.observations.items():
            if not cfg.grid.contains(point):
                raise CommandError(
                    2, f"observation for {track.gang_id} on day {day} is outside the grid"
                )
    return tracks


def _read_prior_inputs(cfg: io.RunConfig):
    try:
        forest = io.read_forest(cfg.forest_path, cfg.grid)
        camps = io.read_camps(cfg.camps_path) if cfg.camps_path else []
        intel = io.read_intel(cfg.intel_path) if cfg.intel_path else []
    except (OSError, ValueError) as exc:
        raise CommandError(2, str(exc)) from None
    return forest, camps, intel


def _make_prior_provider(cfg: io.RunConfig, tracks: dict[str, Track]):
    """Per-(gang, day) expert prior and credibility, cached."""
    forest, camps, intel = _read_prior_inputs(cfg)
    pc = cfg.prior_config
    cache: dict[tuple[str, int], tuple] = {}

    def provider(gang_id: str, day: int):
        key = (gang_id, day)
        if key not in cache:
            track = tracks[gang_id]
            before = sorted(d for d in track.observations if d < day)
            recent = [track.observations[d] for d in before[-pc.recent_count:]]
            p_n = prior_credibility(bool(fresh_intel(intel, day, pc)), pc)
            try:
                prior = build_expert_prior(
                    cfg.grid, forest, camps, recent, intel, day, cfg.scale, cfg=pc
                )
            except InsufficientHistoryError:
                prior, p_n = None, 0.0
            cache[key] = (prior, p_n)
        return cache[key]

    return provider


# ---- commands ----


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    if cfg.sim_config is None:
        raise CommandError(2, "config needs a simulate section")
    sim = cfg.sim_config
    if args.seed is not None:
        sim = dataclasses.replace(sim, seed=args.seed)
    started = time.perf_counter()
    full = simulate_track(sim)
    masked = mask_track(full, sim.missing_frac, sim.seed)
    io.write_observations(cfg.out_dir / "sim_full.csv", [full])
    io.write_observations(cfg.out_dir / "sim_masked.csv", [masked])
    io.write_manifest(
        cfg.out_dir / "sim_manifest.json",
        {
            "command": "simulate",
            "config": dataclasses.asdict(sim),
            "seeds": [sim.seed],
            "days_kept": len(masked.observations),
            "wall_time_s": time.perf_counter() - started,
        },
    )
    return 0


def _fit_once(cfg: io.RunConfig, tracks: dict[str, Track], method: str,
              initial=None, first_day=None, with_prior=True, hook=None):
    provider = (
        _make_prior_provider(cfg, tracks) if with_prior and cfg.has_prior_inputs() else None
    )
    fc = dataclasses.replace(cfg.filter_config, method=method)
    try:
        return run_sequential(
            sorted(tracks.values(), key=lambda t: t.gang_id),
            provider,
            fc,
            seed=cfg.seed,
            scale=cfg.scale,
            grid=cfg.grid,
            initial=initial,
            first_day=first_day,
            pre_update_hook=hook,
        )
    except ValueError as exc:
        raise CommandError(3, str(exc)) from None


def cmd_fit(args) -> int:
    cfg = _load_config(args)
    _require(cfg, grid=True, observations=True)
    tracks = _read_tracks(cfg)
    if not any(len(t.observations) >= 3 for t in tracks.values()):
        raise CommandError(3, "no gang has three observations to start from")
    initial = first_day = None
    if args.resume:
        try:
            initial = io.read_snapshot(args.resume)
        except (OSError, ValueError) as exc:
            raise CommandError(2, str(exc)) from None
        first_day = initial.day + 1
    result = _fit_once(
        cfg, tracks, _METHOD_BY_VARIANT[args.variant], initial=initial, first_day=first_day
    )
    io.write_summaries(cfg.out_dir / "summaries.csv", result.summaries)
    for day, ps in sorted(result.by_day.items()):
        io.write_snapshot(cfg.out_dir / "snapshots" / f"day_{day:05d}.csv", ps)
    io.write_snapshot(cfg.out_dir / "final.csv", result.final)
    return 0


def _latest_snapshot(cfg: io.RunConfig, before_day: int) -> Path:
    snap_dir = cfg.out_dir / "snapshots"
    best = None
    if snap_dir.is_dir():
        for path in snap_dir.glob("day_*.csv"):
            try:
                day = int(path.stem.split("_", 1)[1])
            except ValueError:
                continue
            if day < before_day and (best is None or day > best[0]):
                best = (day, path)
    if best is None:
        raise CommandError(4, f"no fitted snapshot earlier than day {before_day}")
    return best[1]


def cmd_predict(args) -> int:
    cfg = _load_config(args)
    _require(cfg, grid=True, observations=True)
    tracks = _read_tracks(cfg)
    if args.gang not in tracks:
        raise CommandError(4, f"unknown gang id {args.gang!r}")
    track = tracks[args.gang]
    ps = io.read_snapshot(_latest_snapshot(cfg, args.day))

    prior = None
    p_n = 0.0
    if cfg.has_prior_inputs():
        provider = _make_prior_provider(cfg, tracks)
        prior, p_n = provider(args.gang, args.day)
    if args.force_pn is not None:
        if not 0 <= args.force_pn <= 1:
            raise CommandError(2, "--force-pn must lie in [0, 1]")
        p_n = args.force_pn
    if p_n > 0 and prior is None:
        raise CommandError(4, "expert weighting requested but no prior can be built")

    try:
        pd = predictive_density(
            ps, track, args.day, prior, p_n, cfg.grid, cfg.scale,
            gang_id=args.gang, method=_METHOD_BY_VARIANT[args.variant],
        )
    except EmptyHistoryError as exc:
        raise CommandError(4, str(exc)) from None
    stem = f"density_{args.gang}_day{args.day}"
    io.write_density_map(cfg.out_dir / f"{stem}.csv", cfg.grid, pd.values)
    write_svg_heatmap(
        cfg.out_dir / f"{stem}.svg", cfg.grid, pd.values,
        title=f"{args.gang} day {args.day}",
    )
    if prior is not None:
        io.write_density_map(
            cfg.out_dir / f"prior_{args.gang}_day{args.day}.csv", cfg.grid, prior.density
        )
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    _require(cfg, grid=True, observations=True, prior=True)
    tracks = _read_tracks(cfg)
    records: list[AssessmentRecord] = []

    def scoring_hook(tags_method):
        counters: dict[str, int] = defaultdict(int)

        def hook(day, gang_id, particles, observed, expert_prior, p_n):
            idx = counters[gang_id]
            counters[gang_id] += 1
            track = tracks[gang_id]
            for tag, method, use_prior in tags_method:
                if use_prior and expert_prior is None:
                    continue
                pd = predictive_density(
                    particles, track, day,
                    expert_prior if use_prior else None,
                    p_n if use_prior else 0.0,
                    cfg.grid, cfg.scale, gang_id=gang_id, method=method,
                )
                records.append(
                    AssessmentRecord(
                        gang_id, idx, day,
                        ram(pd, observed),
                        aupc(proximity_curve(pd, observed)),
                        tag,
                    )
                )

        return hook

    try:
        _fit_once(
            cfg, tracks, "exact",
            hook=scoring_hook(
                [("with-prior", "exact", True), ("without-prior", "exact", False)]
            ),
        )
        if args.variant == "partial":
            _fit_once(
                cfg, tracks, "partial", with_prior=False,
                hook=scoring_hook([("partial-model", "partial", False)]),
            )
    except CommandError as err:
        raise CommandError(5, str(err)) from None
    if not records:
        raise CommandError(5, "no assessable instances")

    io.write_metrics(cfg.out_dir / "metrics.csv", records)
    pairs = [("with-prior", "without-prior")]
    if args.variant == "partial":
        pairs.append(("without-prior", "partial-model"))
    comparisons = []
    for a, b in pairs:
        try:
            rows = compare_variants(records, a, b)
        except AlignmentError:
            continue  # pair not assessable on matched instances
        comparisons.extend(dataclasses.asdict(row) for row in rows)
    io.write_manifest(cfg.out_dir / "comparison.json", {"comparisons": comparisons})
    return 0


# ---- argument surface ----


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="movecast",
        description="Sequential Bayesian prediction of a moving group's next location.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="JSON run config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")

    p = sub.add_parser("simulate", help="draw a synthetic track and mask days")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="run the sequential filter over all gangs")
    common(p)
    p.add_argument("--variant", choices=["full", "partial"], default="full")
    p.add_argument("--resume", default=None, help="particle snapshot CSV to continue from")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="emit a next-location map for one gang/day")
    common(p)
    p.add_argument("--gang", required=True)
    p.add_argument("--day", type=int, required=True)
    p.add_argument("--variant", choices=["full", "partial"], default="full")
    p.add_argument("--force-pn", type=float, default=None, dest="force_pn")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", help="score day-ahead predictions against outcomes")
    common(p)
    p.add_argument(
        "--variant", choices=["full", "partial"], default="full",
        help="'partial' also scores the renormalized-weights likelihood",
    )
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CommandError as err:
        print(f"error: {err}", file=sys.stderr)
        return err.code


if __name__ == "__main__":
    sys.exit(main())
