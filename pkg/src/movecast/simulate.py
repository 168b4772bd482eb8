"""Synthetic trajectories from the movement model and the recovery study.

A simulated gang starts from a Gaussian blob and takes each next step from
the full time-weighted mixture given everything so far. Randomly masking a
fraction of the days (never the first) produces the incomplete records the
estimation study runs on.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .density import full_conditional
from .geo import GeoPoint, KmScale
from .inference import FilterConfig, PosteriorSummary, run_sequential
from .missing import Track


@dataclass(frozen=True)
class SimConfig:
    n: int
    theta_true: float
    h_true: float
    missing_frac: float
    seed: int
    center: GeoPoint = GeoPoint(78.5, 23.5)
    spread_km: float = 5.0
    scale: KmScale = field(default_factory=lambda: KmScale(ref_lat=23.5))

    def __post_init__(self) -> None:
        if self.n < 2:
            raise ValueError("need at least two days")
        for name, value in (("theta_true", self.theta_true), ("h_true", self.h_true),
                            ("spread_km", self.spread_km)):
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"{name} must be positive and finite")
        if not 0 <= self.missing_frac < 1:
            raise ValueError("missing_frac must lie in [0, 1)")


@dataclass(frozen=True)
class SimResult:
    config: SimConfig
    full_track: Track
    masked_track: Track
    series: Mapping[str, tuple[PosteriorSummary, ...]]


def simulate_track(cfg: SimConfig, gang_id: str = "sim") -> Track:
    """Draw one trajectory of n daily locations from the movement model."""
    rng = np.random.default_rng([cfg.seed, 0])
    start = np.asarray(cfg.center, dtype=float) + rng.standard_normal(2) * [
        cfg.spread_km * cfg.scale.delta_lon,
        cfg.spread_km * cfg.scale.delta_lat,
    ]
    points = [GeoPoint(*start)]
    for _ in range(cfg.n - 1):
        mixture = full_conditional(points, cfg.theta_true, cfg.h_true, cfg.scale)
        nxt = mixture.sample(rng, 1)[0]
        points.append(GeoPoint(*nxt))
    return Track(gang_id, {day: pt for day, pt in enumerate(points, start=1)})


def mask_track(track: Track, missing_frac: float, seed: int) -> Track:
    """Remove a random fraction of observation days, keeping the first.

    Exactly floor(missing_frac * (n-1)) of the days after the first are
    dropped, sampled uniformly without replacement.
    """
    if not 0 <= missing_frac < 1:
        raise ValueError("missing_frac must lie in [0, 1)")
    days = sorted(track.observations)
    candidates = np.array(days[1:])
    n_drop = int(missing_frac * candidates.size)
    if n_drop == 0:
        return track
    rng = np.random.default_rng([seed, 1])
    dropped = set(rng.choice(candidates, size=n_drop, replace=False).tolist())
    kept = {d: p for d, p in track.observations.items() if d not in dropped}
    return Track(track.gang_id, kept)


def run_study(
    cfg: SimConfig,
    pf_config: FilterConfig,
    variants: tuple[str, ...] = ("exact", "partial"),
) -> SimResult:
    """Simulate, mask, then recover the parameters under each likelihood.

    No expert prior takes part; the study isolates the likelihood variants
    on the same masked data and seed.
    """
    box = pf_config.support
    if not box.contains([cfg.theta_true], [cfg.h_true]):
        raise ValueError("true parameters fall outside the particle support box")
    full = simulate_track(cfg)
    masked = mask_track(full, cfg.missing_frac, cfg.seed)
    series: dict[str, tuple[PosteriorSummary, ...]] = {}
    for variant in variants:
        variant_cfg = FilterConfig(
            n_particles=pf_config.n_particles,
            support=pf_config.support,
            smoothing=pf_config.smoothing,
            method=variant,
        )
        result = run_sequential(
            [masked], None, variant_cfg, seed=cfg.seed, scale=cfg.scale
        )
        series[variant] = result.summaries
    return SimResult(config=cfg, full_track=full, masked_track=masked, series=series)
