"""Sequential Bayesian inference over movement parameters.

The engine tracks a weighted particle cloud over (theta, h) together with a
single collapsed mass ``expert_mass`` on the expert-map hypothesis. Carrying
that mass analytically instead of as literal dummy particles removes all
Monte-Carlo noise from the expert weight while leaving the particle marginal
untouched.

Daily cycle per observation: inject expert mass, Bayes update, strip the
expert component, rejuvenate with beta kernels. Rejuvenating every update
day keeps the cloud at full size, so the posterior tails survive long runs;
``decile_compress`` is available separately for callers that need a compact
atom summary of a cloud.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DegeneratePosteriorError, OutOfRegionError
from .geo import Grid, KmScale
from .missing import ConditionalFamily, Track
from .prior import ExpertPrior

_MASS_TOL = 1e-9


@dataclass(frozen=True)
class SupportBox:
    """Compact rectangular support for (theta, h) particles."""

    theta_min: float = 1.0
    theta_max: float = 500.0
    h_min: float = 0.5
    h_max: float = 50.0

    def __post_init__(self) -> None:
        for lo, hi, name in (
            (self.theta_min, self.theta_max, "theta"),
            (self.h_min, self.h_max, "h"),
        ):
            if not (np.isfinite(lo) and np.isfinite(hi) and 0 < lo < hi):
                raise ValueError(f"degenerate {name} bounds [{lo}, {hi}]")

    def contains(self, thetas, hs) -> bool:
        thetas = np.asarray(thetas, dtype=float)
        hs = np.asarray(hs, dtype=float)
        return bool(
            np.all((thetas >= self.theta_min) & (thetas <= self.theta_max))
            and np.all((hs >= self.h_min) & (hs <= self.h_max))
        )

    def to_unit(self, thetas, hs) -> tuple[np.ndarray, np.ndarray]:
        """Map box values to [0, 1] on a log scale.

        Both parameters are positive scale-like quantities, so kernels act
        multiplicatively: equal unit distances mean equal ratios. A linear
        map would cram small values against 0 and absorb them at the edge.
        """
        t_lo, t_hi = np.log(self.theta_min), np.log(self.theta_max)
        u_lo, u_hi = np.log(self.h_min), np.log(self.h_max)
        t = (np.log(np.asarray(thetas, dtype=float)) - t_lo) / (t_hi - t_lo)
        u = (np.log(np.asarray(hs, dtype=float)) - u_lo) / (u_hi - u_lo)
        return t, u

    def from_unit(self, t, u) -> tuple[np.ndarray, np.ndarray]:
        t_lo, t_hi = np.log(self.theta_min), np.log(self.theta_max)
        u_lo, u_hi = np.log(self.h_min), np.log(self.h_max)
        thetas = np.exp(t_lo + np.asarray(t, dtype=float) * (t_hi - t_lo))
        hs = np.exp(u_lo + np.asarray(u, dtype=float) * (u_hi - u_lo))
        # exp(log(hi)) can overshoot hi by an ulp; keep outputs in the box
        thetas = np.clip(thetas, self.theta_min, self.theta_max)
        hs = np.clip(hs, self.h_min, self.h_max)
        return thetas, hs


@dataclass(frozen=True)
class FilterConfig:
    n_particles: int = 1000
    support: SupportBox = SupportBox()
    smoothing: float = 0.15
    method: str = "exact"

    def __post_init__(self) -> None:
        if self.n_particles < 100:
            raise ValueError("n_particles must be at least 100")
        if not 0 < self.smoothing < 1:
            raise ValueError("smoothing must lie in (0, 1)")
        if self.method not in ("exact", "partial"):
            raise ValueError("method must be 'exact' or 'partial'")


@dataclass(frozen=True)
class ParticleSet:
    """Weighted atoms over (theta, h) plus collapsed expert mass.

    ``weights`` carries the non-expert mass, so ``expert_mass + sum(weights)``
    is 1 at every stage boundary. The atom count may shrink under decile
    compression and is restored to the configured particle count by
    rejuvenation.
    """

    thetas: np.ndarray
    hs: np.ndarray
    weights: np.ndarray
    expert_mass: float = 0.0
    day: int = 0

    def __post_init__(self) -> None:
        thetas = np.asarray(self.thetas, dtype=float).copy()
        hs = np.asarray(self.hs, dtype=float).copy()
        weights = np.asarray(self.weights, dtype=float).copy()
        if thetas.ndim != 1 or thetas.shape != hs.shape or thetas.shape != weights.shape:
            raise ValueError("thetas, hs, weights must be equal-length 1-D arrays")
        if thetas.size == 0:
            raise ValueError("particle set is empty")
        if not np.all(np.isfinite(thetas)) or np.any(thetas <= 0):
            raise ValueError("thetas must be positive and finite")
        if not np.all(np.isfinite(hs)) or np.any(hs <= 0):
            raise ValueError("hs must be positive and finite")
        if not np.all(np.isfinite(weights)) or np.any(weights < 0):
            raise ValueError("weights must be non-negative and finite")
        if not 0 <= self.expert_mass < 1:
            raise ValueError("expert_mass must lie in [0, 1)")
        total = self.expert_mass + float(weights.sum())
        if abs(total - 1.0) > _MASS_TOL:
            raise ValueError(f"total mass {total} is not 1")
        for arr in (thetas, hs, weights):
            arr.flags.writeable = False
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "hs", hs)
        object.__setattr__(self, "weights", weights)

    @property
    def size(self) -> int:
        return self.thetas.size

    def total_mass(self) -> float:
        return self.expert_mass + float(self.weights.sum())

    def distinct_count(self) -> int:
        pairs = np.column_stack((self.thetas, self.hs))
        return np.unique(pairs, axis=0).shape[0]


@dataclass(frozen=True)
class PosteriorSummary:
    day: int
    theta_mean: float
    theta_lo: float
    theta_hi: float
    h_mean: float
    h_lo: float
    h_hi: float
    q0_prior: float
    q0_posterior: float


def weighted_quantile(values, weights, levels) -> np.ndarray:
    """Inverted-CDF quantiles: smallest value whose CDF reaches the level.

    A 1e-9 slack on the levels keeps exact atoms (deciles of ten equal
    weights) stable against cumulative-sum rounding.
    """
    values = np.asarray(values, dtype=float).ravel()
    weights = np.asarray(weights, dtype=float).ravel()
    levels = np.asarray(levels, dtype=float)
    if values.size == 0 or values.shape != weights.shape:
        raise ValueError("values and weights must be matching non-empty arrays")
    if np.any(weights < 0) or weights.sum() <= 0:
        raise ValueError("weights must be non-negative with positive total")
    if np.any(levels < 0) or np.any(levels > 1):
        raise ValueError("levels must lie in [0, 1]")
    order = np.argsort(values, kind="stable")
    sorted_vals = values[order]
    cdf = np.cumsum(weights[order])
    cdf /= cdf[-1]
    idx = np.searchsorted(cdf, levels - 1e-9, side="left")
    return sorted_vals[np.minimum(idx, values.size - 1)]


def summarize(ps: ParticleSet, q0_prior: float) -> PosteriorSummary:
    """Posterior summary from the non-expert particle marginal."""
    w = ps.weights / ps.weights.sum()
    t_mean = float(w @ ps.thetas)
    h_mean = float(w @ ps.hs)
    t_lo, t_hi = weighted_quantile(ps.thetas, w, [0.025, 0.975])
    h_lo, h_hi = weighted_quantile(ps.hs, w, [0.025, 0.975])
    # heavy single atoms can push the mean past a quantile; widen so the
    # interval always contains it
    return PosteriorSummary(
        day=ps.day,
        theta_mean=t_mean,
        theta_lo=float(min(t_lo, t_mean)),
        theta_hi=float(max(t_hi, t_mean)),
        h_mean=h_mean,
        h_lo=float(min(h_lo, h_mean)),
        h_hi=float(max(h_hi, h_mean)),
        q0_prior=float(q0_prior),
        q0_posterior=float(ps.expert_mass),
    )


def init_particles(n: int, support: SupportBox, seed: int) -> ParticleSet:
    """Uniform draws over the support box, equal weights, no expert mass."""
    if n < 100:
        raise ValueError("n must be at least 100")
    rng = np.random.default_rng([seed, 0])
    thetas = rng.uniform(support.theta_min, support.theta_max, size=n)
    hs = rng.uniform(support.h_min, support.h_max, size=n)
    return ParticleSet(thetas, hs, np.full(n, 1.0 / n))


def inject_expert_mass(ps: ParticleSet, p_n: float) -> ParticleSet:
    """Move probability p_n onto the expert hypothesis.

    Collapsed form of resampling each slot to the expert marker with
    probability p_n: the marker mass is tracked exactly and the particle
    weights shrink by the complement.
    """
    if not 0 <= p_n < 1:
        raise ValueError("p_n must lie in [0, 1)")
    return dataclasses.replace(ps, weights=ps.weights * (1.0 - p_n), expert_mass=p_n)


def bayes_update(
    ps: ParticleSet,
    track: Track,
    day: int,
    expert_prior: ExpertPrior | None,
    observed,
    scale: KmScale,
    method: str = "exact",
    grid: Grid | None = None,
) -> tuple[ParticleSet, PosteriorSummary]:
    """Condition on the day's sighting, or pass through when there is none.

    Particle weights pick up the movement-model conditional density of the
    sighting given that particle's parameters; the expert mass picks up the
    expert map's cell value. Both likelihoods are per square kilometre so
    the two hypotheses compete in the same units.
    """
    q0_prior = ps.expert_mass
    if observed is None:
        return ps, summarize(dataclasses.replace(ps, day=day), q0_prior)
    region = grid if grid is not None else (expert_prior.grid if expert_prior else None)
    if region is not None and not region.contains(observed):
        raise OutOfRegionError(f"observation {tuple(observed)} falls outside the grid")
    family = ConditionalFamily(track, horizon=day, scale=scale, method=method)
    lik = family.density_at(observed, ps.thetas, ps.hs)
    lik = lik * (scale.delta_lon * scale.delta_lat)  # per degree^2 -> per km^2
    expert_lik = expert_prior.at(observed) if expert_prior is not None else 0.0
    new_weights = ps.weights * lik
    new_expert = ps.expert_mass * expert_lik
    total = new_expert + new_weights.sum()
    if total <= 0 or new_weights.sum() <= 0:
        raise DegeneratePosteriorError(f"all posterior mass vanished on day {day}")
    out = ParticleSet(
        ps.thetas, ps.hs, new_weights / total, expert_mass=new_expert / total, day=day
    )
    return out, summarize(out, q0_prior)


def strip_expert(ps: ParticleSet) -> ParticleSet:
    """Drop the expert hypothesis and renormalize the particle weights."""
    remainder = ps.weights.sum()
    if remainder <= 0:
        raise DegeneratePosteriorError("no particle mass left after expert strip")
    if ps.expert_mass == 0.0:
        return ps
    return dataclasses.replace(ps, weights=ps.weights / remainder, expert_mass=0.0)


def _beta_shapes(means: np.ndarray, sd: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Moment-matched beta shapes for each component mean with a shared sd.

    Shapes are floored at 1 so every kernel stays bell-shaped: near the
    edges a full moment match would turn the density U-shaped and pile
    draws onto the boundary, so there the sd is shrunk instead of the
    shape. Components pinned at exactly 0 or 1 are flagged degenerate and
    reproduce their mean.
    """
    means = np.asarray(means, dtype=float)
    var_cap = means * (1.0 - means)
    degenerate = (var_cap <= 0) | np.full(means.shape, sd <= 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        nu = var_cap / np.square(sd) - 1.0
    nu_min = 1.0 / np.minimum(np.maximum(means, 1e-12), np.maximum(1.0 - means, 1e-12))
    nu = np.maximum(nu, nu_min)
    a = np.where(degenerate, 1.0, means * nu)  # placeholder shapes keep rng.beta legal
    b = np.where(degenerate, 1.0, (1.0 - means) * nu)
    return a, b, degenerate


def rejuvenate(
    ps: ParticleSet,
    seed: int | np.random.Generator,
    config: FilterConfig,
) -> ParticleSet:
    """Redraw an equally-weighted cloud from per-particle beta kernels.

    Both parameters are mapped to [0, 1] through the support box's log
    transform; each resampled particle seeds a beta kernel centred on its
    value with common spread smoothing * weighted sd. Degenerate marginals
    pass through.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    box = config.support
    n = config.n_particles
    probs = ps.weights / ps.weights.sum()
    t, u = box.to_unit(ps.thetas, ps.hs)
    t_mean, u_mean = probs @ t, probs @ u
    t_sd = float(np.sqrt(probs @ np.square(t - t_mean)))
    u_sd = float(np.sqrt(probs @ np.square(u - u_mean)))
    if t_sd == 0.0 and u_sd == 0.0:
        return ps
    idx = rng.choice(ps.size, size=n, p=probs)

    def _draw(unit_vals: np.ndarray, sd: float) -> np.ndarray:
        picked = unit_vals[idx]
        if sd == 0.0:
            return picked
        a, b, degenerate = _beta_shapes(picked, config.smoothing * sd)
        fresh = rng.beta(a, b)
        return np.where(degenerate, picked, fresh)

    t_new = _draw(t, t_sd)
    u_new = _draw(u, u_sd)
    thetas, hs = box.from_unit(t_new, u_new)
    non_expert = 1.0 - ps.expert_mass
    return ParticleSet(
        thetas, hs, np.full(n, non_expert / n), expert_mass=ps.expert_mass, day=ps.day
    )


def _snap(values: np.ndarray, targets: np.ndarray) -> np.ndarray:
    """Each value replaced by its nearest target (targets sorted ascending)."""
    pos = np.searchsorted(targets, values)
    lo = np.clip(pos - 1, 0, targets.size - 1)
    hi = np.clip(pos, 0, targets.size - 1)
    pick_hi = np.abs(targets[hi] - values) < np.abs(values - targets[lo])
    return np.where(pick_hi, targets[hi], targets[lo])


def decile_compress(ps: ParticleSet) -> ParticleSet:
    """Snap both marginals to their weighted deciles and merge duplicates.

    Leaves at most 100 distinct (theta, h) atoms. A ten-atom equal-weight
    set is a fixed point. Not part of the daily cycle: snapping to ten
    support points per marginal erases the posterior tails when applied
    every day, so this is a storage/reporting aid, not a filter stage.
    """
    levels = np.arange(1, 11) / 10.0
    probs = ps.weights / ps.weights.sum()
    t_dec = np.unique(weighted_quantile(ps.thetas, probs, levels))
    h_dec = np.unique(weighted_quantile(ps.hs, probs, levels))
    t_snap = _snap(ps.thetas, t_dec)
    h_snap = _snap(ps.hs, h_dec)
    pairs = np.column_stack((t_snap, h_snap))
    uniq, inverse = np.unique(pairs, axis=0, return_inverse=True)
    merged = np.bincount(inverse.ravel(), weights=ps.weights, minlength=uniq.shape[0])
    return ParticleSet(
        uniq[:, 0], uniq[:, 1], merged, expert_mass=ps.expert_mass, day=ps.day
    )


PriorProvider = Callable[[str, int], "tuple[ExpertPrior | None, float] | None"]
PreUpdateHook = Callable[..., None]


@dataclass(frozen=True)
class RunResult:
    summaries: tuple[PosteriorSummary, ...]
    mass_log: tuple[tuple[int, str, str, float], ...]
    final: ParticleSet
    by_day: Mapping[int, ParticleSet]


def run_sequential(
    tracks: Sequence[Track],
    prior_provider: PriorProvider | None,
    config: FilterConfig,
    seed: int,
    scale: KmScale,
    grid: Grid | None = None,
    initial: ParticleSet | None = None,
    first_day: int | None = None,
    last_day: int | None = None,
    min_history: int = 3,
    pre_update_hook: PreUpdateHook | None = None,
) -> RunResult:
    """Run the daily filtering cycle over every gang's observation days.

    Updates for a gang begin once it has ``min_history`` earlier sightings.
    Days without any eligible observation re-emit the previous summary.
    Gangs observed on the same day are processed one at a time in gang-id
    order, then the cloud is rejuvenated once for the day.
    """
    by_gang = {t.gang_id: t for t in tracks}
    if len(by_gang) != len(tracks):
        raise ValueError("duplicate gang ids")
    eligible: dict[int, list[str]] = {}
    for track in tracks:
        for day in sorted(track.observations):
            if track.n_before(day) >= min_history:
                eligible.setdefault(day, []).append(track.gang_id)
    if not eligible:
        raise ValueError("no day reaches the update threshold")

    start = min(eligible) if first_day is None else first_day
    end = max(eligible) if last_day is None else last_day
    ps = initial if initial is not None else init_particles(
        config.n_particles, config.support, seed
    )
    summaries: list[PosteriorSummary] = []
    mass_log: list[tuple[int, str, str, float]] = []
    by_day: dict[int, ParticleSet] = {}
    last_summary: PosteriorSummary | None = None

    for day in range(start, end + 1):
        gangs = sorted(eligible.get(day, []))
        if not gangs:
            if last_summary is not None:
                last_summary = dataclasses.replace(last_summary, day=day)
                summaries.append(last_summary)
            continue
        for gang_id in gangs:
            track = by_gang[gang_id]
            observed = track.observations[day]
            provided = prior_provider(gang_id, day) if prior_provider else None
            expert_prior, p_n = provided if provided is not None else (None, 0.0)
            if pre_update_hook is not None:
                pre_update_hook(
                    day=day,
                    gang_id=gang_id,
                    particles=ps,
                    observed=observed,
                    expert_prior=expert_prior,
                    p_n=p_n,
                )
            ps = inject_expert_mass(ps, p_n)
            mass_log.append((day, gang_id, "inject", ps.total_mass()))
            ps, summary = bayes_update(
                ps, track, day, expert_prior, observed, scale,
                method=config.method, grid=grid,
            )
            mass_log.append((day, gang_id, "update", ps.total_mass()))
            summaries.append(summary)
            last_summary = summary
            ps = strip_expert(ps)
            mass_log.append((day, gang_id, "strip", ps.total_mass()))
        day_rng = np.random.default_rng([seed, day])
        ps = rejuvenate(ps, day_rng, config)
        mass_log.append((day, "", "rejuvenate", ps.total_mass()))
        ps = dataclasses.replace(ps, day=day)
        by_day[day] = ps

    return RunResult(
        summaries=tuple(summaries),
        mass_log=tuple(mass_log),
        final=ps,
        by_day=by_day,
    )
