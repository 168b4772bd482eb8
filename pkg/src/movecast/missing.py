"""Next-location likelihood when parts of the history were never observed.

The movement model assigns each past day a recency weight, but on some days
the group was not sighted. Marginalising the unsighted days forward through
the model yields a closed form: a Gaussian mixture whose components sit at
the sighted locations only, with bandwidth multipliers sqrt(1)..sqrt(L+1)
for L unsighted days, and coefficients that chain recency weights through
every increasing tuple of unsighted days.

Two equivalent coefficient computations are provided. The production path
builds three sparse weight matrices and accumulates matrix-vector products;
the reference path enumerates the tuples directly and is kept as an oracle
for small L. A renormalised "sighted days only" baseline and a numerical
quadrature of the defining marginalisation integral complete the module.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .density import GaussianMixture, ModelParams, decay_weights
from .errors import EmptyHistoryError
from .geo import GeoPoint, KmScale

__all__ = [
    "MissingPattern",
    "Track",
    "ConditionalFamily",
    "chain_coefficients_matrix",
    "chain_coefficients_enumerated",
    "exact_conditional",
    "exact_conditional_enumerated",
    "partial_conditional",
    "marginalized_by_quadrature",
    "consistency_gap",
]

# tuple enumeration is exponential in the number of unsighted days
_ENUM_LIMIT = 12
_TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class MissingPattern:
    """Which of days 1..n went unsighted. Day 1 is always sighted."""

    n: int
    missing: tuple[int, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "missing", tuple(int(u) for u in self.missing))
        if self.n < 1:
            raise ValueError("history length must be at least 1")
        m = self.missing
        if any(b <= a for a, b in zip(m, m[1:])):
            raise ValueError("missing days must be strictly increasing")
        if m and (m[0] < 2 or m[-1] > self.n):
            raise ValueError("missing days must lie in 2..n")

    @property
    def L(self) -> int:
        return len(self.missing)

    @property
    def observed_days(self) -> tuple[int, ...]:
        gone = set(self.missing)
        return tuple(d for d in range(1, self.n + 1) if d not in gone)

    def observed_mask(self) -> np.ndarray:
        mask = np.ones(self.n, dtype=bool)
        if self.missing:
            mask[np.asarray(self.missing) - 1] = False
        return mask


@dataclass
class Track:
    """Sightings of one group keyed by absolute day index (>= 1)."""

    gang_id: str
    observations: dict[int, GeoPoint] = field(default_factory=dict)

    def __post_init__(self) -> None:
        clean: dict[int, GeoPoint] = {}
        for day, pt in self.observations.items():
            d = int(day)
            if d < 1:
                raise ValueError("day indices must be >= 1")
            clean[d] = GeoPoint(float(pt[0]), float(pt[1]))
        self.observations = clean

    @property
    def days(self) -> list[int]:
        return sorted(self.observations)

    @property
    def first_day(self) -> int:
        if not self.observations:
            raise EmptyHistoryError(f"track {self.gang_id!r} has no sightings")
        return min(self.observations)

    def n_before(self, day: int) -> int:
        return sum(1 for d in self.observations if d < day)

    def model_view(self, horizon: int) -> tuple[dict[int, GeoPoint], int]:
        """Re-index history so the first sighting is model day 1.

        Returns the sighted model days before the horizon and the horizon's
        own model index. Sightings on or after ``horizon`` are ignored.
        """
        start = self.first_day
        if horizon <= start:
            raise EmptyHistoryError("horizon precedes the first sighting")
        obs = {
            d - start + 1: pt for d, pt in self.observations.items() if d < horizon
        }
        return obs, horizon - start + 1

    def pattern_for(self, horizon: int) -> MissingPattern:
        obs, target = self.model_view(horizon)
        missing = tuple(d for d in range(2, target) if d not in obs)
        return MissingPattern(n=target - 1, missing=missing)


# ---- chain coefficients ----


def _log_norms(n: int, theta: float) -> np.ndarray:
    """log of the recency normaliser over 1..M days back, for M = 1..n."""
    return np.logaddexp.accumulate(-np.arange(1, n + 1) / theta)


def chain_coefficients_matrix(
    pattern: MissingPattern, theta: float
) -> tuple[np.ndarray, np.ndarray]:
    """Mixture coefficients via the matrix recurrence.

    Returns
    -------
    base : (n,) array
        Weight of each sighted day's unit-bandwidth component (zero rows
        for unsighted days).
    chain : (n, L) array
        Column m-1 holds the coefficients of the components with bandwidth
        multiplier sqrt(m+1).
    """
    if theta <= 0 or not np.isfinite(theta):
        raise ValueError("theta must be positive and finite")
    n, L = pattern.n, pattern.L
    logD = _log_norms(n, theta)
    days = np.arange(1, n + 1, dtype=float)
    obs_mask = pattern.observed_mask()
    w_next = np.exp(-(n + 1 - days) / theta - logD[n - 1])
    base = np.where(obs_mask, w_next, 0.0)
    if L == 0:
        return base, np.zeros((n, 0))

    miss = np.asarray(pattern.missing)
    # transfer[p, q] = weight of day p toward unsighted day u_q, kept only
    # where p is a sighted day strictly before u_q
    ok = obs_mask[:, None] & (days[:, None] < miss[None, :])
    expo = np.where(ok, -(miss[None, :] - days[:, None]) / theta - logD[miss - 2][None, :], -np.inf)
    transfer = np.exp(expo)
    # hop[p, q] = weight of u_p toward u_q, strictly upper triangular
    upper = miss[:, None] < miss[None, :]
    expo = np.where(upper, -(miss[None, :] - miss[:, None]) / theta - logD[miss - 2][None, :], -np.inf)
    hop = np.exp(expo)
    tail = w_next[miss - 1]

    chain = np.empty((n, L))
    v = tail.copy()
    for m in range(L):
        chain[:, m] = transfer @ v
        v = hop @ v
    return base, chain


def chain_coefficients_enumerated(
    pattern: MissingPattern, theta: float
) -> tuple[np.ndarray, np.ndarray]:
    """Mixture coefficients by direct tuple enumeration (oracle path).

    Sums, for every increasing tuple of unsighted days, the product of
    recency weights hopping along the tuple and into the target day, then
    spreads it over the sighted days preceding the tuple's first element.
    Exponential in L; refuses more than 12 unsighted days.
    """
    if theta <= 0 or not np.isfinite(theta):
        raise ValueError("theta must be positive and finite")
    n, L = pattern.n, pattern.L
    if L > _ENUM_LIMIT:
        raise ValueError(f"enumeration supports at most {_ENUM_LIMIT} missing days")
    logD = _log_norms(n, theta)

    def w(a: int, b: int) -> float:
        # weight of day a toward day b, normalised over days 1..b-1
        return float(np.exp(-(b - a) / theta - logD[b - 2]))

    days = np.arange(1, n + 1, dtype=float)
    obs_mask = pattern.observed_mask()
    w_next = np.exp(-(n + 1 - days) / theta - logD[n - 1])
    base = np.where(obs_mask, w_next, 0.0)
    chain = np.zeros((n, L))
    miss = pattern.missing
    for m in range(1, L + 1):
        for combo in itertools.combinations(range(L), m):
            u = [miss[k] for k in combo]
            prod = w(u[-1], n + 1)
            for a, b in zip(u[:-1], u[1:]):
                prod *= w(a, b)
            first = u[0]
            for j in pattern.observed_days:
                if j >= first:
                    break
                chain[j - 1, m - 1] += prod * w(j, first)
    return base, chain


# ---- mixtures over a track ----


def _history_arrays(
    track: Track, horizon: int
) -> tuple[MissingPattern, np.ndarray, np.ndarray]:
    obs, target = track.model_view(horizon)
    if not obs:
        raise EmptyHistoryError("no sightings before the horizon")
    pattern = MissingPattern(n=target - 1, missing=tuple(
        d for d in range(2, target) if d not in obs
    ))
    days = np.array(sorted(obs))
    pts = np.array([obs[d] for d in sorted(obs)], dtype=float)
    return pattern, days, pts


def _assemble(
    pts: np.ndarray,
    days: np.ndarray,
    base: np.ndarray,
    chain: np.ndarray,
    h: float,
    scale: KmScale,
) -> GaussianMixture:
    centers = [pts]
    mults = [np.ones(len(days))]
    weights = [base[days - 1]]
    for m in range(chain.shape[1]):
        coef = chain[days - 1, m]
        keep = coef > 0.0
        if not np.any(keep):
            continue
        centers.append(pts[keep])
        mults.append(np.full(int(keep.sum()), np.sqrt(m + 2.0)))
        weights.append(coef[keep])
    return GaussianMixture(
        np.concatenate(centers),
        np.concatenate(mults),
        np.concatenate(weights),
        h,
        scale,
    )


def exact_conditional(
    track: Track, horizon: int, params: ModelParams, scale: KmScale
) -> GaussianMixture:
    """Exact next-location density given the sighted history (matrix path)."""
    pattern, days, pts = _history_arrays(track, horizon)
    base, chain = chain_coefficients_matrix(pattern, params.theta)
    return _assemble(pts, days, base, chain, params.h, scale)


def exact_conditional_enumerated(
    track: Track, horizon: int, params: ModelParams, scale: KmScale
) -> GaussianMixture:
    """Same density via tuple enumeration; oracle for small L."""
    pattern, days, pts = _history_arrays(track, horizon)
    base, chain = chain_coefficients_enumerated(pattern, params.theta)
    return _assemble(pts, days, base, chain, params.h, scale)


def partial_conditional(
    track: Track, horizon: int, params: ModelParams, scale: KmScale
) -> GaussianMixture:
    """Baseline that renormalises recency weights over sighted days only.

    Ignores what the unsighted days imply about dispersion, so it is not
    consistent with the complete-data model; see :func:`consistency_gap`.
    """
    pattern, days, pts = _history_arrays(track, horizon)
    target = pattern.n + 1
    expo = -(target - days.astype(float)) / params.theta
    expo -= expo.max()
    w = np.exp(expo)
    w /= w.sum()
    return GaussianMixture(pts, np.ones(len(days)), w, params.h, scale)


# ---- fast point evaluation over many parameter values ----


class ConditionalFamily:
    """One track/horizon evaluated at a point for many (theta, h) pairs.

    Chain coefficients depend on theta only and are memoised; the kernel
    table at a point depends on h only. Grouping by distinct values keeps
    the per-pair work to an elementwise product.
    """

    def __init__(self, track: Track, horizon: int, scale: KmScale, method: str = "exact"):
        if method not in ("exact", "partial"):
            raise ValueError("method must be 'exact' or 'partial'")
        self.method = method
        self.scale = scale
        self.pattern, self._days, self._pts = _history_arrays(track, horizon)
        self._coef_cache: dict[float, np.ndarray] = {}

    def _coef(self, theta: float) -> np.ndarray:
        """(n_obs, L+1) coefficient table; column 0 is the base weight."""
        got = self._coef_cache.get(theta)
        if got is not None:
            return got
        if self.method == "exact" and self.pattern.L > 0:
            base, chain = chain_coefficients_matrix(self.pattern, theta)
            table = np.column_stack((base[self._days - 1], chain[self._days - 1, :]))
        else:
            # no gaps: both likelihood variants are the same softmax weights,
            # computed identically so they agree to the last bit
            target = self.pattern.n + 1
            expo = -(target - self._days.astype(float)) / theta
            expo -= expo.max()
            w = np.exp(expo)
            table = (w / w.sum())[:, None]
        self._coef_cache[theta] = table
        return table

    def density_at(self, point, thetas, hs) -> np.ndarray:
        """Density at one point for each (theta, h) pair (paired arrays)."""
        thetas = np.asarray(thetas, dtype=float).ravel()
        hs = np.asarray(hs, dtype=float).ravel()
        if thetas.shape != hs.shape:
            raise ValueError("thetas and hs must pair up")
        point = np.asarray(point, dtype=float)
        dx = (point[0] - self._pts[:, 0]) / self.scale.delta_lon
        dy = (point[1] - self._pts[:, 1]) / self.scale.delta_lat
        r2 = dx * dx + dy * dy  # squared km distance to each sighted location
        n_cols = 1 if self.method == "partial" else self.pattern.L + 1
        mult2 = np.arange(1, n_cols + 1, dtype=float)
        area = self.scale.delta_lon * self.scale.delta_lat
        out = np.empty(thetas.size)
        kern_cache: dict[float, np.ndarray] = {}
        for idx in range(thetas.size):
            h = hs[idx]
            kern = kern_cache.get(h)
            if kern is None:
                var = h * h * mult2
                kern = np.exp(-0.5 * r2[:, None] / var) / (_TWO_PI * var * area)
                kern_cache[h] = kern
            out[idx] = float(np.sum(self._coef(thetas[idx]) * kern))
        return out

    def weighted_density(self, points, thetas, hs, weights) -> np.ndarray:
        """Weight-averaged density over many points: sum_j w_j f_(theta_j,h_j).

        Particles sharing a bandwidth share one kernel pass; their
        coefficient tables collapse into a single weighted table first, so
        the grid work scales with distinct bandwidths, not particles.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        thetas = np.asarray(thetas, dtype=float).ravel()
        hs = np.asarray(hs, dtype=float).ravel()
        weights = np.asarray(weights, dtype=float).ravel()
        if not thetas.shape == hs.shape == weights.shape:
            raise ValueError("thetas, hs, weights must pair up")
        n_cols = 1 if self.method == "partial" else self.pattern.L + 1
        mult2 = np.arange(1, n_cols + 1, dtype=float)
        area = self.scale.delta_lon * self.scale.delta_lat
        out = np.zeros(points.shape[0])
        step = max(1, int(2**21 // max(1, self._pts.shape[0])))
        for h in np.unique(hs):
            sel = np.flatnonzero(hs == h)
            comb = np.zeros((self._pts.shape[0], n_cols))
            for j in sel:
                comb += weights[j] * self._coef(thetas[j])
            comb = comb / (_TWO_PI * h * h * mult2 * area)
            inv_var = 0.5 / (h * h * mult2)
            for lo in range(0, points.shape[0], step):
                chunk = points[lo : lo + step]
                dx = (chunk[:, 0, None] - self._pts[None, :, 0]) / self.scale.delta_lon
                dy = (chunk[:, 1, None] - self._pts[None, :, 1]) / self.scale.delta_lat
                r2 = dx * dx + dy * dy
                acc = np.zeros(chunk.shape[0])
                for m in range(n_cols):
                    col = comb[:, m]
                    if not col.any():
                        continue
                    acc += np.exp(-r2 * inv_var[m]) @ col
                out[lo : lo + chunk.shape[0]] += acc
        return out


# ---- quadrature oracle ----


def _kern_cross(points: np.ndarray, centers: np.ndarray, h: float, scale: KmScale) -> np.ndarray:
    """(p, m) kernel table between point rows and centre rows, chunked."""
    out = np.empty((points.shape[0], centers.shape[0]))
    s1 = h * scale.delta_lon
    s2 = h * scale.delta_lat
    step = max(1, int(2**22 // max(1, centers.shape[0])))
    for lo in range(0, points.shape[0], step):
        chunk = points[lo : lo + step]
        dx = (chunk[:, 0, None] - centers[None, :, 0]) / s1
        dy = (chunk[:, 1, None] - centers[None, :, 1]) / s2
        out[lo : lo + chunk.shape[0]] = np.exp(-0.5 * (dx * dx + dy * dy)) / (_TWO_PI * s1 * s2)
    return out


def _trap_weights(nodes: np.ndarray) -> np.ndarray:
    step = nodes[1] - nodes[0]
    w = np.full(nodes.size, step)
    w[0] = w[-1] = step / 2.0
    return w


def _plugin_eval(
    obs: dict[int, GeoPoint],
    target: int,
    theta: float,
    h: float,
    scale: KmScale,
    step_km: float,
    points: np.ndarray,
) -> np.ndarray:
    """Evaluate the marginalised conditional for ``target`` by quadrature.

    Every unsighted day before the target is integrated out on a tensor
    trapezoid grid, with its own conditional obtained by recursion. No part
    of the closed form is reused here.
    """
    days = sorted(d for d in obs if d < target)
    w = decay_weights(target, theta)
    missing = [d for d in range(1, target) if d not in obs]
    pts = np.array([obs[d] for d in days], dtype=float)
    base = _kern_cross(points, pts, h, scale) @ np.array([w[d - 1] for d in days])
    if not missing:
        return base

    pad = (8.0 * np.sqrt(len(missing) + 1.0) + 2.0) * h
    masses = []
    transported = []
    for u in missing:
        before = np.array([obs[d] for d in days if d < u], dtype=float)
        lo_lon = before[:, 0].min() - pad * scale.delta_lon
        hi_lon = before[:, 0].max() + pad * scale.delta_lon
        lo_lat = before[:, 1].min() - pad * scale.delta_lat
        hi_lat = before[:, 1].max() + pad * scale.delta_lat
        nx = int(np.ceil((hi_lon - lo_lon) / (step_km * scale.delta_lon))) + 1
        ny = int(np.ceil((hi_lat - lo_lat) / (step_km * scale.delta_lat))) + 1
        xs = np.linspace(lo_lon, hi_lon, nx)
        ys = np.linspace(lo_lat, hi_lat, ny)
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        nodes = np.column_stack((gx.ravel(), gy.ravel()))
        vol = np.outer(_trap_weights(xs), _trap_weights(ys)).ravel()
        q = _plugin_eval(obs, u, theta, h, scale, step_km, nodes) * vol
        masses.append(float(q.sum()))
        transported.append(w[u - 1] * (_kern_cross(points, nodes, h, scale) @ q))

    total_mass = float(np.prod(masses))
    vals = base * total_mass
    for k in range(len(missing)):
        others = total_mass / masses[k] if masses[k] > 0 else 0.0
        vals = vals + transported[k] * others
    return vals


def marginalized_by_quadrature(
    track: Track,
    horizon: int,
    params: ModelParams,
    scale: KmScale,
    points,
    tol: float = 1e-6,
) -> np.ndarray:
    """Next-location density by numerically marginalising unsighted days.

    Refines the grid until two successive estimates agree within ``tol``
    at every requested point. Independent of the closed-form path, so it
    serves as its oracle.
    """
    obs, target = track.model_view(horizon)
    if 1 not in obs:
        raise EmptyHistoryError("the first sighting must precede the horizon")
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    prev = None
    for step_km in (params.h / 3.0, params.h / 4.0, params.h / 6.0):
        vals = _plugin_eval(obs, target, params.theta, params.h, scale, step_km, pts)
        if prev is not None and np.max(np.abs(vals - prev)) < tol:
            return vals
        prev = vals
    return prev


def consistency_gap(
    track: Track,
    params: ModelParams,
    scale: KmScale,
    method: str = "exact",
    horizon: int | None = None,
    probes=None,
) -> tuple[np.ndarray, np.ndarray, float]:
    """Both sides of the marginalisation identity for one model variant.

    The left side is the variant's own incomplete-history density; the right
    side marginalises the complete-history model over the unsighted days by
    quadrature. The exact variant closes the gap to quadrature error; the
    renormalised baseline does not.

    Returns (lhs values, rhs values, max abs gap) over the probe points.
    """
    if horizon is None:
        horizon = max(track.observations) + 1
    if probes is None:
        pts = np.array([track.observations[d] for d in track.days], dtype=float)
        mid = pts.mean(axis=0)
        span = np.linspace(-1.5 * params.h, 1.5 * params.h, 3)
        gx, gy = np.meshgrid(mid[0] + span * scale.delta_lon, mid[1] + span * scale.delta_lat)
        probes = np.column_stack((gx.ravel(), gy.ravel()))
    probes = np.atleast_2d(np.asarray(probes, dtype=float))
    if method == "exact":
        mix = exact_conditional(track, horizon, params, scale)
    elif method == "partial":
        mix = partial_conditional(track, horizon, params, scale)
    else:
        raise ValueError("method must be 'exact' or 'partial'")
    lhs = np.atleast_1d(mix.pdf(probes))
    rhs = marginalized_by_quadrature(track, horizon, params, scale, probes)
    return lhs, rhs, float(np.max(np.abs(lhs - rhs)))
