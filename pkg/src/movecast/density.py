"""Recency-weighted Gaussian kernel model for a moving group's next location.

Conventions
-----------
* days are integer indices starting at 1; a "target" day is the one being
  predicted and its history is days 1..target-1
* bandwidths are quoted in km and converted to degrees per axis through a
  KmScale, so kernels are anisotropic in degrees but circular on the ground
* densities are per square degree unless stated otherwise
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyHistoryError
from .geo import KmScale

__all__ = [
    "ModelParams",
    "GaussianMixture",
    "kernel2",
    "decay_weight",
    "decay_weights",
    "full_conditional",
    "mixture_eval",
    "convolution_identity_gap",
]

_TWO_PI = 2.0 * np.pi
# tolerance on a mixture's total weight; anything beyond this is a construction bug
_WEIGHT_SUM_TOL = 1e-9


@dataclass(frozen=True)
class ModelParams:
    """Movement-model parameters: memory length (days) and dispersion (km)."""

    theta: float
    h: float

    def __post_init__(self) -> None:
        if not (np.isfinite(self.theta) and self.theta > 0):
            raise ValueError("theta must be positive and finite")
        if not (np.isfinite(self.h) and self.h > 0):
            raise ValueError("h must be positive and finite")


def kernel2(z, bandwidth) -> np.ndarray | float:
    """Product-Gaussian kernel density at planar offsets ``z``.

    Parameters
    ----------
    z : array_like, shape (..., 2)
        Offsets (lon, lat) in degrees.
    bandwidth : (float, float)
        Standard deviations (lon, lat) in degrees, both positive.

    Returns
    -------
    Density per square degree, one value per offset.
    """
    b1, b2 = float(bandwidth[0]), float(bandwidth[1])
    if b1 <= 0 or b2 <= 0:
        raise ValueError("bandwidth components must be positive")
    z = np.asarray(z, dtype=float)
    quad = (z[..., 0] / b1) ** 2 + (z[..., 1] / b2) ** 2
    out = np.exp(-0.5 * quad) / (_TWO_PI * b1 * b2)
    return float(out) if out.ndim == 0 else out


def decay_weights(target: int, theta: float, n: int | None = None) -> np.ndarray:
    """Normalized recency weights of days 1..n toward day ``target``.

    Day i gets weight proportional to exp(-(target - i) / theta); the vector
    sums to one. Computed as a shifted softmax so that very short memories
    (theta well under a day) do not underflow.
    """
    if n is None:
        n = target - 1
    if theta <= 0 or not np.isfinite(theta):
        raise ValueError("theta must be positive and finite")
    if not 1 <= n < target:
        raise ValueError("need 1 <= n < target")
    expo = -(target - np.arange(1, n + 1, dtype=float)) / theta
    expo -= expo.max()
    w = np.exp(expo)
    return w / w.sum()


def decay_weight(i: int, target: int, theta: float, n: int | None = None) -> float:
    """Single recency weight of day ``i`` toward day ``target``."""
    if n is None:
        n = target - 1
    if not 1 <= i <= n:
        raise ValueError("need 1 <= i <= n")
    return float(decay_weights(target, theta, n)[i - 1])


@dataclass(frozen=True)
class GaussianMixture:
    """Weighted product-Gaussian mixture over the plane.

    Component k is centred at ``centers[k]`` with per-axis standard
    deviation ``scale_mults[k] * bandwidth_km * scale.delta_*`` degrees.
    Weights are strictly positive and sum to one.
    """

    centers: np.ndarray
    scale_mults: np.ndarray
    weights: np.ndarray
    bandwidth_km: float
    scale: KmScale

    def __post_init__(self) -> None:
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        mults = np.asarray(self.scale_mults, dtype=float).ravel()
        weights = np.asarray(self.weights, dtype=float).ravel()
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "scale_mults", mults)
        object.__setattr__(self, "weights", weights)
        k = centers.shape[0]
        if centers.ndim != 2 or centers.shape[1] != 2:
            raise ValueError("centers must be an (k, 2) array")
        if mults.shape != (k,) or weights.shape != (k,):
            raise ValueError("scale_mults and weights must match centers in length")
        if k == 0:
            raise EmptyHistoryError("mixture needs at least one component")
        if self.bandwidth_km <= 0:
            raise ValueError("bandwidth_km must be positive")
        if np.any(mults <= 0):
            raise ValueError("scale multipliers must be positive")
        if np.any(weights <= 0):
            raise ValueError("component weights must be positive")
        if abs(weights.sum() - 1.0) > _WEIGHT_SUM_TOL:
            raise ValueError("component weights must sum to one")

    @property
    def n_components(self) -> int:
        return self.centers.shape[0]

    def pdf(self, points) -> np.ndarray | float:
        """Density per square degree at one point or an (p, 2) array."""
        pts = np.asarray(points, dtype=float)
        single = pts.ndim == 1
        pts = np.atleast_2d(pts)
        sig_lon = self.scale_mults * self.bandwidth_km * self.scale.delta_lon
        sig_lat = self.scale_mults * self.bandwidth_km * self.scale.delta_lat
        norm = self.weights / (_TWO_PI * sig_lon * sig_lat)
        out = np.empty(pts.shape[0])
        # chunk the points axis so the (p, k) broadcast stays in cache
        step = max(1, int(2**20 // max(1, self.n_components)))
        for lo in range(0, pts.shape[0], step):
            chunk = pts[lo : lo + step]
            dx = (chunk[:, 0, None] - self.centers[None, :, 0]) / sig_lon
            dy = (chunk[:, 1, None] - self.centers[None, :, 1]) / sig_lat
            out[lo : lo + chunk.shape[0]] = np.exp(-0.5 * (dx * dx + dy * dy)) @ norm
        return float(out[0]) if single else out

    def sample(self, rng: np.random.Generator, size: int = 1) -> np.ndarray:
        """Draw ``size`` points; component choice first, then the kernel."""
        comp = rng.choice(self.n_components, size=size, p=self.weights / self.weights.sum())
        sig_lon = self.scale_mults[comp] * self.bandwidth_km * self.scale.delta_lon
        sig_lat = self.scale_mults[comp] * self.bandwidth_km * self.scale.delta_lat
        noise = rng.standard_normal((size, 2))
        return self.centers[comp] + noise * np.column_stack((sig_lon, sig_lat))


def mixture_eval(mixture: GaussianMixture, points) -> np.ndarray | float:
    """Evaluate a mixture density; see :meth:`GaussianMixture.pdf`."""
    return mixture.pdf(points)


def full_conditional(history, theta: float, h: float, scale: KmScale) -> GaussianMixture:
    """Next-day location density given a fully observed history.

    ``history`` holds the locations of days 1..n in order; the returned
    mixture places a kernel of bandwidth ``h`` km at each of them with
    recency weights toward day n+1.
    """
    pts = np.atleast_2d(np.asarray(history, dtype=float))
    if pts.shape[0] == 0:
        raise EmptyHistoryError("history must contain at least one location")
    ModelParams(theta, h)  # validate
    n = pts.shape[0]
    w = decay_weights(n + 1, theta)
    return GaussianMixture(pts, np.ones(n), w, h, scale)


# ---- numerical check of the kernel self-convolution rule ----


def _gauss1(t: np.ndarray, sd: float) -> np.ndarray:
    return np.exp(-0.5 * (t / sd) ** 2) / (np.sqrt(_TWO_PI) * sd)


def _conv1d(ds: float, sd1: float, sd2: float) -> float:
    """Trapezoid value of the 1-d convolution of two centred Gaussians at ``ds``.

    Uniform nodes fine enough for the narrower factor; the smooth decay at
    the window edges makes the trapezoid rule effectively exact here.
    """
    lo = min(0.0, ds) - 9.0 * max(sd1, sd2)
    hi = max(0.0, ds) + 9.0 * max(sd1, sd2)
    m = int(np.ceil((hi - lo) / (min(sd1, sd2) / 4.0))) + 1
    x = np.linspace(lo, hi, min(m, 2_000_001))
    return float(np.trapezoid(_gauss1(ds - x, sd1) * _gauss1(x, sd2), x))


def convolution_identity_gap(
    tau1: float,
    tau2: float,
    scale: KmScale,
    offsets_km=None,
) -> float:
    """Worst absolute gap between a kernel convolution and its closed form.

    Numerically integrates kernel(s - z, tau1) * kernel(z - c, tau2) over z
    and compares with kernel(s - c, sqrt(tau1^2 + tau2^2)) for a set of
    probe separations ``s - c`` given in km. Both taus are in km. The kernel
    factorises over axes, so the plane integral is taken as the product of
    two one-dimensional convolutions.
    """
    if tau1 <= 0 or tau2 <= 0:
        raise ValueError("taus must be positive")
    if offsets_km is None:
        offsets_km = [(0.0, 0.0), (0.4, -0.3), (1.1, 0.6), (-1.8, 1.3), (2.6, -2.2)]
    tau_c = float(np.hypot(tau1, tau2))
    sig_c = (tau_c * scale.delta_lon, tau_c * scale.delta_lat)

    worst = 0.0
    for off in offsets_km:
        dx = off[0] * scale.delta_lon
        dy = off[1] * scale.delta_lat
        est = _conv1d(dx, tau1 * scale.delta_lon, tau2 * scale.delta_lon) * _conv1d(
            dy, tau1 * scale.delta_lat, tau2 * scale.delta_lat
        )
        ref = kernel2((dx, dy), sig_c)
        worst = max(worst, abs(est - ref))
    return worst
