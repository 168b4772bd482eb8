"""Kernel, recency weights, and mixture behaviour.

Expected values here are computed with plain python math (or a grid sum
written out in the test) rather than through the library's own code.
"""

import math

import numpy as np
import pytest

from movecast.density import (
    GaussianMixture,
    ModelParams,
    convolution_identity_gap,
    decay_weight,
    decay_weights,
    full_conditional,
    kernel2,
    mixture_eval,
)
from movecast.errors import EmptyHistoryError
from movecast.geo import KmScale

_SCALE = KmScale(ref_lat=23.5)


# ---- kernel ----


def test_kernel_peak_value():
    """Unit bandwidths put 1/(2*pi) at the origin."""
    assert kernel2((0.0, 0.0), (1.0, 1.0)) == pytest.approx(1.0 / (2.0 * math.pi), abs=1e-15)


def test_kernel_anisotropic_peak():
    b = (0.3, 0.5)
    assert kernel2((0.0, 0.0), b) == pytest.approx(1.0 / (2.0 * math.pi * 0.15), rel=1e-12)


def test_kernel_point_symmetry():
    rng = np.random.default_rng(3)
    z = rng.normal(size=(50, 2))
    b = (0.7, 0.4)
    assert np.allclose(kernel2(z, b), kernel2(-z, b), rtol=0, atol=0)


def test_kernel_mass_one_by_grid_sum():
    """Riemann sum over +-8 bandwidths integrates to one."""
    b = (0.3, 0.5)
    x = np.linspace(-8 * b[0], 8 * b[0], 801)
    y = np.linspace(-8 * b[1], 8 * b[1], 801)
    gx, gy = np.meshgrid(x, y)
    vals = kernel2(np.stack([gx, gy], axis=-1), b)
    mass = vals.sum() * (x[1] - x[0]) * (y[1] - y[0])
    assert mass == pytest.approx(1.0, abs=1e-6)


def test_kernel_rejects_bad_bandwidth():
    with pytest.raises(ValueError):
        kernel2((0.0, 0.0), (0.0, 1.0))
    with pytest.raises(ValueError):
        kernel2((0.0, 0.0), (1.0, -1.0))


# ---- recency weights ----


def test_single_day_gets_all_weight():
    assert decay_weight(1, 2, theta=3.0) == 1.0


def test_weights_flatten_for_long_memory():
    w = decay_weights(6, theta=1e9)
    assert np.allclose(w, 0.2, atol=1e-6)


def test_weights_match_hand_softmax():
    """theta=4, three days: proportional to exp(-3/4), exp(-2/4), exp(-1/4)."""
    raw = [math.exp(-3 / 4), math.exp(-2 / 4), math.exp(-1 / 4)]
    tot = sum(raw)
    w = decay_weights(4, theta=4.0)
    for i in range(3):
        assert w[i] == pytest.approx(raw[i] / tot, rel=1e-14)


def test_weights_sum_to_one_and_increase():
    rng = np.random.default_rng(11)
    for _ in range(100):
        n = int(rng.integers(1, 60))
        theta = float(10 ** rng.uniform(-1, 3))
        w = decay_weights(n + 1, theta)
        assert w.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.all(np.diff(w) > 0) or n == 1
        assert np.all(w >= 0)


def test_weights_survive_tiny_theta():
    """Memory far below one day concentrates all weight on the last day."""
    w = decay_weights(51, theta=0.01)
    assert np.isfinite(w).all()
    assert w[-1] == pytest.approx(1.0, abs=1e-12)


def test_weight_scalar_accessor_validates():
    with pytest.raises(ValueError):
        decay_weight(0, 4, theta=2.0)
    with pytest.raises(ValueError):
        decay_weight(4, 4, theta=2.0)
    with pytest.raises(ValueError):
        decay_weights(4, theta=-1.0)


# ---- params and mixtures ----


def test_params_validation():
    with pytest.raises(ValueError):
        ModelParams(theta=0.0, h=1.0)
    with pytest.raises(ValueError):
        ModelParams(theta=1.0, h=-2.0)
    with pytest.raises(ValueError):
        ModelParams(theta=math.inf, h=1.0)


def test_mixture_requires_components_and_valid_weights():
    with pytest.raises(EmptyHistoryError):
        GaussianMixture(np.empty((0, 2)), np.empty(0), np.empty(0), 1.0, _SCALE)
    with pytest.raises(ValueError):
        GaussianMixture([[0.0, 0.0]], [1.0], [0.5], 1.0, _SCALE)
    with pytest.raises(ValueError):
        GaussianMixture([[0.0, 0.0], [1.0, 1.0]], [1.0, 1.0], [0.7, -0.3], 1.0, _SCALE)


def test_mixture_single_component_peak():
    h = 2.0
    mix = GaussianMixture([[78.0, 23.0]], [1.0], [1.0], h, _SCALE)
    peak = 1.0 / (2.0 * math.pi * (h * _SCALE.delta_lon) * (h * _SCALE.delta_lat))
    assert mix.pdf((78.0, 23.0)) == pytest.approx(peak, rel=1e-12)


def test_mixture_eval_matches_direct_sum():
    """pdf agrees with a per-component loop written out in the test."""
    rng = np.random.default_rng(5)
    centers = rng.uniform(77.5, 78.5, size=(6, 2))
    mults = np.array([1.0, 1.0, math.sqrt(2), math.sqrt(2), math.sqrt(3), 1.0])
    w = rng.uniform(0.1, 1.0, size=6)
    w /= w.sum()
    mix = GaussianMixture(centers, mults, w, 1.5, _SCALE)
    pts = rng.uniform(77.5, 78.5, size=(40, 2))
    expect = np.zeros(40)
    for k in range(6):
        s1 = mults[k] * 1.5 * _SCALE.delta_lon
        s2 = mults[k] * 1.5 * _SCALE.delta_lat
        q = ((pts[:, 0] - centers[k, 0]) / s1) ** 2 + ((pts[:, 1] - centers[k, 1]) / s2) ** 2
        expect += w[k] * np.exp(-0.5 * q) / (2.0 * math.pi * s1 * s2)
    assert np.allclose(mixture_eval(mix, pts), expect, rtol=1e-12)


def test_mixture_mass_one_by_grid_sum():
    centers = np.array([[78.0, 23.0], [78.05, 23.02], [77.95, 22.98]])
    mix = GaussianMixture(centers, [1.0, 2.0, 1.0], [0.5, 0.25, 0.25], 1.0, _SCALE)
    pad = 10 * 2.0 * 1.0
    x = np.linspace(78.0 - pad * _SCALE.delta_lon, 78.0 + pad * _SCALE.delta_lon, 901)
    y = np.linspace(23.0 - pad * _SCALE.delta_lat, 23.0 + pad * _SCALE.delta_lat, 901)
    gx, gy = np.meshgrid(x, y)
    vals = mix.pdf(np.column_stack((gx.ravel(), gy.ravel())))
    mass = vals.sum() * (x[1] - x[0]) * (y[1] - y[0])
    assert mass == pytest.approx(1.0, abs=1e-4)


def test_mixture_sampling_moments():
    """Sample mean and spread track the component layout."""
    mix = GaussianMixture([[78.0, 23.0]], [1.0], [1.0], 2.0, _SCALE)
    draws = mix.sample(np.random.default_rng(42), size=20000)
    assert draws.mean(axis=0) == pytest.approx([78.0, 23.0], abs=3e-4)
    assert draws[:, 0].std() == pytest.approx(2.0 * _SCALE.delta_lon, rel=0.03)
    assert draws[:, 1].std() == pytest.approx(2.0 * _SCALE.delta_lat, rel=0.03)


# ---- next-day conditional ----


def test_full_conditional_single_point():
    mix = full_conditional([[78.0, 23.0]], theta=4.0, h=1.0, scale=_SCALE)
    assert mix.n_components == 1
    assert mix.weights[0] == 1.0
    assert mix.scale_mults[0] == 1.0


def test_full_conditional_weights_follow_recency():
    hist = [[78.0, 23.0], [78.01, 23.0], [78.02, 23.01]]
    mix = full_conditional(hist, theta=4.0, h=1.0, scale=_SCALE)
    raw = [math.exp(-3 / 4), math.exp(-2 / 4), math.exp(-1 / 4)]
    tot = sum(raw)
    assert np.allclose(mix.weights, [r / tot for r in raw], rtol=1e-14)
    assert np.allclose(mix.centers, hist)


def test_full_conditional_empty_history_raises():
    with pytest.raises(EmptyHistoryError):
        full_conditional(np.empty((0, 2)), theta=2.0, h=1.0, scale=_SCALE)


# ---- kernel self-convolution rule ----


def test_convolution_rule_unit_taus():
    gap = convolution_identity_gap(1.0, 1.0, _SCALE)
    assert gap < 1e-6


def test_convolution_rule_near_delta():
    """A vanishing second kernel leaves the first essentially unchanged."""
    gap = convolution_identity_gap(1.0, 1e-4, _SCALE)
    assert gap < 1e-3


def test_convolution_rule_random_taus():
    rng = np.random.default_rng(19)
    for _ in range(20):
        t1 = float(rng.uniform(0.3, 4.0))
        t2 = float(rng.uniform(0.3, 4.0))
        assert convolution_identity_gap(t1, t2, _SCALE) < 1e-5


def test_convolution_rule_rejects_bad_tau():
    with pytest.raises(ValueError):
        convolution_identity_gap(0.0, 1.0, _SCALE)
