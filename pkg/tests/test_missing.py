"""Incomplete-history likelihood: coefficients, mixtures, and oracles.

Hand-expanded coefficient values are derived in the tests with plain
python floats; the quadrature comparisons use integration code written
out here rather than the library's own.
"""

import math

import numpy as np
import pytest

from movecast.density import ModelParams, full_conditional
from movecast.errors import EmptyHistoryError
from movecast.geo import KmScale
from movecast.missing import (
    ConditionalFamily,
    MissingPattern,
    Track,
    chain_coefficients_enumerated,
    chain_coefficients_matrix,
    consistency_gap,
    exact_conditional,
    exact_conditional_enumerated,
    marginalized_by_quadrature,
    partial_conditional,
)

_SCALE = KmScale(ref_lat=23.5)


def _w(a: int, b: int, theta: float) -> float:
    """Recency weight of day a toward day b, normalised over 1..b-1."""
    num = math.exp(-(b - a) / theta)
    den = sum(math.exp(-(b - j) / theta) for j in range(1, b))
    return num / den


def _track(points, days=None, gang="g1") -> Track:
    if days is None:
        days = range(1, len(points) + 1)
    return Track(gang, {d: tuple(p) for d, p in zip(days, points)})


# ---- pattern and track plumbing ----


def test_pattern_validation():
    MissingPattern(5, (2, 4))
    with pytest.raises(ValueError):
        MissingPattern(5, (1,))  # day 1 can never be missing
    with pytest.raises(ValueError):
        MissingPattern(5, (6,))
    with pytest.raises(ValueError):
        MissingPattern(5, (3, 3))
    with pytest.raises(ValueError):
        MissingPattern(0, ())


def test_pattern_observed_days():
    p = MissingPattern(6, (2, 5))
    assert p.observed_days == (1, 3, 4, 6)
    assert p.L == 2
    assert p.observed_mask().tolist() == [True, False, True, True, False, True]


def test_track_rebases_to_first_sighting():
    tr = Track("a", {57: (78.0, 23.0), 59: (78.01, 23.0), 60: (78.02, 23.01)})
    pat = tr.pattern_for(62)
    assert pat.n == 5
    assert pat.missing == (2, 5)
    obs, target = tr.model_view(62)
    assert target == 6
    assert sorted(obs) == [1, 3, 4]


def test_track_ignores_future_sightings():
    tr = Track("a", {1: (78.0, 23.0), 2: (78.0, 23.0), 9: (78.1, 23.1)})
    pat = tr.pattern_for(3)
    assert pat.n == 2 and pat.missing == ()


def test_track_validation():
    with pytest.raises(ValueError):
        Track("a", {0: (78.0, 23.0)})
    with pytest.raises(EmptyHistoryError):
        Track("a", {}).first_day
    with pytest.raises(EmptyHistoryError):
        Track("a", {5: (78.0, 23.0)}).model_view(5)


# ---- chain coefficients ----


def test_complete_history_has_no_chain():
    pat = MissingPattern(4, ())
    base, chain = chain_coefficients_matrix(pat, theta=3.0)
    assert chain.shape == (4, 0)
    expect = [_w(i, 5, 3.0) for i in range(1, 5)]
    assert np.allclose(base, expect, rtol=1e-14)


def test_single_gap_hand_expansion():
    """n=2 with day 2 unsighted: all mass lands on day 1 at two widths."""
    th = 2.5
    pat = MissingPattern(2, (2,))
    for fn in (chain_coefficients_matrix, chain_coefficients_enumerated):
        base, chain = fn(pat, th)
        assert base[0] == pytest.approx(_w(1, 3, th), rel=1e-14)
        assert base[1] == 0.0
        # day 2's weight arrives through the chain with w(1,2) = 1
        assert chain[0, 0] == pytest.approx(_w(2, 3, th), rel=1e-14)
        assert chain[1, 0] == 0.0


def test_double_gap_hand_expansion():
    """n=3 with days 2 and 3 unsighted: three chain routes to day 1."""
    th = 4.0
    pat = MissingPattern(3, (2, 3))
    for fn in (chain_coefficients_matrix, chain_coefficients_enumerated):
        base, chain = fn(pat, th)
        assert base[0] == pytest.approx(_w(1, 4, th), rel=1e-14)
        # single hops: through day 2 alone, and through day 3 alone
        m1 = _w(2, 4, th) * 1.0 + _w(3, 4, th) * _w(1, 3, th)
        assert chain[0, 0] == pytest.approx(m1, rel=1e-13)
        # double hop 2 -> 3 -> target
        m2 = _w(2, 3, th) * _w(3, 4, th) * 1.0
        assert chain[0, 1] == pytest.approx(m2, rel=1e-13)
        total = base.sum() + chain.sum()
        assert total == pytest.approx(1.0, abs=1e-12)


def test_matrix_and_enumerated_agree_randomly():
    rng = np.random.default_rng(23)
    for _ in range(40):
        n = int(rng.integers(2, 25))
        L = int(rng.integers(1, min(n - 1, 8) + 1))
        missing = tuple(sorted(rng.choice(np.arange(2, n + 1), size=L, replace=False)))
        pat = MissingPattern(n, missing)
        theta = float(10 ** rng.uniform(0, 2))
        b1, c1 = chain_coefficients_matrix(pat, theta)
        b2, c2 = chain_coefficients_enumerated(pat, theta)
        assert np.max(np.abs(b1 - b2)) < 1e-12
        assert np.max(np.abs(c1 - c2)) < 1e-12
        assert b1.sum() + c1.sum() == pytest.approx(1.0, abs=1e-9)


def test_enumeration_refuses_large_patterns():
    pat = MissingPattern(20, tuple(range(2, 15)))
    with pytest.raises(ValueError):
        chain_coefficients_enumerated(pat, theta=2.0)


def test_coefficients_reject_bad_theta():
    with pytest.raises(ValueError):
        chain_coefficients_matrix(MissingPattern(3, (2,)), theta=0.0)


# ---- mixtures ----


def test_exact_mixture_reduces_to_complete_case():
    pts = [[78.0, 23.0], [78.01, 23.005], [78.02, 23.01]]
    tr = _track(pts)
    params = ModelParams(theta=4.0, h=1.0)
    mix = exact_conditional(tr, 4, params, _SCALE)
    ref = full_conditional(pts, 4.0, 1.0, _SCALE)
    probe = np.array([[78.005, 23.002], [78.03, 23.02]])
    assert np.allclose(mix.pdf(probe), ref.pdf(probe), rtol=1e-13)
    assert np.allclose(partial_conditional(tr, 4, params, _SCALE).pdf(probe), ref.pdf(probe), rtol=1e-13)


def test_mixture_centers_and_multipliers_bound():
    tr = _track([[78.0, 23.0], [78.01, 23.0], [78.02, 23.01]], days=[1, 3, 5])
    params = ModelParams(theta=3.0, h=1.2)
    mix = exact_conditional(tr, 6, params, _SCALE)
    # components may only sit at the three sighted locations
    uniq = {tuple(c) for c in np.round(mix.centers, 10)}
    assert uniq <= {(78.0, 23.0), (78.01, 23.0), (78.02, 23.01)}
    assert mix.scale_mults.max() <= math.sqrt(tr.pattern_for(6).L + 1) + 1e-12
    assert mix.weights.sum() == pytest.approx(1.0, abs=1e-9)


def test_partial_renormalises_observed_weights():
    th = 3.0
    tr = _track([[78.0, 23.0], [78.015, 23.004]], days=[1, 3])
    mix = partial_conditional(tr, 5, ModelParams(theta=th, h=1.0), _SCALE)
    raw = [math.exp(-4 / th), math.exp(-2 / th)]
    tot = sum(raw)
    assert np.allclose(np.sort(mix.weights), np.sort([r / tot for r in raw]), rtol=1e-13)
    assert np.all(mix.scale_mults == 1.0)


def test_partial_differs_from_exact_on_gaps():
    tr = _track([[78.0, 23.0], [78.01, 23.006], [78.02, 23.01]], days=[1, 2, 4])
    params = ModelParams(theta=4.0, h=1.0)
    exact = exact_conditional(tr, 5, params, _SCALE)
    part = partial_conditional(tr, 5, params, _SCALE)
    probes = exact.centers
    assert np.max(np.abs(exact.pdf(probes) - part.pdf(probes))) > 0.0


def test_family_matches_mixture_eval():
    tr = _track([[78.0, 23.0], [78.012, 23.004], [78.02, 23.014]], days=[1, 2, 5])
    point = (78.016, 23.009)
    thetas = np.array([1.5, 4.0, 4.0, 22.0])
    hs = np.array([0.8, 0.8, 2.0, 1.1])
    for method, builder in (("exact", exact_conditional), ("partial", partial_conditional)):
        fam = ConditionalFamily(tr, 6, _SCALE, method=method)
        got = fam.density_at(point, thetas, hs)
        for k in range(4):
            mix = builder(tr, 6, ModelParams(thetas[k], hs[k]), _SCALE)
            assert got[k] == pytest.approx(mix.pdf(point), rel=1e-12)


def test_family_rejects_bad_method():
    tr = _track([[78.0, 23.0]])
    with pytest.raises(ValueError):
        ConditionalFamily(tr, 2, _SCALE, method="other")


# ---- quadrature oracle ----


def _literal_single_gap_quadrature(s1, s2, s3, probe, theta, h, scale):
    """Marginalise day 2 of a 3-day history with an explicit midpoint sum."""
    d1, d2 = h * scale.delta_lon, h * scale.delta_lat

    def kern(px, py, cx, cy):
        q = ((px - cx) / d1) ** 2 + ((py - cy) / d2) ** 2
        return np.exp(-0.5 * q) / (2 * math.pi * d1 * d2)

    w4 = [_w(i, 4, theta) for i in (1, 2, 3)]
    zx = np.linspace(s1[0] - 10 * d1, s1[0] + 10 * d1, 240)
    zy = np.linspace(s1[1] - 10 * d2, s1[1] + 10 * d2, 240)
    gx, gy = np.meshgrid(zx, zy)
    cell = (zx[1] - zx[0]) * (zy[1] - zy[0])
    q_day2 = kern(gx, gy, s1[0], s1[1])  # day 2 given day 1 alone
    f_full = (
        w4[0] * kern(probe[0], probe[1], s1[0], s1[1])
        + w4[1] * kern(probe[0], probe[1], gx, gy)
        + w4[2] * kern(probe[0], probe[1], s3[0], s3[1])
    )
    return float((f_full * q_day2).sum() * cell)


def test_quadrature_matches_literal_sum():
    s1, s3 = (78.0, 23.0), (78.012, 23.008)
    tr = Track("a", {1: s1, 3: s3})
    params = ModelParams(theta=3.0, h=1.0)
    probes = np.array([[78.004, 23.002], [78.02, 23.012], [77.99, 22.995]])
    vals = marginalized_by_quadrature(tr, 4, params, _SCALE, probes)
    for k, probe in enumerate(probes):
        lit = _literal_single_gap_quadrature(s1, None, s3, probe, 3.0, 1.0, _SCALE)
        assert vals[k] == pytest.approx(lit, abs=2e-5)


def test_exact_conditional_matches_quadrature_single_gap():
    tr = Track("a", {1: (78.0, 23.0), 3: (78.012, 23.008), 4: (78.02, 23.002)})
    params = ModelParams(theta=2.0, h=1.0)
    probes = np.array([[78.01, 23.004], [78.03, 23.01], [77.995, 23.0]])
    mix = exact_conditional(tr, 5, params, _SCALE)
    vals = marginalized_by_quadrature(tr, 5, params, _SCALE, probes)
    assert np.max(np.abs(mix.pdf(probes) - vals)) < 1e-5


def test_exact_conditional_matches_quadrature_double_gap():
    tr = Track("a", {1: (78.0, 23.0), 4: (78.015, 23.01)})
    params = ModelParams(theta=3.0, h=1.0)
    probes = np.array([[78.008, 23.005], [78.02, 23.015]])
    mix = exact_conditional(tr, 5, params, _SCALE)
    vals = marginalized_by_quadrature(tr, 5, params, _SCALE, probes)
    assert np.max(np.abs(mix.pdf(probes) - vals)) < 1e-5


# ---- marginalisation identity ----


def test_consistency_gap_flags_partial_model():
    tr = Track("a", {1: (78.0, 23.0), 3: (78.012, 23.008)})
    params = ModelParams(theta=2.0, h=1.0)
    _, _, gap_exact = consistency_gap(tr, params, _SCALE, method="exact")
    _, _, gap_partial = consistency_gap(tr, params, _SCALE, method="partial")
    assert gap_exact < 1e-5
    assert gap_partial > 1e-3


def test_consistency_gap_vanishes_without_gaps():
    tr = _track([[78.0, 23.0], [78.01, 23.004], [78.02, 23.01]])
    params = ModelParams(theta=2.0, h=1.0)
    for method in ("exact", "partial"):
        _, _, gap = consistency_gap(tr, params, _SCALE, method=method)
        assert gap < 1e-10


def test_consistency_gap_rejects_unknown_method():
    tr = _track([[78.0, 23.0]])
    with pytest.raises(ValueError):
        consistency_gap(tr, ModelParams(2.0, 1.0), _SCALE, method="x")
