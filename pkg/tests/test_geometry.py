import math

import numpy as np
import pytest

from hypknn.geometry import (
    BallSpec,
    HPoint,
    Region,
    acosh1p,
    ball_bbox,
    ball_in_region,
    ball_volume,
    ball_volume_arr,
    box_subtract,
    dist_hyp,
    dist_hyp_arrays,
    inverse_ball_volume,
    phi_dist,
    region_volume,
    sphere_area,
)


def test_vertical_geodesic_distance():
    # two points on the same vertical line: distance is the log height ratio
    for r in (0.01, 1.0, 7.5):
        z1 = HPoint(x=[0.3], y=1.0)
        z2 = HPoint(x=[0.3], y=math.exp(r))
        assert dist_hyp(z1, z2) == pytest.approx(r, abs=1e-12)


def test_distance_symmetry_and_positivity(rng):
    for _ in range(200):
        z1 = HPoint(x=rng.normal(size=2), y=float(rng.uniform(0.1, 5)))
        z2 = HPoint(x=rng.normal(size=2), y=float(rng.uniform(0.1, 5)))
        d12 = dist_hyp(z1, z2)
        assert d12 == dist_hyp(z2, z1)
        assert d12 >= 0
    z = HPoint(x=[1.0, 2.0], y=0.5)
    assert dist_hyp(z, z) == 0.0


def test_triangle_inequality(rng):
    pts = [HPoint(x=rng.normal(size=1), y=float(rng.uniform(0.05, 20))) for _ in range(30)]
    for a in pts[:10]:
        for b in pts[10:20]:
            for c in pts[20:]:
                assert dist_hyp(a, c) <= dist_hyp(a, b) + dist_hyp(b, c) + 1e-12


def test_dist_arrays_matches_scalar(rng):
    x1 = rng.normal(size=(50, 2))
    y1 = rng.uniform(0.1, 3, size=50)
    x2 = rng.normal(size=(50, 2))
    y2 = rng.uniform(0.1, 3, size=50)
    d = dist_hyp_arrays(x1, y1, x2, y2)
    for i in range(50):
        want = dist_hyp(HPoint(x=x1[i], y=y1[i]), HPoint(x=x2[i], y=y2[i]))
        assert d[i] == pytest.approx(want, abs=1e-14)


def test_phi_dist_agrees_with_distance(rng):
    for _ in range(500):
        y1, y2 = rng.uniform(0.2, 4, size=2)
        dx = float(rng.normal() * 2)
        z1 = HPoint(x=[0.0], y=y1)
        z2 = HPoint(x=[dx], y=y2)
        assert phi_dist(abs(dx) / y1, y2 / y1) == pytest.approx(dist_hyp(z1, z2), abs=1e-11)


def test_acosh1p_small_argument():
    # naive acosh(1+t) loses half its digits here; the stable form matches
    # the asymptotic sqrt(2t)(1 - t/12) expansion
    t = 1e-14
    assert acosh1p(t) == pytest.approx(math.sqrt(2 * t), rel=1e-10)
    assert acosh1p(1.0) == pytest.approx(math.acosh(2.0), rel=1e-15)
    assert acosh1p(0.0) == 0.0


def test_sphere_area_known_values():
    assert sphere_area(2) == pytest.approx(2 * math.pi)
    assert sphere_area(3) == pytest.approx(4 * math.pi)


@pytest.mark.parametrize("d", [2, 3, 4, 5])
def test_ball_volume_monotone_and_inverse(d):
    radii = [0.05, 0.5, 1.5, 4.0]
    vols = [ball_volume(r, d) for r in radii]
    assert all(v2 > v1 for v1, v2 in zip(vols, vols[1:]))
    for r, v in zip(radii, vols):
        assert inverse_ball_volume(v, d) == pytest.approx(r, abs=1e-10)


def test_ball_volume_quadrature_matches_closed_forms():
    # quadrature path evaluated by integrating the d=3 density directly
    for r in (0.2, 1.0, 3.0):
        from scipy.integrate import quad

        val, _ = quad(lambda u: math.sinh(u) ** 2, 0, r)
        assert ball_volume(r, 3) == pytest.approx(sphere_area(3) * val, rel=1e-10)


def test_ball_volume_arr_matches_scalar(rng):
    r = rng.uniform(0, 3, size=20)
    for d in (2, 3, 4):
        v = ball_volume_arr(r, d)
        for i in range(20):
            assert v[i] == pytest.approx(ball_volume(float(r[i]), d), rel=1e-12)


def test_ball_volume_rejects_bad_input():
    with pytest.raises(ValueError):
        ball_volume(-1.0, 2)
    with pytest.raises(ValueError):
        ball_volume(1.0, 1)
    with pytest.raises(ValueError):
        inverse_ball_volume(-2.0, 2)


def test_region_volume_window_formula():
    # [0,1]^(d-1) x [e^-lam, inf) has volume e^((d-1)lam)/(d-1)
    for d, lam in ((2, 5.0), (3, 4.0)):
        W = Region(lo=np.zeros(d - 1), hi=np.ones(d - 1), y_lo=math.exp(-lam))
        assert region_volume(W, d) == pytest.approx(math.exp((d - 1) * lam) / (d - 1))


def test_region_volume_additive_in_height():
    R = Region(lo=[0.0], hi=[2.0], y_lo=0.5, y_hi=3.0)
    mid = 1.2
    lower = Region(lo=[0.0], hi=[2.0], y_lo=0.5, y_hi=mid)
    upper = Region(lo=[0.0], hi=[2.0], y_lo=mid, y_hi=3.0)
    assert region_volume(R, 2) == pytest.approx(
        region_volume(lower, 2) + region_volume(upper, 2)
    )


def test_region_contains():
    R = Region(lo=[0.0], hi=[1.0], y_lo=1.0, y_hi=2.0)
    x = np.array([[0.5], [0.5], [1.5], [0.5]])
    y = np.array([1.5, 2.5, 1.5, 0.5])
    assert list(R.contains(x, y)) == [True, False, False, False]
    assert Region(lo=[0.0], hi=[1.0], y_lo=1.0).contains_point(HPoint(x=[0.1], y=100.0))


def test_bbox_contains_ball_samples(rng):
    # points at distance <= r from the center must fall in the bbox, and
    # the bbox extremes must be attained up to a small tolerance
    for _ in range(20):
        c = HPoint(x=rng.normal(size=1), y=float(rng.uniform(0.2, 3)))
        r = float(rng.uniform(0.1, 2.0))
        box = ball_bbox(BallSpec(center=c, radius=r))
        probes_x = rng.normal(c.x[0], c.y * 2, size=400)
        probes_y = np.exp(rng.normal(math.log(c.y), 1.0, size=400))
        d = dist_hyp_arrays(probes_x[:, None], probes_y, c.x[None, :], c.y)
        inside = d <= r
        assert np.all(box.contains(probes_x[inside, None], probes_y[inside]))
        # the top and bottom of the ball are exactly y e^{+-r}
        assert box.y_hi == pytest.approx(c.y * math.exp(r))
        assert box.y_lo == pytest.approx(c.y * math.exp(-r))


def test_ball_in_region_is_exact_at_margins():
    c = HPoint(x=[0.5], y=1.0)
    r = 0.3
    pad = math.sinh(r)
    R_ok = Region(lo=[0.5 - pad], hi=[0.5 + pad], y_lo=math.exp(-r), y_hi=math.exp(r))
    assert ball_in_region(BallSpec(center=c, radius=r), R_ok)
    R_tight = Region(lo=[0.5 - pad * 0.999], hi=[0.5 + pad], y_lo=math.exp(-r), y_hi=math.exp(r))
    assert not ball_in_region(BallSpec(center=c, radius=r), R_tight)
    R_low = Region(lo=[0.0], hi=[1.0], y_lo=math.exp(-r) * 1.001)
    assert not ball_in_region(BallSpec(center=c, radius=r), R_low)


def _box_volume(lo, hi):
    return float(np.prod(np.asarray(hi) - np.asarray(lo)))


def test_box_subtract_volume_and_disjointness(rng):
    for _ in range(100):
        lo = rng.uniform(-1, 0, size=2)
        hi = rng.uniform(0.5, 2, size=2)
        s_lo = rng.uniform(-1.5, 1, size=2)
        s_hi = s_lo + rng.uniform(0.1, 2, size=2)
        pieces = box_subtract(lo, hi, s_lo, s_hi)
        inter_lo = np.maximum(lo, s_lo)
        inter_hi = np.minimum(hi, s_hi)
        inter = _box_volume(inter_lo, np.maximum(inter_lo, inter_hi))
        total = sum(_box_volume(p_lo, p_hi) for p_lo, p_hi in pieces)
        assert total == pytest.approx(_box_volume(lo, hi) - inter, abs=1e-12)
        # no two pieces overlap
        for i in range(len(pieces)):
            for j in range(i + 1, len(pieces)):
                a_lo, a_hi = pieces[i]
                b_lo, b_hi = pieces[j]
                if np.all(np.maximum(a_lo, b_lo) < np.minimum(a_hi, b_hi)):
                    raise AssertionError("overlapping pieces")


def test_box_subtract_disjoint_boxes_returns_original():
    pieces = box_subtract([0.0], [1.0], [2.0], [3.0])
    assert len(pieces) == 1
    np.testing.assert_allclose(pieces[0][0], [0.0])
    np.testing.assert_allclose(pieces[0][1], [1.0])


def test_invalid_constructions():
    with pytest.raises(ValueError):
        HPoint(x=[0.0], y=0.0)
    with pytest.raises(ValueError):
        Region(lo=[0.0], hi=[1.0], y_lo=-1.0)
    with pytest.raises(ValueError):
        Region(lo=[1.0], hi=[0.0], y_lo=1.0)
    with pytest.raises(ValueError):
        BallSpec(center=HPoint(x=[0.0], y=1.0), radius=-0.1)
