"""Synthetic warp sampling: composition algebra, overlap, and determinism."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cmbench import (
    DegenerateQuad,
    Homography,
    HomographySamplerParams,
    Point2,
    SamplingExhausted,
    WarpParams,
    apply_homography,
    compose_warp,
    decompose_warp,
    overlap_ratio,
    sample_homography,
    warp_correspondences,
)

W, H = 640, 480


def warp_pointwise(p: WarpParams, width: float, height: float, x: float, y: float):
    """Apply the three stages one point at a time; oracle for compose_warp."""
    cx, cy = width / 2.0, height / 2.0
    a = p.scale * math.cos(math.radians(p.rotation_deg))
    b = p.scale * math.sin(math.radians(p.rotation_deg))
    # center-anchored similarity
    xs = cx + a * (x - cx) - b * (y - cy)
    ys = cy + b * (x - cx) + a * (y - cy)
    # perspective division
    w = (p.p0 / width) * xs + (p.p1 / height) * ys + 1.0
    xp, yp = xs / w, ys / w
    # translation as a fraction of the frame
    return xp + p.tx * width, yp + p.ty * height


def random_params(rng: np.random.Generator) -> WarpParams:
    return WarpParams(
        scale=rng.uniform(0.65, 1.35),
        rotation_deg=rng.uniform(-25, 25),
        p0=rng.uniform(-0.23, 0.23),
        p1=rng.uniform(-0.23, 0.23),
        tx=rng.uniform(-0.17, 0.17),
        ty=rng.uniform(-0.17, 0.17),
    )


# ---- composition ------------------------------------------------------------

def test_compose_matches_pointwise_oracle():
    rng = np.random.default_rng(2)
    for _ in range(30):
        p = random_params(rng)
        h = compose_warp(p, W, H)
        for x, y in rng.uniform([0, 0], [W, H], size=(10, 2)):
            got = apply_homography(h, Point2(float(x), float(y)))
            want = warp_pointwise(p, W, H, float(x), float(y))
            assert (got.x, got.y) == pytest.approx(want, rel=1e-9, abs=1e-7)


def test_identity_params_give_identity_matrix():
    h = compose_warp(WarpParams(1.0, 0.0, 0.0, 0.0, 0.0, 0.0), W, H)
    np.testing.assert_allclose(h.m, np.eye(3), atol=1e-15)


def test_decompose_recovers_drawn_parameters():
    rng = np.random.default_rng(8)
    for _ in range(300):
        p = random_params(rng)
        q = decompose_warp(compose_warp(p, W, H), W, H)
        for name in ("scale", "rotation_deg", "p0", "p1", "tx", "ty"):
            assert getattr(q, name) == pytest.approx(getattr(p, name), abs=1e-9), name


def test_decompose_handles_pure_affine():
    p = WarpParams(1.2, 10.0, 0.0, 0.0, 0.05, -0.03)
    q = decompose_warp(compose_warp(p, W, H), W, H)
    assert q.scale == pytest.approx(1.2, abs=1e-12)
    assert q.rotation_deg == pytest.approx(10.0, abs=1e-12)
    assert (q.p0, q.p1) == (0.0, 0.0)
    assert (q.tx, q.ty) == pytest.approx((0.05, -0.03), abs=1e-12)


@settings(max_examples=200)
@given(
    st.floats(0.65, 1.35),
    st.floats(-25.0, 25.0),
    st.floats(-0.23, 0.23),
    st.floats(-0.23, 0.23),
    st.floats(-0.17, 0.17),
    st.floats(-0.17, 0.17),
)
def test_round_trip_property(s, r, p0, p1, tx, ty):
    p = WarpParams(s, r, p0, p1, tx, ty)
    q = decompose_warp(compose_warp(p, W, H), W, H)
    for name in ("scale", "rotation_deg", "p0", "p1", "tx", "ty"):
        assert getattr(q, name) == pytest.approx(getattr(p, name), abs=1e-6), name


# ---- overlap ----------------------------------------------------------------

def _mc_overlap(h: Homography, width: int, height: int, n: int, rng) -> float:
    """Monte-Carlo oracle: fraction of target-frame points inside the warped
    source quad (convex for in-range warps)."""
    corners = np.array([[0.0, 0.0], [width, 0.0], [width, height], [0.0, height]])
    ones = np.ones((4, 1))
    q = np.hstack([corners, ones]) @ h.m.T
    quad = q[:, :2] / q[:, 2:3]
    # enforce counter-clockwise winding
    area2 = 0.0
    for i in range(4):
        x0, y0 = quad[i - 1]
        x1, y1 = quad[i]
        area2 += x0 * y1 - x1 * y0
    if area2 < 0:
        quad = quad[::-1]
    pts = rng.uniform([0, 0], [width, height], size=(n, 2))
    inside = np.ones(n, dtype=bool)
    for i in range(4):
        ax, ay = quad[i]
        bx, by = quad[(i + 1) % 4]
        cross = (bx - ax) * (pts[:, 1] - ay) - (by - ay) * (pts[:, 0] - ax)
        inside &= cross >= 0.0
    return float(inside.mean())


def test_overlap_matches_monte_carlo():
    rng = np.random.default_rng(31)
    for trial in range(40):
        p = random_params(rng)
        h = compose_warp(p, W, H)
        got = overlap_ratio(h, W, H)
        mc = _mc_overlap(h, W, H, 200_000, rng)
        assert got == pytest.approx(mc, abs=5e-3), f"trial {trial}"


def test_overlap_identity_is_one():
    assert overlap_ratio(Homography.identity(), W, H) == pytest.approx(1.0)


def test_overlap_disjoint_is_zero():
    h = Homography.translation(10 * W, 0.0)
    assert overlap_ratio(h, W, H) == 0.0


def test_overlap_half_shift():
    h = Homography.translation(W / 2.0, 0.0)
    assert overlap_ratio(h, W, H) == pytest.approx(0.5, abs=1e-12)


def test_overlap_quarter_scale():
    # half-size warp about the center covers a quarter of the frame
    p = WarpParams(0.5, 0.0, 0.0, 0.0, 0.0, 0.0)
    assert overlap_ratio(compose_warp(p, W, H), W, H) == pytest.approx(0.25, abs=1e-12)


def test_overlap_clamped_to_unit_interval():
    p = WarpParams(1.35, 0.0, 0.0, 0.0, 0.0, 0.0)
    v = overlap_ratio(compose_warp(p, W, H), W, H)
    assert 0.0 <= v <= 1.0


def test_overlap_degenerate_quad_raises():
    # homogeneous depth vanishes exactly at the right-edge corners
    h = Homography.from_flat([1, 0, 0, 0, 1, 0, -1.0 / W, 0, 1.0])
    with pytest.raises(DegenerateQuad):
        overlap_ratio(h, W, H)


# ---- sampling ---------------------------------------------------------------

def test_sampler_draws_in_bounds_with_overlap():
    params = HomographySamplerParams()
    for seed in range(100):
        sp = sample_homography(seed, W, H)
        q = decompose_warp(sp.ground_truth, W, H)
        assert 0.65 <= q.scale <= 1.35
        assert -25.0 <= q.rotation_deg <= 25.0
        assert -0.23 <= q.p0 <= 0.23 and -0.23 <= q.p1 <= 0.23
        assert -0.17 <= q.tx <= 0.17 and -0.17 <= q.ty <= 0.17
        assert overlap_ratio(sp.ground_truth, W, H) >= params.min_overlap


def test_sampler_bit_deterministic():
    a = sample_homography(123, W, H)
    b = sample_homography(123, W, H)
    assert a.ground_truth.flat() == b.ground_truth.flat()
    assert a.params == b.params
    c = sample_homography(124, W, H)
    assert c.ground_truth.flat() != a.ground_truth.flat()


def test_sampler_rejects_tiny_frames():
    with pytest.raises(ValueError):
        sample_homography(0, 16, 480)


def test_sampler_exhaustion():
    params = HomographySamplerParams(
        translation_range=(0.9, 0.95), min_overlap=0.99)
    with pytest.raises(SamplingExhausted):
        sample_homography(0, W, H, params)


def test_sampler_params_validation():
    with pytest.raises(ValueError):
        HomographySamplerParams(scale_range=(1.4, 0.6))
    with pytest.raises(ValueError):
        HomographySamplerParams(min_overlap=1.5)


def test_pair_record_shape():
    sp = sample_homography(7, W, H)
    rec = sp.to_record()
    assert rec["seed"] == 7
    assert rec["width"] == W and rec["height"] == H
    assert len(rec["H"]) == 9
    assert rec["H"] == sp.ground_truth.flat()


# ---- correspondence warping -------------------------------------------------

def test_warp_correspondences_matches_projection():
    sp = sample_homography(5, W, H)
    pts = [Point2(10.0, 10.0), Point2(300.0, 200.0), Point2(600.0, 400.0)]
    warped, dropped = warp_correspondences(sp.ground_truth, pts)
    assert dropped == []
    for src, dst in zip(pts, warped):
        want = apply_homography(sp.ground_truth, src)
        assert (dst.x, dst.y) == pytest.approx((want.x, want.y))


def test_warp_correspondences_reports_dropped_indices():
    h = Homography.from_flat([1, 0, 0, 0, 1, 0, -1.0, 0, 1.0])
    warped, dropped = warp_correspondences(h, [Point2(0.5, 0.0), Point2(1.0, 0.0)])
    assert dropped == [1]
    assert len(warped) == 1
