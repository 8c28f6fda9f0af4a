"""Shared generators for synthetic evaluation data used across test modules."""

from __future__ import annotations

import math

import numpy as np
from hypothesis import HealthCheck, settings

from cmbench import Homography, MatchSet

settings.register_profile(
    "cmbench",
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("cmbench")


def project(h: Homography, pts: np.ndarray) -> np.ndarray:
    """Straight-line homogeneous projection used to build fixtures."""
    ones = np.ones((len(pts), 1))
    q = np.hstack([pts, ones]) @ h.m.T
    return q[:, :2] / q[:, 2:3]


def inlier_matches(
    h: Homography,
    n: int,
    rng: np.random.Generator,
    width: int = 640,
    height: int = 480,
    noise: float = 0.0,
    margin: float = 5.0,
) -> MatchSet:
    """Correspondences consistent with h, both endpoints inside their frames."""
    a_rows: list[np.ndarray] = []
    b_rows: list[np.ndarray] = []
    while len(a_rows) < n:
        cand = rng.uniform([margin, margin], [width - margin, height - margin],
                           size=(4 * n, 2))
        proj = project(h, cand)
        if noise > 0.0:
            proj = proj + rng.normal(0.0, noise, proj.shape)
        keep = (
            (proj[:, 0] >= 0.0) & (proj[:, 0] <= width)
            & (proj[:, 1] >= 0.0) & (proj[:, 1] <= height)
            & np.isfinite(proj).all(axis=1)
        )
        a_rows.extend(cand[keep])
        b_rows.extend(proj[keep])
    return MatchSet(np.asarray(a_rows[:n]), np.asarray(b_rows[:n]))


def contaminated_matches(
    h: Homography,
    n_inliers: int,
    n_outliers: int,
    rng: np.random.Generator,
    width: int = 640,
    height: int = 480,
    noise: float = 0.5,
) -> MatchSet:
    """Inliers plus uniform outliers, shuffled together."""
    good = inlier_matches(h, n_inliers, rng, width, height, noise)
    bad_a = rng.uniform([0, 0], [width, height], size=(n_outliers, 2))
    bad_b = rng.uniform([0, 0], [width, height], size=(n_outliers, 2))
    pts_a = np.vstack([good.pts_a, bad_a])
    pts_b = np.vstack([good.pts_b, bad_b])
    order = rng.permutation(len(pts_a))
    return MatchSet(pts_a[order], pts_b[order])


def random_rotation(rng: np.random.Generator, max_angle_deg: float = 30.0) -> np.ndarray:
    """Rotation about a random axis by a bounded random angle."""
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    ang = math.radians(rng.uniform(-max_angle_deg, max_angle_deg))
    k = np.array([
        [0.0, -axis[2], axis[1]],
        [axis[2], 0.0, -axis[0]],
        [-axis[1], axis[0], 0.0],
    ])
    return np.eye(3) + math.sin(ang) * k + (1.0 - math.cos(ang)) * (k @ k)


def two_view_scene(
    rng: np.random.Generator,
    n: int,
    r: np.ndarray,
    t: np.ndarray,
    fx: float = 500.0,
    fy: float = 500.0,
    cx: float = 320.0,
    cy: float = 240.0,
    noise: float = 0.0,
):
    """Pixel correspondences of random 3-D points seen by two cameras with
    relative pose (r, t); X_b = r X_a + t."""
    pts = []
    while len(pts) < n:
        x = rng.uniform([-3, -3, 3], [3, 3, 12], size=(4 * n, 3))
        xb = x @ r.T + t
        ok = (x[:, 2] > 0.5) & (xb[:, 2] > 0.5)
        pts.extend(x[ok])
    x = np.asarray(pts[:n])
    xb = x @ r.T + t
    pa = x[:, :2] / x[:, 2:3] * (fx, fy) + (cx, cy)
    pb = xb[:, :2] / xb[:, 2:3] * (fx, fy) + (cx, cy)
    if noise > 0.0:
        pa = pa + rng.normal(0.0, noise, pa.shape)
        pb = pb + rng.normal(0.0, noise, pb.shape)
    return MatchSet(pa, pb)
