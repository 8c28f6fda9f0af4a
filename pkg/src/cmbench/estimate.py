"""Robust model fitting: RANSAC homography, essential-matrix relative pose,
and inlier counting.

Failure is a value here, not an exception: estimators return a result with
status Failed because the downstream success-rate metric counts failures.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateConfiguration, SingularMatrix
from .geometry import CameraIntrinsics, Homography, MatchSet, RelativePose, invert_homography

_COLLINEAR_EPS = 1e-9
_MIN_PARALLAX_RAD = 1e-6


class Status(enum.Enum):
    SUCCESS = "success"
    FAILED = "failed"


@dataclass(frozen=True)
class RansacConfig:
    threshold: float = 3.0
    max_iterations: int = 2000
    confidence: float = 0.9999
    seed: int = 0

    def __post_init__(self):
        if not self.threshold > 0:
            raise ValueError(f"threshold must be positive, got {self.threshold}")
        if not 0.0 < self.confidence < 1.0:
            raise ValueError(f"confidence must be in (0, 1), got {self.confidence}")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")


@dataclass(frozen=True)
class EstimationResult:
    model: Homography | RelativePose | None
    inlier_mask: np.ndarray
    inlier_count: int
    status: Status

    def __post_init__(self):
        mask = np.asarray(self.inlier_mask, dtype=bool)
        mask.flags.writeable = False
        object.__setattr__(self, "inlier_mask", mask)
        if self.inlier_count != int(mask.sum()):
            raise ValueError("inlier_count disagrees with mask")
        if self.status is Status.FAILED and self.model is not None:
            raise ValueError("failed results carry no model")

    @classmethod
    def failed(cls, n: int) -> "EstimationResult":
        return cls(None, np.zeros(n, dtype=bool), 0, Status.FAILED)


def _hartley_normalization(pts: np.ndarray) -> np.ndarray:
    """3x3 transform translating the centroid to the origin and scaling the
    mean distance to sqrt(2)."""
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    if d <= 1e-12:
        raise DegenerateConfiguration("all points coincide")
    s = math.sqrt(2.0) / d
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def _check_minimal_sample(pts: np.ndarray) -> None:
    for i in range(4):
        for j in range(i + 1, 4):
            if np.all(np.abs(pts[i] - pts[j]) <= _COLLINEAR_EPS):
                raise DegenerateConfiguration("duplicate points in minimal sample")
    for skip in range(4):
        tri = np.delete(pts, skip, axis=0)
        area = abs(
            (tri[1, 0] - tri[0, 0]) * (tri[2, 1] - tri[0, 1])
            - (tri[2, 0] - tri[0, 0]) * (tri[1, 1] - tri[0, 1])
        )
        if area <= _COLLINEAR_EPS:
            raise DegenerateConfiguration("three collinear points in minimal sample")


def dlt_homography(matches: MatchSet) -> Homography:
    """Least-squares projective fit with Hartley normalization on both sides;
    interpolates exactly when given four non-degenerate pairs."""
    n = len(matches)
    if n < 4:
        raise DegenerateConfiguration(f"need at least 4 correspondences, got {n}")
    a, b = matches.pts_a, matches.pts_b
    if n == 4:
        _check_minimal_sample(a)
        _check_minimal_sample(b)

    ta = _hartley_normalization(a)
    tb = _hartley_normalization(b)
    an = a * ta[0, 0] + ta[:2, 2]
    bn = b * tb[0, 0] + tb[:2, 2]

    x, y = an[:, 0], an[:, 1]
    u, v = bn[:, 0], bn[:, 1]
    zero = np.zeros(n)
    one = np.ones(n)
    rows_u = np.stack([-x, -y, -one, zero, zero, zero, u * x, u * y, u], axis=1)
    rows_v = np.stack([zero, zero, zero, -x, -y, -one, v * x, v * y, v], axis=1)
    amat = np.concatenate([rows_u, rows_v], axis=0)
    _, _, vt = np.linalg.svd(amat)
    hn = vt[-1].reshape(3, 3)
    h = np.linalg.inv(tb) @ hn @ ta
    if abs(np.linalg.det(h)) <= 1e-12 or not np.all(np.isfinite(h)):
        raise DegenerateConfiguration("fit collapsed to a singular transform")
    return Homography(h)


def _homography_inlier_mask(h: Homography, matches: MatchSet, threshold: float) -> np.ndarray:
    try:
        h_inv = invert_homography(h)
    except SingularMatrix:
        return np.zeros(len(matches), dtype=bool)
    d2 = kernels.transfer_sq(h.m, h_inv.m, matches.pts_a, matches.pts_b)
    return d2 < threshold * threshold


def count_inliers(h: Homography, matches: MatchSet, threshold: float) -> int:
    """Pairs whose symmetric transfer distance falls strictly under threshold."""
    return int(_homography_inlier_mask(h, matches, threshold).sum())


def _adaptive_iterations(inlier_ratio: float, sample_size: int, confidence: float, cap: int) -> int:
    if inlier_ratio <= 0.0:
        return cap
    w = inlier_ratio ** sample_size
    if w >= 1.0:
        return 1
    denom = math.log1p(-w)
    if denom == 0.0:
        return cap
    need = math.log(1.0 - confidence) / denom
    return min(cap, max(1, int(math.ceil(need))))


def ransac_homography(matches: MatchSet, cfg: RansacConfig) -> EstimationResult:
    """Four-point hypothesize-and-verify with symmetric transfer distance,
    adaptive stopping, and a full-inlier re-fit kept only when it does not
    lose inliers. Deterministic for a fixed config."""
    n = len(matches)
    if n < 4:
        return EstimationResult.failed(n)

    rng = np.random.default_rng(cfg.seed)
    best_model: Homography | None = None
    best_mask = np.zeros(n, dtype=bool)
    best_count = 0
    needed = cfg.max_iterations
    i = 0
    while i < needed:
        i += 1
        idx = rng.choice(n, size=4, replace=False)
        try:
            hyp = dlt_homography(matches.take(idx))
        except DegenerateConfiguration:
            continue
        mask = _homography_inlier_mask(hyp, matches, cfg.threshold)
        count = int(mask.sum())
        if count > best_count:
            best_model, best_mask, best_count = hyp, mask, count
            needed = min(
                cfg.max_iterations,
                _adaptive_iterations(count / n, 4, cfg.confidence, cfg.max_iterations),
            )

    if best_model is None or best_count < 4:
        return EstimationResult.failed(n)

    try:
        refit = dlt_homography(matches.take(np.flatnonzero(best_mask)))
        refit_mask = _homography_inlier_mask(refit, matches, cfg.threshold)
        refit_count = int(refit_mask.sum())
        if refit_count >= best_count:
            best_model, best_mask, best_count = refit, refit_mask, refit_count
    except DegenerateConfiguration:
        pass

    return EstimationResult(best_model, best_mask, best_count, Status.SUCCESS)


# ---- relative pose ----------------------------------------------------------

def _essential_from_eight(na: np.ndarray, nb: np.ndarray) -> np.ndarray:
    """Least-squares essential matrix (x_b^T E x_a = 0) with singular values
    projected to (1, 1, 0)."""
    ta = _hartley_normalization(na)
    tb = _hartley_normalization(nb)
    an = na * ta[0, 0] + ta[:2, 2]
    bn = nb * tb[0, 0] + tb[:2, 2]
    x1, y1 = an[:, 0], an[:, 1]
    x2, y2 = bn[:, 0], bn[:, 1]
    one = np.ones(len(x1))
    amat = np.stack([x2 * x1, x2 * y1, x2, y2 * x1, y2 * y1, y2, x1, y1, one], axis=1)
    _, _, vt = np.linalg.svd(amat)
    e = tb.T @ vt[-1].reshape(3, 3) @ ta
    u, _, vt2 = np.linalg.svd(e)
    return u @ np.diag([1.0, 1.0, 0.0]) @ vt2


def _decompose_essential(e: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    u, _, vt = np.linalg.svd(e)
    w = np.array([[0.0, -1.0, 0.0], [1.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
    t = u[:, 2]
    cands = []
    for r in (u @ w @ vt, u @ w.T @ vt):
        if np.linalg.det(r) < 0:
            r = -r
        for sign in (1.0, -1.0):
            cands.append((r, sign * t))
    return cands


def _triangulate(na: np.ndarray, nb: np.ndarray, r: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Linear triangulation for P1 = [I|0], P2 = [r|t]; returns (n, 4)
    homogeneous points in camera-1 coordinates."""
    n = len(na)
    p2 = np.concatenate([r, t[:, None]], axis=1)
    amat = np.empty((n, 4, 4))
    amat[:, 0, :] = 0.0
    amat[:, 0, 0] = -1.0
    amat[:, 0, 2] = na[:, 0]
    amat[:, 1, :] = 0.0
    amat[:, 1, 1] = -1.0
    amat[:, 1, 2] = na[:, 1]
    amat[:, 2, :] = nb[:, 0, None] * p2[2] - p2[0]
    amat[:, 3, :] = nb[:, 1, None] * p2[2] - p2[1]
    _, _, vt = np.linalg.svd(amat)
    return vt[:, -1, :]


def _cheirality_and_parallax(
    na: np.ndarray, nb: np.ndarray, r: np.ndarray, t: np.ndarray
) -> tuple[int, float]:
    """Count points triangulating in front of both cameras and the median
    ray angle (radians) of those points."""
    xh = _triangulate(na, nb, r, t)
    with np.errstate(divide="ignore", invalid="ignore"):
        xc = xh[:, :3] / xh[:, 3:4]
        z1 = xc[:, 2]
        z2 = (xc @ r.T + t)[:, 2]
        front = np.isfinite(z1) & np.isfinite(z2) & (z1 > 0) & (z2 > 0)
        if not front.any():
            return 0, 0.0
        pts = xc[front]
        c2 = -r.T @ t
        v1 = pts
        v2 = pts - c2
        n1 = np.linalg.norm(v1, axis=1)
        n2 = np.linalg.norm(v2, axis=1)
        cosang = np.clip((v1 * v2).sum(axis=1) / (n1 * n2), -1.0, 1.0)
    ang = np.arccos(cosang)
    ang = np.where(np.isfinite(ang), ang, 0.0)
    return int(front.sum()), float(np.median(ang))


def estimate_relative_pose(
    matches: MatchSet,
    k1: CameraIntrinsics,
    k2: CameraIntrinsics,
    cfg: RansacConfig,
) -> EstimationResult:
    """Eight-point essential matrix inside RANSAC, thresholded on Sampson
    error in intrinsics-normalized coordinates (pixel threshold divided by
    the mean focal length), followed by a cheirality vote over the four
    rotation/translation candidates."""
    n = len(matches)
    if n < 8:
        return EstimationResult.failed(n)

    na = (matches.pts_a - (k1.cx, k1.cy)) / (k1.fx, k1.fy)
    nb = (matches.pts_b - (k2.cx, k2.cy)) / (k2.fx, k2.fy)
    mean_focal = (k1.fx + k1.fy + k2.fx + k2.fy) / 4.0
    thr = cfg.threshold / mean_focal
    thr2 = thr * thr

    rng = np.random.default_rng(cfg.seed)
    best_e: np.ndarray | None = None
    best_mask = np.zeros(n, dtype=bool)
    best_count = 0
    needed = cfg.max_iterations
    i = 0
    while i < needed:
        i += 1
        idx = rng.choice(n, size=8, replace=False)
        try:
            e = _essential_from_eight(na[idx], nb[idx])
        except (DegenerateConfiguration, np.linalg.LinAlgError):
            continue
        mask = kernels.sampson_sq(e, na, nb) < thr2
        count = int(mask.sum())
        if count > best_count:
            best_e, best_mask, best_count = e, mask, count
            needed = min(
                cfg.max_iterations,
                _adaptive_iterations(count / n, 8, cfg.confidence, cfg.max_iterations),
            )

    if best_e is None or best_count < 8:
        return EstimationResult.failed(n)

    try:
        refit = _essential_from_eight(na[best_mask], nb[best_mask])
        refit_mask = kernels.sampson_sq(refit, na, nb) < thr2
        refit_count = int(refit_mask.sum())
        if refit_count >= best_count:
            best_e, best_mask, best_count = refit, refit_mask, refit_count
    except (DegenerateConfiguration, np.linalg.LinAlgError):
        pass

    ia, ib = na[best_mask], nb[best_mask]
    best_votes = -1
    winner: tuple[np.ndarray, np.ndarray] | None = None
    winner_parallax = 0.0
    for r, t in _decompose_essential(best_e):
        votes, parallax = _cheirality_and_parallax(ia, ib, r, t)
        if votes > best_votes:
            best_votes, winner, winner_parallax = votes, (r, t), parallax
    if winner is None or best_votes < 0.5 * best_count:
        return EstimationResult.failed(n)
    if winner_parallax < _MIN_PARALLAX_RAD:
        # No-parallax degeneracy: translation direction is unobservable.
        return EstimationResult.failed(n)

    pose = RelativePose.from_rt(winner[0], winner[1])
    return EstimationResult(pose, best_mask, best_count, Status.SUCCESS)
