"""Core geometric types and exact transform arithmetic.

Everything here is immutable and pure; estimation and warping live elsewhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegeneratePoint, SingularMatrix

_W_EPS = 1e-12  # homogeneous depth below this is degenerate
_DET_EPS = 1e-12


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class Point2:
    """Continuous pixel coordinate."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")


@dataclass(frozen=True, eq=False)
class Homography:
    """3x3 projective transform, stored normalized to m[2][2] = 1 when possible."""

    m: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.m, dtype=np.float64)
        if m.shape != (3, 3):
            raise ValueError(f"homography must be 3x3, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("homography entries must be finite")
        det = float(np.linalg.det(m))
        if det == 0.0:
            raise SingularMatrix("homography determinant is zero")
        if m[2, 2] != 0.0:
            m = m / m[2, 2]
        object.__setattr__(self, "m", _readonly(m))

    @classmethod
    def identity(cls) -> "Homography":
        return cls(np.eye(3))

    @classmethod
    def from_flat(cls, values) -> "Homography":
        v = np.asarray(values, dtype=np.float64)
        if v.shape != (9,):
            raise ValueError("expected 9 row-major entries")
        return cls(v.reshape(3, 3))

    @classmethod
    def scale(cls, sx: float, sy: float | None = None) -> "Homography":
        sy = sx if sy is None else sy
        return cls(np.diag([sx, sy, 1.0]))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "Homography":
        return cls(np.array([[1.0, 0.0, tx], [0.0, 1.0, ty], [0.0, 0.0, 1.0]]))

    def flat(self) -> list[float]:
        return [float(v) for v in self.m.ravel()]

    def compose(self, other: "Homography") -> "Homography":
        """Transform applying `other` first, then self."""
        return Homography(self.m @ other.m)


@dataclass(frozen=True, eq=False)
class RelativePose:
    """Rigid relative pose: rotation plus unit translation direction.

    Maps view-A camera coordinates to view-B: X_b = R @ X_a + t.
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64)
        if r.shape != (3, 3) or t.shape != (3,):
            raise ValueError("rotation must be 3x3 and translation a 3-vector")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(t))):
            raise ValueError("pose entries must be finite")
        if np.max(np.abs(r.T @ r - np.eye(3))) > 1e-9:
            raise ValueError("rotation is not orthonormal within 1e-9")
        if np.linalg.det(r) < 0:
            raise ValueError("rotation must be proper (det = +1)")
        if abs(np.linalg.norm(t) - 1.0) > 1e-9:
            raise ValueError("translation must be unit norm within 1e-9")
        object.__setattr__(self, "rotation", _readonly(r))
        object.__setattr__(self, "translation", _readonly(t))

    @classmethod
    def from_rt(cls, rotation, translation) -> "RelativePose":
        """Build with the translation normalized to unit length."""
        t = np.asarray(translation, dtype=np.float64)
        n = np.linalg.norm(t)
        if n == 0.0:
            raise ValueError("translation direction undefined for zero vector")
        return cls(np.asarray(rotation, dtype=np.float64), t / n)


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("focal lengths must be positive")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def scaled(self, s: float) -> "CameraIntrinsics":
        return CameraIntrinsics(self.fx * s, self.fy * s, self.cx * s, self.cy * s)


@dataclass(frozen=True, eq=False)
class MatchSet:
    """Putative correspondences between image A and image B.

    pts_a/pts_b are (n, 2) float arrays; confidence is optional, in [0, 1].
    Bounds and cap validation against declared image sizes happens at ingest.
    """

    pts_a: np.ndarray
    pts_b: np.ndarray
    confidence: np.ndarray | None = field(default=None)

    def __post_init__(self):
        a = np.asarray(self.pts_a, dtype=np.float64).reshape(-1, 2)
        b = np.asarray(self.pts_b, dtype=np.float64).reshape(-1, 2)
        if a.shape != b.shape:
            raise ValueError(f"point arrays disagree: {a.shape} vs {b.shape}")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("match coordinates must be finite")
        object.__setattr__(self, "pts_a", _readonly(a))
        object.__setattr__(self, "pts_b", _readonly(b))
        if self.confidence is not None:
            c = np.asarray(self.confidence, dtype=np.float64).reshape(-1)
            if c.shape[0] != a.shape[0]:
                raise ValueError("confidence length must match point count")
            if not np.all(np.isfinite(c)) or np.any(c < 0) or np.any(c > 1):
                raise ValueError("confidence values must lie in [0, 1]")
            object.__setattr__(self, "confidence", _readonly(c))

    def __len__(self) -> int:
        return int(self.pts_a.shape[0])

    @classmethod
    def from_rows(cls, rows) -> "MatchSet":
        """rows: iterable of (ax, ay, bx, by) or (ax, ay, bx, by, confidence)."""
        rows = list(rows)
        if not rows:
            return cls(np.zeros((0, 2)), np.zeros((0, 2)))
        widths = {len(r) for r in rows}
        if widths - {4, 5}:
            raise ValueError("rows must have 4 or 5 entries")
        a = np.array([[r[0], r[1]] for r in rows], dtype=np.float64)
        b = np.array([[r[2], r[3]] for r in rows], dtype=np.float64)
        conf = None
        if widths == {5}:
            conf = np.array([r[4] for r in rows], dtype=np.float64)
        elif widths == {4, 5}:
            raise ValueError("mixed rows with and without confidence")
        return cls(a, b, conf)

    def take(self, index) -> "MatchSet":
        idx = np.asarray(index)
        conf = self.confidence[idx] if self.confidence is not None else None
        return MatchSet(self.pts_a[idx], self.pts_b[idx], conf)

    def scaled(self, s_a: float, s_b: float) -> "MatchSet":
        return MatchSet(self.pts_a * s_a, self.pts_b * s_b, self.confidence)


# ---- operations -------------------------------------------------------------

def apply_homography(h: Homography, p: Point2) -> Point2:
    """Project a single point; raises DegeneratePoint when depth vanishes."""
    m = h.m
    w = m[2, 0] * p.x + m[2, 1] * p.y + m[2, 2]
    if abs(w) <= _W_EPS:
        raise DegeneratePoint(f"homogeneous depth {w} at ({p.x}, {p.y})")
    u = m[0, 0] * p.x + m[0, 1] * p.y + m[0, 2]
    v = m[1, 0] * p.x + m[1, 1] * p.y + m[1, 2]
    return Point2(u / w, v / w)


def project_points(h: Homography, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized projection of an (n, 2) array.

    Returns (projected, valid) where invalid rows (|w| <= eps) hold NaN.
    """
    pts = np.asarray(pts, dtype=np.float64).reshape(-1, 2)
    m = h.m
    x, y = pts[:, 0], pts[:, 1]
    w = m[2, 0] * x + m[2, 1] * y + m[2, 2]
    valid = np.abs(w) > _W_EPS
    safe_w = np.where(valid, w, 1.0)
    u = (m[0, 0] * x + m[0, 1] * y + m[0, 2]) / safe_w
    v = (m[1, 0] * x + m[1, 1] * y + m[1, 2]) / safe_w
    out = np.stack([u, v], axis=1)
    out[~valid] = np.nan
    return out, valid


def invert_homography(h: Homography) -> Homography:
    det = float(np.linalg.det(h.m))
    if abs(det) <= _DET_EPS:
        raise SingularMatrix(f"determinant {det} below {_DET_EPS}")
    return Homography(np.linalg.inv(h.m))


def rotation_angle_deg(r: np.ndarray) -> float:
    """Geodesic angle of a rotation matrix, in degrees."""
    c = (float(np.trace(r)) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def pose_angular_error(est: RelativePose, gt: RelativePose) -> float:
    """Max of rotation geodesic angle and translation direction angle, degrees.

    Translation is compared up to sign: essential-matrix decompositions carry
    a sign ambiguity, so min(theta, 180 - theta) is used.
    """
    r_err = rotation_angle_deg(est.rotation.T @ gt.rotation)
    dot = float(np.dot(est.translation, gt.translation))
    t_err = math.degrees(math.acos(min(1.0, max(-1.0, abs(dot)))))
    return max(r_err, t_err)
