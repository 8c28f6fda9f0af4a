"""Random projective warps for the synthetic homography task.

A warp is composed from six scalar parameters: scale and rotation anchored at
the image center, two perspective-row perturbations, and a translation given
as a fraction of the frame size. Sampling rejects draws whose warped frame
overlaps the target frame by less than a minimum fraction, and the exact
composition order is fixed so each accepted transform can be decomposed back
into its generating parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateQuad, SamplingExhausted
from .geometry import Homography, Point2, project_points

_MAX_DRAWS = 1000
_PERSP_DEGENERATE = 1e-20  # on g20^2 + g21^2; below this the warp is affine


@dataclass(frozen=True)
class HomographySamplerParams:
    scale_range: tuple[float, float] = (0.65, 1.35)
    rotation_range_deg: tuple[float, float] = (-25.0, 25.0)
    perspective_range: tuple[float, float] = (-0.23, 0.23)
    translation_range: tuple[float, float] = (-0.17, 0.17)
    min_overlap: float = 0.60

    def __post_init__(self):
        for name in ("scale_range", "rotation_range_deg", "perspective_range", "translation_range"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise ValueError(f"{name} has low > high: ({lo}, {hi})")
        if not 0.0 < self.min_overlap <= 1.0:
            raise ValueError(f"min_overlap must be in (0, 1], got {self.min_overlap}")


@dataclass(frozen=True)
class WarpParams:
    """The six generating parameters, in composition order."""

    scale: float
    rotation_deg: float
    p0: float
    p1: float
    tx: float
    ty: float


@dataclass(frozen=True)
class SyntheticPair:
    ground_truth: Homography
    source_size: tuple[int, int]
    target_size: tuple[int, int]
    seed: int
    params: WarpParams = field(compare=False)

    def to_record(self) -> dict:
        w, h = self.source_size
        return {
            "seed": int(self.seed),
            "width": int(w),
            "height": int(h),
            "H": self.ground_truth.flat(),
        }


def compose_warp(p: WarpParams, width: float, height: float) -> Homography:
    """Build the transform: center-anchored similarity, then perspective row
    perturbation (p0/width, p1/height), then translation (tx*width, ty*height).
    """
    cx, cy = width / 2.0, height / 2.0
    th = math.radians(p.rotation_deg)
    a = p.scale * math.cos(th)
    b = p.scale * math.sin(th)
    sim = np.array([
        [a, -b, cx - a * cx + b * cy],
        [b, a, cy - b * cx - a * cy],
        [0.0, 0.0, 1.0],
    ])
    persp = np.array([
        [1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [p.p0 / width, p.p1 / height, 1.0],
    ])
    trans = np.array([
        [1.0, 0.0, p.tx * width],
        [0.0, 1.0, p.ty * height],
        [0.0, 0.0, 1.0],
    ])
    return Homography(trans @ persp @ sim)


def decompose_warp(h: Homography, width: float, height: float) -> WarpParams:
    """Exact algebraic inverse of compose_warp for transforms it produced."""
    g = h.m
    cx, cy = width / 2.0, height / 2.0
    g20, g21 = g[2, 0], g[2, 1]
    t2 = g20 * g20 + g21 * g21

    if t2 > _PERSP_DEGENERATE:
        # Translation first: the upper-left asymmetry is induced purely by
        # adding (tx*W, ty*H) times the perspective row.
        rhs = np.array([g[0, 0] - g[1, 1], g[0, 1] + g[1, 0]])
        txw = (g20 * rhs[0] + g21 * rhs[1]) / t2
        tyh = (g20 * rhs[1] - g21 * rhs[0]) / t2
        m0 = g[0] - txw * g[2]
        m1 = g[1] - tyh * g[2]
        # m0 = [a, -b, u]/kappa with u = cx - a*cx + b*cy, so the center row
        # sum collapses to cx/kappa.
        inv_k = (m0[2] + m0[0] * cx + m0[1] * cy) / cx
        scale = math.hypot(m0[0], m1[0]) / inv_k
        rot = math.degrees(math.atan2(m1[0], m0[0]))
        q = np.linalg.solve(np.array([[m0[0], m1[0]], [m0[1], m1[1]]]), np.array([g20, g21]))
        return WarpParams(scale, rot, q[0] * width, q[1] * height, txw / width, tyh / height)

    # Affine case: kappa = 1 and the linear part is the similarity itself.
    a, b = g[0, 0], g[1, 0]
    scale = math.hypot(a, b)
    rot = math.degrees(math.atan2(b, a))
    u = cx - g[0, 0] * cx - g[0, 1] * cy
    v = cy - g[1, 0] * cx - g[1, 1] * cy
    return WarpParams(scale, rot, 0.0, 0.0, (g[0, 2] - u) / width, (g[1, 2] - v) / height)


def _clip_against(poly: list[tuple[float, float]], inside, intersect) -> list[tuple[float, float]]:
    out: list[tuple[float, float]] = []
    n = len(poly)
    for i in range(n):
        cur, prev = poly[i], poly[i - 1]
        cur_in, prev_in = inside(cur), inside(prev)
        if cur_in:
            if not prev_in:
                out.append(intersect(prev, cur))
            out.append(cur)
        elif prev_in:
            out.append(intersect(prev, cur))
    return out


def _polygon_area(poly: list[tuple[float, float]]) -> float:
    s = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i - 1]
        x1, y1 = poly[i]
        s += x0 * y1 - x1 * y0
    return abs(s) / 2.0


def overlap_ratio(h: Homography, width: float, height: float) -> float:
    """Fraction of the target frame covered by the warped source frame.

    The source frame quadrilateral is warped, clipped against the target
    rectangle edge by edge (Sutherland-Hodgman), and the clipped area is
    divided by the target frame area.
    """
    corners = np.array([[0.0, 0.0], [width, 0.0], [width, height], [0.0, height]])
    warped, valid = project_points(h, corners)
    if not bool(np.all(valid)) or not bool(np.all(np.isfinite(warped))):
        raise DegenerateQuad("warped frame corners are not finite")

    poly = [(float(x), float(y)) for x, y in warped]
    # Half-planes x >= 0, x <= width, y >= 0, y <= height.
    edges = [
        (lambda p: p[0] >= 0.0, 0, 0.0),
        (lambda p: p[0] <= width, 0, width),
        (lambda p: p[1] >= 0.0, 1, 0.0),
        (lambda p: p[1] <= height, 1, height),
    ]
    for inside, axis, level in edges:
        def intersect(p, q, axis=axis, level=level):
            t = (level - p[axis]) / (q[axis] - p[axis])
            return (
                p[0] + t * (q[0] - p[0]),
                p[1] + t * (q[1] - p[1]),
            )

        poly = _clip_against(poly, inside, intersect)
        if len(poly) < 3:
            return 0.0
    ratio = _polygon_area(poly) / (width * height)
    return min(max(ratio, 0.0), 1.0)


def sample_homography(
    rng_seed: int,
    width: int,
    height: int,
    params: HomographySamplerParams | None = None,
) -> SyntheticPair:
    """Draw a random warp, rejection-resampling until the overlap constraint
    holds. Deterministic for a given (seed, size, params) triple.
    """
    if width < 32 or height < 32:
        raise ValueError(f"frame must be at least 32x32, got {width}x{height}")
    params = params or HomographySamplerParams()
    rng = np.random.default_rng(rng_seed)
    for _ in range(_MAX_DRAWS):
        p = WarpParams(
            scale=float(rng.uniform(*params.scale_range)),
            rotation_deg=float(rng.uniform(*params.rotation_range_deg)),
            p0=float(rng.uniform(*params.perspective_range)),
            p1=float(rng.uniform(*params.perspective_range)),
            tx=float(rng.uniform(*params.translation_range)),
            ty=float(rng.uniform(*params.translation_range)),
        )
        h = compose_warp(p, float(width), float(height))
        try:
            ov = overlap_ratio(h, float(width), float(height))
        except DegenerateQuad:
            continue
        if ov >= params.min_overlap:
            return SyntheticPair(h, (width, height), (width, height), rng_seed, p)
    raise SamplingExhausted(
        f"no draw reached overlap {params.min_overlap} within {_MAX_DRAWS} attempts"
    )


def warp_correspondences(h: Homography, points: list[Point2]) -> tuple[list[Point2], list[int]]:
    """Element-wise projection; returns (warped points, indices dropped
    because their homogeneous depth vanished).
    """
    if not points:
        return [], []
    arr = np.array([[p.x, p.y] for p in points], dtype=np.float64)
    out, valid = project_points(h, arr)
    warped = [Point2(float(x), float(y)) for (x, y), ok in zip(out, valid) if ok]
    dropped = [i for i, ok in enumerate(valid) if not ok]
    return warped, dropped
