"""Per-pair error definitions and their aggregation.

Failure conventions are enforced here and only here: failed pairs contribute
zero recall to AUC, are excluded from the median, and stay in the
success-rate denominator.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import EmptyInput, MissingTag, NoSuccesses
from .estimate import Status
from .geometry import Homography, Point2, apply_homography


@dataclass(frozen=True)
class PairError:
    pair_id: str
    value: float | None
    status: Status

    def __post_init__(self):
        if self.status is Status.SUCCESS:
            if self.value is None or not math.isfinite(self.value) or self.value < 0:
                raise ValueError(f"success entries need a finite nonnegative value, got {self.value}")
        elif self.value is not None:
            raise ValueError("failed entries carry no value")

    @classmethod
    def success(cls, pair_id: str, value: float) -> "PairError":
        return cls(pair_id, float(value), Status.SUCCESS)

    @classmethod
    def failed(cls, pair_id: str) -> "PairError":
        return cls(pair_id, None, Status.FAILED)


@dataclass(frozen=True)
class SceneSplit:
    """Scene/split tag attached to each pose pair for balanced aggregation."""

    scene_id: str
    split_id: str


def corner_error(h_est: Homography, h_gt: Homography, width: float, height: float) -> float:
    """Mean distance over the four warped frame corners between the estimated
    and ground-truth transforms."""
    corners = [Point2(0.0, 0.0), Point2(width, 0.0), Point2(width, height), Point2(0.0, height)]
    total = 0.0
    for c in corners:
        pe = apply_homography(h_est, c)
        pg = apply_homography(h_gt, c)
        total += math.hypot(pe.x - pg.x, pe.y - pg.y)
    return total / 4.0


def auc(errors: Sequence[PairError], tau: float) -> float:
    """Area under the recall-vs-threshold curve over [0, tau], divided by tau.

    Recall at epsilon counts pairs with error <= epsilon over all N pairs,
    failures included in N with infinite error. The integral of that step
    function has the closed form sum(max(0, tau - e_i)) / (N * tau) over
    successful pairs.
    """
    if not errors:
        raise EmptyInput("auc of an empty error list")
    if not tau > 0:
        raise ValueError(f"tau must be positive, got {tau}")
    n = len(errors)
    total = 0.0
    for e in errors:
        if e.status is Status.SUCCESS and e.value < tau:
            total += tau - e.value
    return total / (n * tau)


def median_error(errors: Sequence[PairError]) -> float:
    """Median over successful pairs only; even counts average the middle two."""
    vals = [e.value for e in errors if e.status is Status.SUCCESS]
    if not vals:
        raise NoSuccesses("median undefined without successful pairs")
    return float(np.median(vals))


def success_rate(errors: Sequence[PairError], tau: float) -> float:
    """Fraction of all pairs (failures included in the denominator) that
    succeeded with error <= tau."""
    if not errors:
        raise EmptyInput("success rate of an empty error list")
    hits = sum(1 for e in errors if e.status is Status.SUCCESS and e.value <= tau)
    return hits / len(errors)


def geo_error(h_est: Homography, annotation) -> float:
    """Root-mean-square distance, in meters, between annotated satellite
    points and thermal points projected through the estimated transform."""
    sq = 0.0
    for tp, sp in zip(annotation.thermal_points, annotation.satellite_points):
        proj = apply_homography(h_est, tp)
        sq += (proj.x - sp.x) ** 2 + (proj.y - sp.y) ** 2
    rms_px = math.sqrt(sq / len(annotation.thermal_points))
    return rms_px * annotation.meters_per_pixel


def scene_balanced_auc(
    errors: Sequence[PairError],
    tags: Mapping[str, SceneSplit],
    taus: Sequence[float],
) -> dict[float, float]:
    """Three-level aggregation: AUC per scene, unweighted mean per split,
    then a mean across splits weighted by the number of scenes in each."""
    if not errors:
        raise EmptyInput("balanced auc of an empty error list")
    by_scene: dict[tuple[str, str], list[PairError]] = defaultdict(list)
    for e in errors:
        tag = tags.get(e.pair_id)
        if tag is None:
            raise MissingTag(f"pair {e.pair_id!r} has no scene/split tag")
        by_scene[(tag.split_id, tag.scene_id)].append(e)

    out: dict[float, float] = {}
    for tau in taus:
        split_scene_aucs: dict[str, list[float]] = defaultdict(list)
        for (split_id, _scene_id), scene_errors in sorted(by_scene.items()):
            split_scene_aucs[split_id].append(auc(scene_errors, tau))
        total_scenes = sum(len(v) for v in split_scene_aucs.values())
        weighted = 0.0
        for split_id in sorted(split_scene_aucs):
            vals = split_scene_aucs[split_id]
            weighted += len(vals) * (sum(vals) / len(vals))
        out[tau] = weighted / total_scenes
    return out
