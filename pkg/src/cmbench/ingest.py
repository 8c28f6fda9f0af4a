"""Persistent data contracts: pair manifests, match files, geo annotations,
dataset splits.

Every format is JSON-lines with an explicit schema-version field. Loaders are
total: any byte stream produces either typed records or a typed error (or,
for match files, a per-record quarantine entry) — never an unhandled crash.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from ._util import atomic_write_text, canonical_json
from .errors import (
    CapExceeded,
    DuplicateId,
    MisalignedLists,
    NonPositiveScale,
    ParseError,
    SchemaViolation,
)
from .geometry import CameraIntrinsics, Homography, MatchSet, Point2, RelativePose
from .preprocess import BranchId

TASKS = ("homography", "pose", "geo", "geo_hard")
MATCH_CAP = 2048
BOUNDS_SLACK_PX = 1.0

MANIFEST_SCHEMA = "pair-manifest@1"
MATCH_SCHEMA = "match-file@1"
GEO_SCHEMA = "geo-annotation@1"
SPLIT_SCHEMA = "dataset-split@1"


# ---- record types -----------------------------------------------------------

@dataclass(frozen=True)
class PairManifest:
    pair_id: str
    dataset_id: str
    task: str
    ir_size: tuple[int, int]
    vis_size: tuple[int, int]
    ir_image: str | None = None
    vis_image: str | None = None
    gt_homography: Homography | None = None
    warped_side: str | None = None
    gt_pose: RelativePose | None = None
    intrinsics_ir: CameraIntrinsics | None = None
    intrinsics_vis: CameraIntrinsics | None = None
    annotation_file: str | None = None
    annotation_path: str | None = None  # resolved against the manifest dir
    homography_seed: int | None = None
    scene_id: str | None = None
    split_id: str | None = None

    def to_record(self) -> dict:
        gt: dict = {}
        if self.task == "homography":
            w, h = self.ir_size
            gt = {
                "homography": {
                    "seed": self.homography_seed,
                    "width": w,
                    "height": h,
                    "H": self.gt_homography.flat(),
                },
                "warped": self.warped_side,
            }
        elif self.task == "pose":
            gt = {
                "pose": {
                    "R": [float(v) for v in self.gt_pose.rotation.ravel()],
                    "t": [float(v) for v in self.gt_pose.translation],
                },
                "intrinsics": {
                    "ir": _intrinsics_record(self.intrinsics_ir),
                    "vis": _intrinsics_record(self.intrinsics_vis),
                },
            }
        else:
            gt = {"annotation_file": self.annotation_file}
        return {
            "schema": MANIFEST_SCHEMA,
            "pair_id": self.pair_id,
            "dataset_id": self.dataset_id,
            "task": self.task,
            "ir_image": self.ir_image,
            "vis_image": self.vis_image,
            "ir_size": list(self.ir_size),
            "vis_size": list(self.vis_size),
            "ground_truth": gt,
            "scene_id": self.scene_id,
            "split_id": self.split_id,
        }


@dataclass(frozen=True)
class MatchFileRecord:
    pair_id: str
    matcher_id: str
    branch: BranchId
    matches: MatchSet
    ir_size: tuple[int, int]
    vis_size: tuple[int, int]
    matched_ir_size: tuple[int, int]
    matched_vis_size: tuple[int, int]
    resize_policy: str = "max640"

    def to_record(self) -> dict:
        rows = []
        conf = self.matches.confidence
        for i in range(len(self.matches)):
            row = [
                float(self.matches.pts_a[i, 0]),
                float(self.matches.pts_a[i, 1]),
                float(self.matches.pts_b[i, 0]),
                float(self.matches.pts_b[i, 1]),
            ]
            if conf is not None:
                row.append(float(conf[i]))
            rows.append(row)
        return {
            "schema": MATCH_SCHEMA,
            "pair_id": self.pair_id,
            "matcher_id": self.matcher_id,
            "branch": int(self.branch),
            "ir_size": list(self.ir_size),
            "vis_size": list(self.vis_size),
            "matched_ir_size": list(self.matched_ir_size),
            "matched_vis_size": list(self.matched_vis_size),
            "resize_policy": self.resize_policy,
            "matches": rows,
        }


@dataclass(frozen=True)
class GeoAnnotation:
    pair_id: str
    thermal_points: tuple[Point2, ...]
    satellite_points: tuple[Point2, ...]
    meters_per_pixel: float
    note: str = ""

    def __post_init__(self):
        if len(self.thermal_points) != len(self.satellite_points):
            raise MisalignedLists(
                f"{len(self.thermal_points)} thermal vs {len(self.satellite_points)} satellite points"
            )
        if len(self.thermal_points) < 1:
            raise MisalignedLists("annotation needs at least one point pair")
        if not self.meters_per_pixel > 0:
            raise NonPositiveScale(f"meters_per_pixel must be positive, got {self.meters_per_pixel}")

    def to_record(self) -> dict:
        return {
            "schema": GEO_SCHEMA,
            "pair_id": self.pair_id,
            "thermal_points": [[p.x, p.y] for p in self.thermal_points],
            "satellite_points": [[p.x, p.y] for p in self.satellite_points],
            "meters_per_pixel": self.meters_per_pixel,
            "note": self.note,
        }


@dataclass(frozen=True)
class DatasetSplit:
    name: str
    role: str
    pair_ids: tuple[str, ...]

    def to_record(self) -> dict:
        return {
            "schema": SPLIT_SCHEMA,
            "split": self.name,
            "role": self.role,
            "pair_ids": list(self.pair_ids),
        }


@dataclass(frozen=True)
class QuarantineEntry:
    line: int
    reason: str
    error_type: str


@dataclass(frozen=True)
class LoadedManifest:
    records: list[PairManifest]
    counts_by_task: dict[str, int]

    def __iter__(self) -> Iterator[PairManifest]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class LoadedMatches:
    records: list[MatchFileRecord]
    quarantine: list[QuarantineEntry] = field(default_factory=list)


# ---- low-level helpers ------------------------------------------------------

def _iter_jsonl(path: str):
    """Yield (lineno, parsed object) pairs; raises ParseError per bad line."""
    try:
        f = open(path, encoding="utf-8", errors="strict")
    except OSError as exc:
        raise ParseError(f"cannot open: {exc}", path=path) from exc
    with f:
        try:
            lines = f.readlines()
        except (OSError, UnicodeDecodeError) as exc:
            raise ParseError(f"cannot read: {exc}", path=path) from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            yield lineno, json.loads(line)
        except json.JSONDecodeError as exc:
            raise ParseError(str(exc), path=path, line=lineno) from exc


def _field(rec: dict, name: str, path: str, lineno: int):
    if name not in rec:
        raise SchemaViolation("missing field", path=path, line=lineno, field=name)
    return rec[name]


def _size(value, path: str, lineno: int, name: str) -> tuple[int, int]:
    ok = (
        isinstance(value, (list, tuple))
        and len(value) == 2
        and all(isinstance(v, int) and not isinstance(v, bool) and v > 0 for v in value)
    )
    if not ok:
        raise SchemaViolation("expected [width, height] of positive integers",
                              path=path, line=lineno, field=name)
    return int(value[0]), int(value[1])


def _number(value, path: str, lineno: int, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaViolation("expected a number", path=path, line=lineno, field=name)
    v = float(value)
    if not np.isfinite(v):
        raise SchemaViolation("expected a finite number", path=path, line=lineno, field=name)
    return v


def _string(value, path: str, lineno: int, name: str) -> str:
    if not isinstance(value, str) or not value:
        raise SchemaViolation("expected a non-empty string", path=path, line=lineno, field=name)
    return value


def _point_list(value, path: str, lineno: int, name: str) -> tuple[Point2, ...]:
    if not isinstance(value, list):
        raise SchemaViolation("expected a list of [x, y]", path=path, line=lineno, field=name)
    pts = []
    for item in value:
        if not (isinstance(item, list) and len(item) == 2):
            raise SchemaViolation("expected [x, y] entries", path=path, line=lineno, field=name)
        x = _number(item[0], path, lineno, name)
        y = _number(item[1], path, lineno, name)
        pts.append(Point2(x, y))
    return tuple(pts)


def _intrinsics_record(k: CameraIntrinsics) -> dict:
    return {"fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy}


def _parse_intrinsics(value, path: str, lineno: int, name: str) -> CameraIntrinsics:
    if not isinstance(value, dict):
        raise SchemaViolation("expected an intrinsics object", path=path, line=lineno, field=name)
    vals = {}
    for key in ("fx", "fy", "cx", "cy"):
        vals[key] = _number(value.get(key), path, lineno, f"{name}.{key}") if key in value else None
        if vals[key] is None:
            raise SchemaViolation("missing field", path=path, line=lineno, field=f"{name}.{key}")
    try:
        return CameraIntrinsics(**vals)
    except ValueError as exc:
        raise SchemaViolation(str(exc), path=path, line=lineno, field=name) from exc


# ---- manifest ---------------------------------------------------------------

def load_manifest(path) -> LoadedManifest:
    """Strict loader: any malformed record aborts with a typed error carrying
    file, line, and field."""
    path = os.fspath(path)
    base = os.path.dirname(os.path.abspath(path))
    records: list[PairManifest] = []
    seen: set[str] = set()
    counts = {t: 0 for t in TASKS}
    for lineno, rec in _iter_jsonl(path):
        if not isinstance(rec, dict):
            raise SchemaViolation("record is not an object", path=path, line=lineno)
        if rec.get("schema") != MANIFEST_SCHEMA:
            raise SchemaViolation("unknown schema", path=path, line=lineno, field="schema")
        pair_id = _string(_field(rec, "pair_id", path, lineno), path, lineno, "pair_id")
        if pair_id in seen:
            raise DuplicateId(f"{path}:{lineno}: duplicate pair_id {pair_id!r}")
        seen.add(pair_id)
        dataset_id = _string(_field(rec, "dataset_id", path, lineno), path, lineno, "dataset_id")
        task = _field(rec, "task", path, lineno)
        if task not in TASKS:
            raise SchemaViolation(f"task must be one of {TASKS}", path=path, line=lineno, field="task")
        ir_size = _size(_field(rec, "ir_size", path, lineno), path, lineno, "ir_size")
        vis_size = _size(_field(rec, "vis_size", path, lineno), path, lineno, "vis_size")

        images: dict[str, str | None] = {}
        for name in ("ir_image", "vis_image"):
            raw = rec.get(name)
            if raw is None:
                images[name] = None
                continue
            p = _string(raw, path, lineno, name)
            resolved = p if os.path.isabs(p) else os.path.join(base, p)
            if not os.path.exists(resolved):
                raise SchemaViolation(f"referenced file does not exist: {p}",
                                      path=path, line=lineno, field=name)
            images[name] = p

        gt = _field(rec, "ground_truth", path, lineno)
        if not isinstance(gt, dict):
            raise SchemaViolation("expected an object", path=path, line=lineno, field="ground_truth")

        kwargs: dict = {}
        if task == "homography":
            if "homography" not in gt:
                raise SchemaViolation("homography task needs homography ground truth",
                                      path=path, line=lineno, field="ground_truth")
            hrec = gt["homography"]
            if not isinstance(hrec, dict):
                raise SchemaViolation("expected an object", path=path, line=lineno,
                                      field="ground_truth.homography")
            hvals = hrec.get("H")
            if not (isinstance(hvals, list) and len(hvals) == 9):
                raise SchemaViolation("H must hold 9 numbers", path=path, line=lineno,
                                      field="ground_truth.homography.H")
            flat = [_number(v, path, lineno, "ground_truth.homography.H") for v in hvals]
            try:
                kwargs["gt_homography"] = Homography.from_flat(flat)
            except (ValueError, ArithmeticError) as exc:
                raise SchemaViolation(str(exc), path=path, line=lineno,
                                      field="ground_truth.homography.H") from exc
            warped = gt.get("warped")
            if warped not in ("ir", "vis"):
                raise SchemaViolation("warped side must be 'ir' or 'vis'",
                                      path=path, line=lineno, field="ground_truth.warped")
            kwargs["warped_side"] = warped
            seed = hrec.get("seed")
            if seed is not None and isinstance(seed, int) and not isinstance(seed, bool):
                kwargs["homography_seed"] = seed
        elif task == "pose":
            if "pose" not in gt or "intrinsics" not in gt:
                raise SchemaViolation("pose task needs pose + intrinsics ground truth",
                                      path=path, line=lineno, field="ground_truth")
            prec = gt["pose"]
            if not isinstance(prec, dict):
                raise SchemaViolation("expected an object", path=path, line=lineno,
                                      field="ground_truth.pose")
            rvals = prec.get("R")
            tvals = prec.get("t")
            if not (isinstance(rvals, list) and len(rvals) == 9):
                raise SchemaViolation("R must hold 9 numbers", path=path, line=lineno,
                                      field="ground_truth.pose.R")
            if not (isinstance(tvals, list) and len(tvals) == 3):
                raise SchemaViolation("t must hold 3 numbers", path=path, line=lineno,
                                      field="ground_truth.pose.t")
            r = np.array([_number(v, path, lineno, "ground_truth.pose.R") for v in rvals]).reshape(3, 3)
            t = np.array([_number(v, path, lineno, "ground_truth.pose.t") for v in tvals])
            try:
                kwargs["gt_pose"] = RelativePose.from_rt(r, t)
            except ValueError as exc:
                raise SchemaViolation(str(exc), path=path, line=lineno,
                                      field="ground_truth.pose") from exc
            intr = gt["intrinsics"]
            if not isinstance(intr, dict):
                raise SchemaViolation("expected an object", path=path, line=lineno,
                                      field="ground_truth.intrinsics")
            kwargs["intrinsics_ir"] = _parse_intrinsics(
                intr.get("ir"), path, lineno, "ground_truth.intrinsics.ir")
            kwargs["intrinsics_vis"] = _parse_intrinsics(
                intr.get("vis"), path, lineno, "ground_truth.intrinsics.vis")
            if not isinstance(rec.get("scene_id"), str) or not isinstance(rec.get("split_id"), str):
                raise SchemaViolation("pose records need scene_id and split_id",
                                      path=path, line=lineno, field="scene_id")
        else:
            ann = gt.get("annotation_file")
            if ann is None:
                raise SchemaViolation("geo task needs an annotation_file reference",
                                      path=path, line=lineno, field="ground_truth.annotation_file")
            ann = _string(ann, path, lineno, "ground_truth.annotation_file")
            resolved = ann if os.path.isabs(ann) else os.path.join(base, ann)
            if not os.path.exists(resolved):
                raise SchemaViolation(f"referenced file does not exist: {ann}",
                                      path=path, line=lineno, field="ground_truth.annotation_file")
            kwargs["annotation_file"] = ann
            kwargs["annotation_path"] = resolved

        scene_id = rec.get("scene_id")
        split_id = rec.get("split_id")
        records.append(PairManifest(
            pair_id=pair_id,
            dataset_id=dataset_id,
            task=task,
            ir_size=ir_size,
            vis_size=vis_size,
            ir_image=images["ir_image"],
            vis_image=images["vis_image"],
            scene_id=scene_id if isinstance(scene_id, str) else None,
            split_id=split_id if isinstance(split_id, str) else None,
            **kwargs,
        ))
        counts[task] += 1
    return LoadedManifest(records, counts)


def write_manifest(records, path) -> None:
    atomic_write_text(path, "".join(canonical_json(r.to_record()) + "\n" for r in records))


# ---- match files ------------------------------------------------------------

def _parse_match_record(rec, path: str, lineno: int, cap: int) -> MatchFileRecord:
    if not isinstance(rec, dict):
        raise SchemaViolation("record is not an object", path=path, line=lineno)
    if rec.get("schema") != MATCH_SCHEMA:
        raise SchemaViolation("unknown schema", path=path, line=lineno, field="schema")
    pair_id = _string(_field(rec, "pair_id", path, lineno), path, lineno, "pair_id")
    matcher_id = _string(_field(rec, "matcher_id", path, lineno), path, lineno, "matcher_id")
    branch_raw = _field(rec, "branch", path, lineno)
    if isinstance(branch_raw, bool) or not isinstance(branch_raw, int) or branch_raw not in (0, 1, 2, 3):
        raise SchemaViolation("branch must be an integer code 0-3",
                              path=path, line=lineno, field="branch")
    ir_size = _size(_field(rec, "ir_size", path, lineno), path, lineno, "ir_size")
    vis_size = _size(_field(rec, "vis_size", path, lineno), path, lineno, "vis_size")
    matched_ir = _size(rec.get("matched_ir_size", list(ir_size)), path, lineno, "matched_ir_size")
    matched_vis = _size(rec.get("matched_vis_size", list(vis_size)), path, lineno, "matched_vis_size")
    policy = rec.get("resize_policy", "none")
    if not isinstance(policy, str):
        raise SchemaViolation("expected a string", path=path, line=lineno, field="resize_policy")

    rows = _field(rec, "matches", path, lineno)
    if not isinstance(rows, list):
        raise SchemaViolation("matches must be a list", path=path, line=lineno, field="matches")
    if len(rows) > cap:
        raise CapExceeded(f"{path}:{lineno}: {len(rows)} matches exceed the cap of {cap}")
    clean = []
    for row in rows:
        if not (isinstance(row, list) and len(row) in (4, 5)):
            raise SchemaViolation("match rows are [ax, ay, bx, by] or + confidence",
                                  path=path, line=lineno, field="matches")
        vals = [_number(v, path, lineno, "matches") for v in row]
        clean.append(vals)
    widths = {len(r) for r in clean}
    if widths == {4, 5}:
        raise SchemaViolation("rows mix confidence and no-confidence forms",
                              path=path, line=lineno, field="matches")
    try:
        matches = MatchSet.from_rows(clean)
    except ValueError as exc:
        raise SchemaViolation(str(exc), path=path, line=lineno, field="matches") from exc

    for pts, (w, h), side in ((matches.pts_a, ir_size, "a"), (matches.pts_b, vis_size, "b")):
        if len(matches) and (
            pts[:, 0].min() < -BOUNDS_SLACK_PX
            or pts[:, 1].min() < -BOUNDS_SLACK_PX
            or pts[:, 0].max() > w + BOUNDS_SLACK_PX
            or pts[:, 1].max() > h + BOUNDS_SLACK_PX
        ):
            raise SchemaViolation(
                f"side-{side} coordinates fall outside the declared {w}x{h} frame "
                f"(+{BOUNDS_SLACK_PX}px slack)",
                path=path, line=lineno, field="matches",
            )
    return MatchFileRecord(
        pair_id=pair_id,
        matcher_id=matcher_id,
        branch=BranchId(branch_raw),
        matches=matches,
        ir_size=ir_size,
        vis_size=vis_size,
        matched_ir_size=matched_ir,
        matched_vis_size=matched_vis,
        resize_policy=policy,
    )


def load_matches(path, expected_cap: int = MATCH_CAP) -> LoadedMatches:
    """Per-record tolerant loader: malformed records land in the quarantine
    list with their line number; well-formed records load normally."""
    path = os.fspath(path)
    try:
        f = open(path, encoding="utf-8", errors="replace")
    except OSError as exc:
        raise ParseError(f"cannot open: {exc}", path=path) from exc
    with f:
        lines = f.readlines()

    records: list[MatchFileRecord] = []
    quarantine: list[QuarantineEntry] = []
    seen: set[tuple[str, str, int]] = set()
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            quarantine.append(QuarantineEntry(lineno, str(exc), "ParseError"))
            continue
        try:
            parsed = _parse_match_record(rec, path, lineno, expected_cap)
        except (SchemaViolation, CapExceeded) as exc:
            quarantine.append(QuarantineEntry(lineno, str(exc), type(exc).__name__))
            continue
        key = (parsed.matcher_id, parsed.pair_id, int(parsed.branch))
        if key in seen:
            quarantine.append(QuarantineEntry(
                lineno, f"duplicate (matcher, pair, branch) {key}", "DuplicateId"))
            continue
        seen.add(key)
        records.append(parsed)
    return LoadedMatches(records, quarantine)


def write_matches(records, path) -> None:
    atomic_write_text(path, "".join(canonical_json(r.to_record()) + "\n" for r in records))


# ---- geo annotations --------------------------------------------------------

def _parse_geo_record(rec, path: str, lineno: int) -> GeoAnnotation:
    if not isinstance(rec, dict):
        raise SchemaViolation("record is not an object", path=path, line=lineno)
    if rec.get("schema") != GEO_SCHEMA:
        raise SchemaViolation("unknown schema", path=path, line=lineno, field="schema")
    pair_id = _string(_field(rec, "pair_id", path, lineno), path, lineno, "pair_id")
    thermal = _point_list(_field(rec, "thermal_points", path, lineno), path, lineno, "thermal_points")
    satellite = _point_list(_field(rec, "satellite_points", path, lineno), path, lineno, "satellite_points")
    mpp = _number(_field(rec, "meters_per_pixel", path, lineno), path, lineno, "meters_per_pixel")
    note = rec.get("note", "")
    if not isinstance(note, str):
        raise SchemaViolation("expected a string", path=path, line=lineno, field="note")
    return GeoAnnotation(pair_id, thermal, satellite, mpp, note)


def load_geo_annotations(path) -> list[GeoAnnotation]:
    path = os.fspath(path)
    out = []
    seen = set()
    for lineno, rec in _iter_jsonl(path):
        ann = _parse_geo_record(rec, path, lineno)
        if ann.pair_id in seen:
            raise DuplicateId(f"{path}:{lineno}: duplicate pair_id {ann.pair_id!r}")
        seen.add(ann.pair_id)
        out.append(ann)
    return out


def load_geo_annotation(path, pair_id: str | None = None) -> GeoAnnotation:
    """Load a single annotation; pair_id selects one from a multi-record file."""
    path = os.fspath(path)
    anns = load_geo_annotations(path)
    if pair_id is not None:
        for a in anns:
            if a.pair_id == pair_id:
                return a
        raise SchemaViolation(f"no annotation for pair {pair_id!r}", path=path, field="pair_id")
    if len(anns) != 1:
        raise SchemaViolation(
            f"file holds {len(anns)} annotations; a pair_id is required", path=path)
    return anns[0]


def write_geo_annotations(annotations, path) -> None:
    atomic_write_text(path, "".join(canonical_json(a.to_record()) + "\n" for a in annotations))


# ---- dataset splits ---------------------------------------------------------

_ROLES = ("train", "validation", "test")


def load_splits(path) -> list[DatasetSplit]:
    path = os.fspath(path)
    out: list[DatasetSplit] = []
    role_of: dict[str, str] = {}
    for lineno, rec in _iter_jsonl(path):
        if not isinstance(rec, dict):
            raise SchemaViolation("record is not an object", path=path, line=lineno)
        if rec.get("schema") != SPLIT_SCHEMA:
            raise SchemaViolation("unknown schema", path=path, line=lineno, field="schema")
        name = _string(_field(rec, "split", path, lineno), path, lineno, "split")
        role = _field(rec, "role", path, lineno)
        if role not in _ROLES:
            raise SchemaViolation(f"role must be one of {_ROLES}", path=path, line=lineno, field="role")
        ids = _field(rec, "pair_ids", path, lineno)
        if not (isinstance(ids, list) and all(isinstance(i, str) and i for i in ids)):
            raise SchemaViolation("pair_ids must be non-empty strings",
                                  path=path, line=lineno, field="pair_ids")
        for pid in ids:
            if role_of.get(pid, role) != role:
                raise SchemaViolation(
                    f"pair {pid!r} appears in roles {role_of[pid]!r} and {role!r}",
                    path=path, line=lineno, field="pair_ids")
            role_of[pid] = role
        out.append(DatasetSplit(name, role, tuple(ids)))
    return out


def write_splits(splits, path) -> None:
    atomic_write_text(path, "".join(canonical_json(s.to_record()) + "\n" for s in splits))
