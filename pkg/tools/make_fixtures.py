"""Regenerate bundled test fixtures and documented example files.

Run from the repository root:

    python3 tools/make_fixtures.py

All outputs are seeded, so regenerating on a clean checkout leaves git clean.
"""

from __future__ import annotations

import os
import sys

import numpy as np

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, os.path.join(ROOT, "src"))

from cmbench import (  # noqa: E402
    CameraIntrinsics,
    GateTrainConfig,
    Homography,
    MatchSet,
    Point2,
    RelativePose,
    derive_seed,
    project_points,
    sample_homography,
    save_model,
    train_gate,
)
from cmbench._util import atomic_write_text, canonical_json  # noqa: E402
from cmbench.gate import GateSample  # noqa: E402
from cmbench.ingest import (  # noqa: E402
    DatasetSplit,
    GeoAnnotation,
    MatchFileRecord,
    PairManifest,
    write_geo_annotations,
    write_manifest,
    write_matches,
    write_splits,
)
from cmbench.preprocess import BranchId  # noqa: E402

E2E_DIR = os.path.join(ROOT, "tests", "fixtures", "e2e")
EXAMPLES_DIR = os.path.join(ROOT, "docs", "examples")


def matches_under_h(h: Homography, width: int, height: int, rng, n=120,
                    noise=0.0, outliers=0) -> MatchSet:
    pts_a = rng.uniform([20, 20], [width - 20, height - 20], size=(6 * n, 2))
    pts_b, valid = project_points(h, pts_a)
    keep = (valid & (pts_b[:, 0] >= 0) & (pts_b[:, 0] < width)
            & (pts_b[:, 1] >= 0) & (pts_b[:, 1] < height))
    pts_a, pts_b = pts_a[keep][:n], pts_b[keep][:n]
    if noise:
        pts_b = np.clip(pts_b + rng.normal(0, noise, pts_b.shape),
                        0, [width - 1, height - 1])
    if outliers:
        oa = rng.uniform([0, 0], [width, height], size=(outliers, 2))
        ob = rng.uniform([0, 0], [width, height], size=(outliers, 2))
        pts_a, pts_b = np.vstack([pts_a, oa]), np.vstack([pts_b, ob])
    return MatchSet(pts_a, pts_b)


def record(pair_id, matcher_id, branch, matches, size) -> MatchFileRecord:
    return MatchFileRecord(
        pair_id=pair_id, matcher_id=matcher_id, branch=branch, matches=matches,
        ir_size=size, vis_size=size, matched_ir_size=size, matched_vis_size=size)


def build_e2e() -> None:
    os.makedirs(os.path.join(E2E_DIR, "matches"), exist_ok=True)
    rng = np.random.default_rng(20240501)
    width, height = 640, 480
    pairs: list[PairManifest] = []
    recs: list[MatchFileRecord] = []

    # Synthetic homography pairs with one clean and one degraded matcher.
    for i in range(3):
        seed = derive_seed(0, "e2e-fixture", i)
        sp = sample_homography(seed, width, height)
        pid = f"e2e-h{i:03d}"
        pairs.append(PairManifest(
            pair_id=pid, dataset_id="synthetic", task="homography",
            ir_size=(width, height), vis_size=(width, height),
            gt_homography=sp.ground_truth, warped_side="vis",
            homography_seed=seed))
        recs.append(record(pid, "exact", BranchId.NONE,
                           matches_under_h(sp.ground_truth, width, height, rng),
                           (width, height)))
        recs.append(record(pid, "jitter", BranchId.NONE,
                           matches_under_h(sp.ground_truth, width, height, rng,
                                           noise=1.0, outliers=40),
                           (width, height)))

    # Geo pairs whose annotations sit exactly 8 px (4 m at 0.5 m/px) away
    # from where the true mapping puts them.
    anns = []
    for i, task in enumerate(("geo", "geo", "geo_hard", "geo_hard")):
        dx, dy = 9.0 + i, -5.0
        h = Homography.from_flat([1, 0, dx, 0, 1, dy, 0, 0, 1])
        pid = f"e2e-g{i:03d}"
        qpts = [Point2(90.0 + 35 * j, 180.0 + 12 * j) for j in range(5)]
        anns.append(GeoAnnotation(
            pid, qpts, [Point2(p.x + dx + 8.0, p.y + dy) for p in qpts],
            meters_per_pixel=0.5))
        pairs.append(PairManifest(
            pair_id=pid, dataset_id="uav", task=task,
            ir_size=(512, 512), vis_size=(512, 512),
            annotation_file="anns.jsonl"))
        recs.append(record(pid, "geo-exact", BranchId.NONE,
                           matches_under_h(h, 512, 512, rng), (512, 512)))

    write_geo_annotations(anns, os.path.join(E2E_DIR, "anns.jsonl"))
    write_manifest(pairs, os.path.join(E2E_DIR, "manifest.jsonl"))
    write_matches(recs, os.path.join(E2E_DIR, "matches", "all.jsonl"))


def build_examples() -> None:
    os.makedirs(EXAMPLES_DIR, exist_ok=True)
    rng = np.random.default_rng(7)

    h = Homography.from_flat([1.02, 0.01, 12.5, -0.01, 0.98, -7.25, 0.0, 0.0, 1.0])
    k = CameraIntrinsics(520.0, 515.0, 320.0, 240.0)
    manifest = [
        PairManifest(
            pair_id="demo-0001", dataset_id="synthetic", task="homography",
            ir_size=(640, 480), vis_size=(640, 480),
            gt_homography=h, warped_side="vis", homography_seed=12345),
        PairManifest(
            pair_id="demo-0002", dataset_id="field", task="pose",
            ir_size=(640, 480), vis_size=(640, 480),
            gt_pose=RelativePose.from_rt(np.eye(3), np.array([1.0, 0.0, 0.0])),
            intrinsics_ir=k, intrinsics_vis=k,
            scene_id="courtyard", split_id="day"),
        PairManifest(
            pair_id="demo-0003", dataset_id="uav", task="geo",
            ir_size=(512, 512), vis_size=(512, 512),
            annotation_file="geo-annotation.jsonl"),
    ]
    write_manifest(manifest, os.path.join(EXAMPLES_DIR, "pair-manifest.jsonl"))

    write_geo_annotations([
        GeoAnnotation("demo-0003",
                      [Point2(101.0, 200.0), Point2(241.5, 310.25)],
                      [Point2(109.0, 196.0), Point2(249.5, 306.25)],
                      meters_per_pixel=0.5, note="rooftop corners"),
    ], os.path.join(EXAMPLES_DIR, "geo-annotation.jsonl"))

    ms_plain = matches_under_h(h, 640, 480, rng, n=6)
    conf = np.round(rng.uniform(0.2, 1.0, size=5), 4)
    ms_conf = matches_under_h(h, 640, 480, rng, n=5)
    ms_conf = MatchSet(ms_conf.pts_a, ms_conf.pts_b, confidence=conf)
    write_matches([
        record("demo-0001", "demo-matcher", BranchId.NONE, ms_plain, (640, 480)),
        record("demo-0001", "demo-matcher", BranchId.SCHARR_LCN, ms_conf, (640, 480)),
    ], os.path.join(EXAMPLES_DIR, "match-file.jsonl"))

    write_splits([
        DatasetSplit("courtyard-train", "train", ("demo-0001",)),
        DatasetSplit("courtyard-val", "validation", ("demo-0002",)),
        DatasetSplit("rooftop-test", "test", ("demo-0003",)),
    ], os.path.join(EXAMPLES_DIR, "dataset-split.jsonl"))

    emb_lines = []
    for image_id in ("demo-0001/ir", "demo-0001/vis"):
        values = [round(float(v), 6) for v in rng.normal(0, 1, size=8)]
        emb_lines.append(canonical_json({
            "schema": "embedding@1", "image_id": image_id,
            "provider": "demo-encoder", "dim": 8, "values": values}))
    atomic_write_text(os.path.join(EXAMPLES_DIR, "embedding.jsonl"),
                      "".join(ln + "\n" for ln in emb_lines))

    sample_lines = []
    for pid, label, counts in (("demo-0001", 1, [12, 40, 9, 3]),
                               ("demo-0004", 0, [25, 11, 8, 8])):
        desc = [round(float(v), 6) for v in rng.normal(0, 1, size=8)]
        sample_lines.append(canonical_json({
            "schema": "gate-sample@1", "pair_id": pid, "matcher_id": "demo-matcher",
            "provider": "demo-encoder", "label": label, "counts": counts,
            "descriptor": desc}))
    atomic_write_text(os.path.join(EXAMPLES_DIR, "gate-sample.jsonl"),
                      "".join(ln + "\n" for ln in sample_lines))

    # A small but genuinely trained model so the example file is realistic.
    srng = np.random.default_rng(13)
    means = srng.normal(0, 1, size=(4, 6)) * 4.0
    samples = []
    for i in range(40):
        label = i % 4
        samples.append(GateSample(
            pair_id=f"train-{i:03d}",
            descriptor=means[label] + srng.normal(0, 0.5, size=6),
            label=BranchId(label), inlier_counts=(0, 0, 0, 0)))
    model, _loss = train_gate(
        samples, GateTrainConfig(learning_rate=0.3, epochs=60, seed=0),
        provider_id="demo-encoder")
    save_model(model, os.path.join(EXAMPLES_DIR, "gate-model.json"))


def main() -> int:
    build_e2e()
    build_examples()
    print(f"wrote {E2E_DIR} and {EXAMPLES_DIR}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
