"""Shared fixtures: a small manifest of random image pairs plus helpers for
invoking the bundled stub matcher."""

from __future__ import annotations

import sys

import numpy as np
import pytest

from cmbench import GrayImage, Homography, save_png
from cmbench.ingest import PairManifest, write_manifest

STUB = f"{sys.executable} -m cmbench_adapter.stub_matcher"


def stub_cmd(extra: str = "") -> str:
    """Command template for the stub matcher with optional extra flags."""
    parts = [STUB]
    if extra:
        parts.append(extra)
    parts.append("{ir} {vis} {out}")
    return " ".join(parts)


def noise_image(rng, width: int, height: int) -> GrayImage:
    return GrayImage(rng.integers(0, 256, size=(height, width)).astype(np.uint8))


def make_pair(root, rng, pair_id: str, ir_size, vis_size=None) -> PairManifest:
    vis_size = vis_size or ir_size
    img_dir = root / "img"
    img_dir.mkdir(exist_ok=True)
    save_png(noise_image(rng, *ir_size), img_dir / f"{pair_id}_ir.png")
    save_png(noise_image(rng, *vis_size), img_dir / f"{pair_id}_vis.png")
    return PairManifest(
        pair_id=pair_id,
        dataset_id="adapter-test",
        task="homography",
        ir_size=tuple(ir_size),
        vis_size=tuple(vis_size),
        ir_image=f"img/{pair_id}_ir.png",
        vis_image=f"img/{pair_id}_vis.png",
        gt_homography=Homography(np.eye(3)),
        warped_side="vis",
    )


@pytest.fixture(scope="session")
def workspace(tmp_path_factory):
    """Three-pair manifest: one needing a clean 0.8× resize, one already
    under the 640 px cap, and one mixing an exact 0.5× with an odd ratio.
    Session-scoped and read-only; write outputs to each test's tmp_path."""
    root = tmp_path_factory.mktemp("adapter-ws")
    rng = np.random.default_rng(11)
    records = [
        make_pair(root, rng, "p000", (800, 600)),
        make_pair(root, rng, "p001", (320, 240)),
        make_pair(root, rng, "p002", (1280, 960), (1001, 750)),
    ]
    write_manifest(records, root / "manifest.jsonl")
    return root
