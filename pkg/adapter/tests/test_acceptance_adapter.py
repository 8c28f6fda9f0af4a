"""Acceptance gate for the adapter: cross-package round trips against the
toolkit's own validators.

One test per clause, with the tolerance pinned in the test:
  1. stub-matcher batch output loads through the toolkit's match loader with
     zero quarantined records;
  2. coordinate rescaling inverts the 640 px resize within 1e-6 px on grid
     points (exact-ratio, odd-ratio, and no-resize pairs);
  3. embedding export loads through the gate's external-provider path and
     serves the exact vectors that were exported.

The toolkit side must also stand alone without this package installed; its
own suite asserts that nothing there imports cmbench_adapter.
"""

import numpy as np

from cmbench import builtin_embedding, load_image
from cmbench.gate import get_provider
from cmbench.ingest import MATCH_CAP, load_manifest, load_matches

from cmbench_adapter import AdapterConfig, run_batch
from cmbench_adapter.embeddings import pair_image_entries, export_embeddings
from cmbench_adapter.stub_matcher import grid_matches

from conftest import stub_cmd

RESCALE_TOL_PX = 1e-6


def _batch(workspace, tmp_path, extra=""):
    cfg = AdapterConfig(matcher_id="stub", command=stub_cmd(extra))
    out = tmp_path / "matches.jsonl"
    outcomes = run_batch(workspace / "manifest.jsonl", cfg, out, workers=2)
    return out, outcomes


def test_secondary_stub_round_trip_zero_quarantine(workspace, tmp_path):
    out, outcomes = _batch(workspace, tmp_path)
    loaded = load_matches(out, expected_cap=MATCH_CAP)
    assert loaded.quarantine == []
    assert [r.pair_id for r in loaded.records] == ["p000", "p001", "p002"]
    for rec, outcome in zip(loaded.records, outcomes):
        assert outcome.status == 0
        assert len(rec.matches) > 0
        w_ir, h_ir = rec.ir_size
        w_vis, h_vis = rec.vis_size
        assert np.all((rec.matches.pts_a >= 0) & (rec.matches.pts_a <= [w_ir, h_ir]))
        assert np.all((rec.matches.pts_b >= 0) & (rec.matches.pts_b <= [w_vis, h_vis]))


def test_secondary_rescale_inverts_resize_within_1e6_px(workspace, tmp_path):
    out, _ = _batch(workspace, tmp_path)
    records = {r.pair_id: r for r in load_matches(out).records}
    # p000: 0.8x both sides; p001: no resize; p002: exact 0.5x IR, odd-ratio VIS
    assert records["p002"].matched_ir_size == (640, 480)
    assert records["p002"].matched_vis_size == (640, 480)
    worst = 0.0
    for rec in records.values():
        grid = np.asarray(grid_matches(rec.matched_ir_size, rec.matched_vis_size, 16, 8))
        order = np.argsort(-grid[:, 4], kind="stable")
        grid = grid[order]
        assert len(rec.matches) == len(grid)
        for pts, size, matched in (
            (rec.matches.pts_a, rec.ir_size, rec.matched_ir_size),
            (rec.matches.pts_b, rec.vis_size, rec.matched_vis_size),
        ):
            factor = np.array(matched, dtype=float) / np.array(size, dtype=float)
            err = np.abs(pts * factor - grid[:, 0:2])
            worst = max(worst, float(err.max()))
    assert worst < RESCALE_TOL_PX


def test_secondary_embedding_export_loads_through_external_provider(workspace, tmp_path):
    entries = pair_image_entries(load_manifest(workspace / "manifest.jsonl").records,
                                 str(workspace))
    out = tmp_path / "emb.jsonl"
    export_embeddings(entries, out, provider_id="adapter-acceptance")
    provider = get_provider(str(out))
    assert provider.provider_id == "adapter-acceptance"
    assert provider.dim == 640
    for image_id, path in entries:
        served = provider.embed(None, image_id=image_id)
        assert np.array_equal(served, builtin_embedding(load_image(path)))


def test_secondary_adapter_uses_only_public_toolkit_modules():
    import pathlib

    import cmbench_adapter

    pkg_dir = pathlib.Path(cmbench_adapter.__file__).parent
    for src in pkg_dir.glob("*.py"):
        assert "cmbench._" not in src.read_text(encoding="utf-8"), src.name
