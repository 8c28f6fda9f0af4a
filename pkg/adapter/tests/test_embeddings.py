import shutil

import numpy as np
import pytest

from cmbench import builtin_embedding, load_embeddings, load_image
from cmbench.errors import DimensionMismatch, DuplicateId, EmptyInput
from cmbench.ingest import load_manifest

from cmbench_adapter import export_embeddings
from cmbench_adapter.embeddings import pair_image_entries


def test_export_loads_back_with_builtin_dimension(workspace, tmp_path):
    records = load_manifest(workspace / "manifest.jsonl").records
    entries = pair_image_entries(records, str(workspace))
    out = tmp_path / "emb.jsonl"
    dim = export_embeddings(entries, out, provider_id="test-provider")
    provider = load_embeddings(out)
    assert dim == provider.dim == 640
    assert provider.provider_id == "test-provider"
    vec = provider.embed(None, image_id="p000/ir")
    assert vec.shape == (640,) and np.all(np.isfinite(vec))


def test_exported_vectors_equal_direct_computation(workspace, tmp_path):
    records = load_manifest(workspace / "manifest.jsonl").records
    entries = pair_image_entries(records, str(workspace))
    out = tmp_path / "emb.jsonl"
    export_embeddings(entries, out)
    provider = load_embeddings(out)
    for image_id, path in entries:
        expected = builtin_embedding(load_image(path))
        assert np.array_equal(provider.embed(None, image_id=image_id), expected)


def test_identical_images_get_identical_vectors(workspace, tmp_path):
    src = workspace / "img" / "p000_ir.png"
    copy = tmp_path / "copy.png"
    shutil.copy(src, copy)
    out = tmp_path / "emb.jsonl"
    export_embeddings([("a", src), ("b", copy)], out)
    provider = load_embeddings(out)
    assert np.array_equal(provider.embed(None, image_id="a"),
                          provider.embed(None, image_id="b"))


def test_entry_ids_follow_gate_key_scheme(workspace):
    records = load_manifest(workspace / "manifest.jsonl").records
    entries = pair_image_entries(records, str(workspace))
    assert [e[0] for e in entries] == [
        "p000/ir", "p000/vis", "p001/ir", "p001/vis", "p002/ir", "p002/vis",
    ]


def test_pairs_without_images_are_skipped(workspace):
    records = load_manifest(workspace / "manifest.jsonl").records
    stripped = [r for r in records][:1]
    import dataclasses
    stripped.append(dataclasses.replace(records[1], ir_image=None, vis_image=None))
    entries = pair_image_entries(stripped, str(workspace))
    assert [e[0] for e in entries] == ["p000/ir", "p000/vis"]


def test_duplicate_id_aborts_before_writing(workspace, tmp_path):
    src = workspace / "img" / "p000_ir.png"
    out = tmp_path / "emb.jsonl"
    out.write_text("previous contents\n", encoding="utf-8")
    with pytest.raises(DuplicateId):
        export_embeddings([("a", src), ("a", src)], out)
    assert out.read_text(encoding="utf-8") == "previous contents\n"


def test_declared_dim_mismatch_aborts_before_writing(workspace, tmp_path):
    src = workspace / "img" / "p000_ir.png"
    out = tmp_path / "emb.jsonl"
    with pytest.raises(DimensionMismatch):
        export_embeddings([("a", src)], out, dim=8)
    assert not out.exists()


def test_matching_declared_dim_is_accepted(workspace, tmp_path):
    src = workspace / "img" / "p000_ir.png"
    out = tmp_path / "emb.jsonl"
    assert export_embeddings([("a", src)], out, dim=640) == 640
    assert load_embeddings(out).dim == 640


def test_no_entries_raises(tmp_path):
    with pytest.raises(EmptyInput):
        export_embeddings([], tmp_path / "emb.jsonl")
