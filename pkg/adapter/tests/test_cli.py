import json
import shutil
import subprocess

import numpy as np
import pytest

from cmbench import BranchId, load_embeddings
from cmbench.ingest import PairManifest, load_matches, write_manifest

from cmbench_adapter.cli import main
from cmbench_adapter.config import AdapterConfig

from conftest import stub_cmd


def _run_args(workspace, out, *extra):
    return ["run", "--manifest", str(workspace / "manifest.jsonl"),
            "--out", str(out), *extra]


def test_run_with_inline_flags(workspace, tmp_path, capsys):
    out = tmp_path / "m.jsonl"
    code = main(_run_args(workspace, out, "--matcher-id", "stub",
                          "--command", stub_cmd(), "--workers", "2"))
    assert code == 0
    lines = [json.loads(l) for l in capsys.readouterr().out.splitlines()]
    assert lines[-1] == {"event": "summary", "matcher_id": "stub",
                         "pairs": 3, "crashed": 0, "out": str(out)}
    assert sum(1 for l in lines if l["event"] == "pair") == 3
    loaded = load_matches(out)
    assert not loaded.quarantine and len(loaded.records) == 3


def test_run_requires_config_or_inline_flags(workspace, tmp_path, capsys):
    assert main(_run_args(workspace, tmp_path / "m.jsonl")) == 2
    assert "provide --config" in capsys.readouterr().err


def test_run_with_config_file_and_override(workspace, tmp_path, capsys):
    cfg = AdapterConfig(matcher_id="configured", command=stub_cmd())
    cfg_path = tmp_path / "cfg.json"
    cfg_path.write_text(json.dumps(cfg.to_record()), encoding="utf-8")
    out = tmp_path / "m.jsonl"
    code = main(_run_args(workspace, out, "--config", str(cfg_path), "--cap", "50"))
    assert code == 0
    records = load_matches(out, expected_cap=50).records
    assert all(r.matcher_id == "configured" for r in records)
    assert all(len(r.matches) <= 50 for r in records)


def test_run_records_requested_branch(workspace, tmp_path, capsys):
    out = tmp_path / "m.jsonl"
    code = main(_run_args(workspace, out, "--matcher-id", "stub",
                          "--command", stub_cmd(), "--branch", "scharr-lcn"))
    assert code == 0
    assert all(r.branch is BranchId.SCHARR_LCN for r in load_matches(out).records)


def test_run_rejects_unknown_branch(workspace, tmp_path, capsys):
    code = main(_run_args(workspace, tmp_path / "m.jsonl", "--matcher-id", "s",
                          "--command", stub_cmd(), "--branch", "sepia"))
    assert code == 2
    assert "unknown branch" in capsys.readouterr().err


def test_run_missing_manifest_exits_2(tmp_path, capsys):
    code = main(["run", "--manifest", str(tmp_path / "absent.jsonl"),
                 "--out", str(tmp_path / "m.jsonl"),
                 "--matcher-id", "s", "--command", stub_cmd()])
    assert code == 2


def test_crashing_batch_still_exits_0(workspace, tmp_path, capsys):
    out = tmp_path / "m.jsonl"
    code = main(_run_args(workspace, out, "--matcher-id", "s",
                          "--command", stub_cmd("--fail")))
    assert code == 0
    summary = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert summary["crashed"] == 3
    assert not load_matches(out).quarantine


def test_export_embeddings_cli(workspace, tmp_path, capsys):
    out = tmp_path / "emb.jsonl"
    code = main(["export-embeddings", "--manifest", str(workspace / "manifest.jsonl"),
                 "--out", str(out), "--provider-id", "cli-test"])
    assert code == 0
    summary = json.loads(capsys.readouterr().out.splitlines()[-1])
    assert summary == {"event": "summary", "images": 6, "dim": 640, "out": str(out)}
    provider = load_embeddings(out)
    assert provider.provider_id == "cli-test" and provider.dim == 640


def test_export_embeddings_dim_mismatch_exits_2(workspace, tmp_path, capsys):
    out = tmp_path / "emb.jsonl"
    code = main(["export-embeddings", "--manifest", str(workspace / "manifest.jsonl"),
                 "--out", str(out), "--dim", "8"])
    assert code == 2
    assert not out.exists()


def test_export_embeddings_without_images_exits_3(tmp_path, capsys):
    rec = PairManifest(pair_id="x", dataset_id="d", task="geo",
                       ir_size=(8, 8), vis_size=(8, 8),
                       annotation_file="anns.jsonl")
    from cmbench import Point2
    from cmbench.ingest import GeoAnnotation, write_geo_annotations
    write_geo_annotations(
        [GeoAnnotation("x", (Point2(1, 1),), (Point2(1, 1),), 1.0)],
        tmp_path / "anns.jsonl")
    write_manifest([rec], tmp_path / "manifest.jsonl")
    code = main(["export-embeddings", "--manifest", str(tmp_path / "manifest.jsonl"),
                 "--out", str(tmp_path / "emb.jsonl")])
    assert code == 3
    assert "no manifest pairs" in capsys.readouterr().err


def test_console_script_smoke():
    exe = shutil.which("cmbench-adapter")
    assert exe is not None
    proc = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "run" in proc.stdout and "export-embeddings" in proc.stdout
