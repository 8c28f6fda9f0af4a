import json

import pytest

from cmbench import BranchId, PreprocessParams
from cmbench.errors import ParseError, SchemaViolation
from cmbench.ingest import MATCH_CAP

from cmbench_adapter import AdapterConfig, load_config


def test_defaults_match_toolkit_evaluation_settings():
    cfg = AdapterConfig(matcher_id="m", command="run {ir} {vis} {out}")
    assert cfg.resize_max == 640
    assert cfg.match_cap == MATCH_CAP
    assert cfg.branch is BranchId.NONE
    assert cfg.preprocess == PreprocessParams()


@pytest.mark.parametrize("missing", ["{ir}", "{vis}", "{out}"])
def test_command_requires_all_placeholders(missing):
    command = "run {ir} {vis} {out}".replace(missing, "x")
    with pytest.raises(ValueError, match="placeholder|must contain"):
        AdapterConfig(matcher_id="m", command=command)


@pytest.mark.parametrize("kwargs", [
    {"matcher_id": ""},
    {"resize_max": 0},
    {"resize_max": -640},
    {"match_cap": 0},
    {"timeout_s": 0.0},
])
def test_invalid_fields_rejected(kwargs):
    base = {"matcher_id": "m", "command": "run {ir} {vis} {out}"}
    with pytest.raises(ValueError):
        AdapterConfig(**{**base, **kwargs})


def test_load_config_round_trip(tmp_path):
    cfg = AdapterConfig(
        matcher_id="loftr-stub",
        command="python3 matcher.py --device {ir} {vis} {out}".replace("--device", "--x"),
        resize_max=512,
        match_cap=100,
        branch=BranchId.SCHARR_LCN,
        device="cuda:1",
        timeout_s=30.0,
        input_convention="rgb",
        preprocess=PreprocessParams(unsharp_sigma=2.0, lcn_window=9),
    )
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(cfg.to_record()), encoding="utf-8")
    assert load_config(path) == cfg


def test_load_config_accepts_toolkit_emitted_preprocess_shape(tmp_path):
    # The "preprocess" object uses the exact keys the toolkit writes in its
    # report configs, so copying one over guarantees branch parity.
    doc = {
        "schema": "adapter-config@1",
        "matcher_id": "m",
        "command": "run {ir} {vis} {out}",
        "preprocess": PreprocessParams().to_record(),
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    cfg = load_config(path)
    assert cfg.preprocess == PreprocessParams()
    assert cfg.resize_max == 640
    assert cfg.match_cap == MATCH_CAP


def test_load_config_rejects_wrong_schema(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text('{"schema": "other@1"}', encoding="utf-8")
    with pytest.raises(SchemaViolation):
        load_config(path)


def test_load_config_rejects_malformed_json(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ParseError):
        load_config(path)


def test_load_config_rejects_unknown_preprocess_key(tmp_path):
    doc = {
        "schema": "adapter-config@1",
        "matcher_id": "m",
        "command": "run {ir} {vis} {out}",
        "preprocess": {"bogus_knob": 1.0},
    }
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    with pytest.raises(SchemaViolation):
        load_config(path)


def test_load_config_missing_required_field(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text('{"schema": "adapter-config@1", "matcher_id": "m"}', encoding="utf-8")
    with pytest.raises(SchemaViolation):
        load_config(path)
