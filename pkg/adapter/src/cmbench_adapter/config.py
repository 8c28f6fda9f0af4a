"""Adapter run configuration.

The defaults mirror the toolkit's own evaluation settings (640 px long-side
resize, 2048-match cap), so records written here line up with what the
evaluator expects without further coordination.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from cmbench import BranchId, PreprocessParams
from cmbench.errors import CmBenchError, ParseError, SchemaViolation
from cmbench.ingest import MATCH_CAP

CONFIG_SCHEMA = "adapter-config@1"
_PLACEHOLDERS = ("{ir}", "{vis}", "{out}")


class MatcherCrashed(CmBenchError):
    """The matcher process failed: nonzero exit, timeout, unreadable input
    or unparseable output."""


@dataclass(frozen=True)
class AdapterConfig:
    matcher_id: str
    command: str
    resize_max: int = 640
    match_cap: int = MATCH_CAP
    branch: BranchId = BranchId.NONE
    device: str = "cpu"
    timeout_s: float = 120.0
    input_convention: str = "grayscale"
    preprocess: PreprocessParams = field(default_factory=PreprocessParams)

    def __post_init__(self):
        if not self.matcher_id:
            raise ValueError("matcher_id must be non-empty")
        missing = [p for p in _PLACEHOLDERS if p not in self.command]
        if missing:
            raise ValueError(
                f"command template must contain {', '.join(_PLACEHOLDERS)}; "
                f"missing {', '.join(missing)}")
        if self.resize_max <= 0:
            raise ValueError("resize_max must be positive")
        if self.match_cap <= 0:
            raise ValueError("match_cap must be positive")
        if self.timeout_s <= 0:
            raise ValueError("timeout_s must be positive")

    def to_record(self) -> dict:
        return {
            "schema": CONFIG_SCHEMA,
            "matcher_id": self.matcher_id,
            "command": self.command,
            "resize_max": self.resize_max,
            "match_cap": self.match_cap,
            "branch": int(self.branch),
            "device": self.device,
            "timeout_s": self.timeout_s,
            "input_convention": self.input_convention,
            "preprocess": self.preprocess.to_record(),
        }


def load_config(path) -> AdapterConfig:
    """Read an adapter-config@1 JSON document.

    The optional "preprocess" object uses the exact field names the toolkit
    emits in its report configs, so a config can be copied verbatim from an
    evaluation run to guarantee branch parity.
    """
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as exc:
        raise ParseError(str(exc), path=str(path)) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc), path=str(path)) from exc
    if not isinstance(doc, dict) or doc.get("schema") != CONFIG_SCHEMA:
        raise SchemaViolation("not an adapter config", path=str(path), field="schema")
    try:
        pp = doc.get("preprocess", {})
        if not isinstance(pp, dict):
            raise SchemaViolation("preprocess must be an object",
                                  path=str(path), field="preprocess")
        return AdapterConfig(
            matcher_id=str(doc["matcher_id"]),
            command=str(doc["command"]),
            resize_max=int(doc.get("resize_max", 640)),
            match_cap=int(doc.get("match_cap", MATCH_CAP)),
            branch=BranchId(int(doc.get("branch", 0))),
            device=str(doc.get("device", "cpu")),
            timeout_s=float(doc.get("timeout_s", 120.0)),
            input_convention=str(doc.get("input_convention", "grayscale")),
            preprocess=PreprocessParams(**pp),
        )
    except KeyError as exc:
        raise SchemaViolation("missing field", path=str(path), field=str(exc)) from exc
    except (TypeError, ValueError) as exc:
        raise SchemaViolation(str(exc), path=str(path)) from exc
