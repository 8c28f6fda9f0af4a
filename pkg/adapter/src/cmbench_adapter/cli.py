"""Command-line front end.

`run` executes a configured matcher over every manifest pair and writes one
match file; `export-embeddings` writes the gate's embedding file for every
manifest image.  All stdout lines are JSON objects, one per line.  Exit
codes: 0 success (matcher crashes on individual pairs do not fail a batch),
2 bad configuration or invalid input, 3 nothing to process.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys

from cmbench import BranchId, CmBenchError
from cmbench.ingest import load_manifest

from ._io import canonical_json
from .config import AdapterConfig, load_config
from .embeddings import DEFAULT_PROVIDER, export_embeddings, pair_image_entries
from .runner import run_batch

_BRANCHES = {
    "none": BranchId.NONE,
    "unsharp": BranchId.UNSHARP,
    "scharr_lcn": BranchId.SCHARR_LCN,
    "morph_gradient": BranchId.MORPH_GRADIENT,
}


def _parse_branch(text: str) -> BranchId:
    key = text.strip().lower().replace("-", "_")
    if key in _BRANCHES:
        return _BRANCHES[key]
    try:
        return BranchId(int(key))
    except ValueError:
        raise ValueError(
            f"unknown branch {text!r}; use one of {', '.join(_BRANCHES)} or 0-3"
        ) from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="cmbench-adapter",
        description="Bridge external matchers to the cmbench evaluation toolkit.",
    )
    sub = ap.add_subparsers(dest="cmd", required=True)

    run = sub.add_parser("run", help="run a matcher over manifest pairs")
    run.add_argument("--manifest", required=True)
    run.add_argument("--out", required=True, help="match file to write")
    run.add_argument("--config", help="adapter-config@1 JSON file")
    run.add_argument("--matcher-id", help="matcher identity recorded in the output")
    run.add_argument("--command",
                     help="matcher command template containing {ir} {vis} {out}")
    run.add_argument("--branch", help="preprocess branch: name or 0-3")
    run.add_argument("--resize-max", type=int)
    run.add_argument("--cap", type=int, help="maximum matches kept per pair")
    run.add_argument("--timeout", type=float, help="per-pair matcher timeout, seconds")
    run.add_argument("--device", help="device hint passed through to the config record")
    run.add_argument("--workers", type=int, default=4)

    exp = sub.add_parser("export-embeddings",
                         help="write the gate's embedding file for manifest images")
    exp.add_argument("--manifest", required=True)
    exp.add_argument("--out", required=True)
    exp.add_argument("--provider-id", default=DEFAULT_PROVIDER)
    exp.add_argument("--dim", type=int, help="declared dimension; mismatch aborts")
    return ap


def _build_config(args) -> AdapterConfig:
    overrides: dict = {}
    if args.matcher_id is not None:
        overrides["matcher_id"] = args.matcher_id
    if args.command is not None:
        overrides["command"] = args.command
    if args.branch is not None:
        overrides["branch"] = _parse_branch(args.branch)
    if args.resize_max is not None:
        overrides["resize_max"] = args.resize_max
    if args.cap is not None:
        overrides["match_cap"] = args.cap
    if args.timeout is not None:
        overrides["timeout_s"] = args.timeout
    if args.device is not None:
        overrides["device"] = args.device

    if args.config is not None:
        return dataclasses.replace(load_config(args.config), **overrides)
    if "matcher_id" not in overrides or "command" not in overrides:
        raise ValueError("provide --config, or both --matcher-id and --command")
    return AdapterConfig(**overrides)


def _cmd_run(args) -> int:
    cfg = _build_config(args)
    outcomes = run_batch(args.manifest, cfg, args.out,
                         workers=args.workers, progress=sys.stdout)
    summary = {
        "event": "summary",
        "matcher_id": cfg.matcher_id,
        "pairs": len(outcomes),
        "crashed": sum(1 for oc in outcomes if oc.status != 0),
        "out": args.out,
    }
    print(canonical_json(summary), flush=True)
    return 0


def _cmd_export(args) -> int:
    loaded = load_manifest(args.manifest)
    base = os.path.dirname(os.path.abspath(args.manifest))
    entries = pair_image_entries(loaded.records, base)
    if not entries:
        print("error: no manifest pairs carry image paths", file=sys.stderr)
        return 3
    dim = export_embeddings(entries, args.out,
                            provider_id=args.provider_id, dim=args.dim)
    summary = {"event": "summary", "images": len(entries), "dim": dim, "out": args.out}
    print(canonical_json(summary), flush=True)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.cmd == "run":
            return _cmd_run(args)
        return _cmd_export(args)
    except (CmBenchError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
