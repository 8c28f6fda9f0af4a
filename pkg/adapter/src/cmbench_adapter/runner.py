"""Runs an out-of-process matcher over manifest pairs and writes match files
the toolkit's loaders accept without quarantine.

Per pair: load the original-resolution images, apply the configured
preprocessing branch, resize both to a 640 px long side preserving aspect,
hand the resized PNGs to the matcher subprocess, then map the returned
coordinates back to original resolution and truncate to the match cap sorted
by confidence descending.  A crashing matcher (nonzero exit, timeout,
unreadable input, unparseable output) yields a record with an empty match set
and a status note instead of aborting the batch.
"""

from __future__ import annotations

import os
import json
import shlex
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass

import numpy as np
from PIL import Image

from cmbench import GrayImage, MatchSet, apply_branch, load_image, save_png
from cmbench.ingest import MatchFileRecord, PairManifest, load_manifest

from ._io import atomic_write_text, canonical_json, resolve
from .config import AdapterConfig, MatcherCrashed

_STDERR_TAIL = 300


@dataclass(frozen=True)
class PairOutcome:
    """One pair's result: the record that went into the output file plus the
    per-pair status (0 = matcher ran, nonzero = crashed, note says why)."""

    pair_id: str
    record: MatchFileRecord
    status: int
    note: str | None
    wall_s: float
    n_raw: int      # rows the matcher returned
    n_dropped: int  # non-finite or out-of-frame rows discarded

    def progress_record(self) -> dict:
        rec = {
            "event": "pair",
            "pair_id": self.pair_id,
            "matcher_id": self.record.matcher_id,
            "status": "ok" if self.status == 0 else "crashed",
            "matches": len(self.record.matches),
            "wall_s": round(self.wall_s, 3),
        }
        if self.note is not None:
            rec["note"] = self.note
        if self.n_dropped:
            rec["dropped"] = self.n_dropped
        return rec


def _resized_dims(width: int, height: int, resize_max: int) -> tuple[int, int]:
    longest = max(width, height)
    if longest <= resize_max:
        return width, height
    s = resize_max / longest
    return max(1, round(width * s)), max(1, round(height * s))


def _resize(img: GrayImage, resize_max: int) -> GrayImage:
    h, w = img.data.shape
    nw, nh = _resized_dims(w, h, resize_max)
    if (nw, nh) == (w, h):
        return img
    pil = Image.fromarray(img.data, mode="L").resize((nw, nh), Image.Resampling.BILINEAR)
    return GrayImage(np.asarray(pil, dtype=np.uint8))


def _invoke(cfg: AdapterConfig, ir_path: str, vis_path: str, out_path: str) -> None:
    argv = [
        tok.replace("{ir}", ir_path).replace("{vis}", vis_path).replace("{out}", out_path)
        for tok in shlex.split(cfg.command)
    ]
    try:
        proc = subprocess.run(
            argv, capture_output=True, text=True, timeout=cfg.timeout_s
        )
    except FileNotFoundError as exc:
        raise MatcherCrashed(f"cannot launch matcher: {exc}") from exc
    except subprocess.TimeoutExpired as exc:
        raise MatcherCrashed(f"matcher timed out after {cfg.timeout_s}s") from exc
    if proc.returncode != 0:
        tail = " ".join(proc.stderr.split())[-_STDERR_TAIL:]
        raise MatcherCrashed(f"matcher exited with code {proc.returncode}: {tail}")


def _read_matcher_output(path: str) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as exc:
        raise MatcherCrashed(f"matcher wrote no output file: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise MatcherCrashed(f"matcher output is not JSON: {exc}") from exc
    if not isinstance(doc, dict) or not isinstance(doc.get("matches"), list):
        raise MatcherCrashed("matcher output must be an object with a 'matches' list")
    rows = doc["matches"]
    if not rows:
        return np.zeros((0, 2)), np.zeros((0, 2)), None
    widths = {len(r) if isinstance(r, (list, tuple)) else -1 for r in rows}
    if widths not in ({4}, {5}):
        raise MatcherCrashed("match rows must be uniformly 4 or 5 numbers")
    try:
        arr = np.asarray(rows, dtype=np.float64)
    except (TypeError, ValueError) as exc:
        raise MatcherCrashed(f"match rows are not numeric: {exc}") from exc
    conf = arr[:, 4] if arr.shape[1] == 5 else None
    return arr[:, 0:2], arr[:, 2:4], conf


def _empty_record(pair: PairManifest, cfg: AdapterConfig) -> MatchFileRecord:
    return MatchFileRecord(
        pair_id=pair.pair_id,
        matcher_id=cfg.matcher_id,
        branch=cfg.branch,
        matches=MatchSet(np.zeros((0, 2)), np.zeros((0, 2))),
        ir_size=pair.ir_size,
        vis_size=pair.vis_size,
        matched_ir_size=pair.ir_size,
        matched_vis_size=pair.vis_size,
        resize_policy=f"max{cfg.resize_max}",
    )


def _execute(pair: PairManifest, cfg: AdapterConfig, base_dir: str):
    if pair.ir_image is None or pair.vis_image is None:
        raise MatcherCrashed("pair declares no image paths")
    try:
        ir = load_image(resolve(base_dir, pair.ir_image))
        vis = load_image(resolve(base_dir, pair.vis_image))
    except (OSError, ValueError) as exc:
        raise MatcherCrashed(f"unreadable image: {exc}") from exc

    ir, vis = apply_branch(cfg.branch, ir, vis, cfg.preprocess)
    h_ir, w_ir = ir.data.shape
    h_vis, w_vis = vis.data.shape
    ir_small = _resize(ir, cfg.resize_max)
    vis_small = _resize(vis, cfg.resize_max)
    nh_ir, nw_ir = ir_small.data.shape
    nh_vis, nw_vis = vis_small.data.shape

    with tempfile.TemporaryDirectory(prefix="cmbench-adapter-") as td:
        ir_path = os.path.join(td, "ir.png")
        vis_path = os.path.join(td, "vis.png")
        out_path = os.path.join(td, "matches.json")
        save_png(ir_small, ir_path)
        save_png(vis_small, vis_path)
        _invoke(cfg, ir_path, vis_path, out_path)
        pts_a, pts_b, conf = _read_matcher_output(out_path)

    n_raw = len(pts_a)
    keep = np.isfinite(pts_a).all(axis=1) & np.isfinite(pts_b).all(axis=1)
    if conf is not None:
        keep &= np.isfinite(conf)
    keep &= (pts_a[:, 0] >= 0) & (pts_a[:, 0] <= nw_ir)
    keep &= (pts_a[:, 1] >= 0) & (pts_a[:, 1] <= nh_ir)
    keep &= (pts_b[:, 0] >= 0) & (pts_b[:, 0] <= nw_vis)
    keep &= (pts_b[:, 1] >= 0) & (pts_b[:, 1] <= nh_vis)
    pts_a, pts_b = pts_a[keep], pts_b[keep]
    if conf is not None:
        conf = conf[keep]
    n_dropped = n_raw - len(pts_a)

    # Map back to original resolution with the per-axis factors the resize
    # actually used, so grid points invert exactly.
    pts_a = pts_a * np.array([w_ir / nw_ir, h_ir / nh_ir])
    pts_b = pts_b * np.array([w_vis / nw_vis, h_vis / nh_vis])

    if conf is not None and len(conf) > 1:
        order = np.argsort(-conf, kind="stable")  # ties keep matcher order
        pts_a, pts_b, conf = pts_a[order], pts_b[order], conf[order]
    if len(pts_a) > cfg.match_cap:
        pts_a = pts_a[: cfg.match_cap]
        pts_b = pts_b[: cfg.match_cap]
        if conf is not None:
            conf = conf[: cfg.match_cap]

    record = MatchFileRecord(
        pair_id=pair.pair_id,
        matcher_id=cfg.matcher_id,
        branch=cfg.branch,
        matches=MatchSet(pts_a, pts_b, conf),
        ir_size=(w_ir, h_ir),
        vis_size=(w_vis, h_vis),
        matched_ir_size=(nw_ir, nh_ir),
        matched_vis_size=(nw_vis, nh_vis),
        resize_policy=f"max{cfg.resize_max}",
    )
    return record, n_raw, n_dropped


def run_matcher(pair: PairManifest, cfg: AdapterConfig, base_dir: str = ".") -> PairOutcome:
    """Run one matcher subprocess on one pair.  Never raises MatcherCrashed:
    a crash becomes an outcome with nonzero status, a note, and a record
    holding an empty match set."""
    t0 = time.perf_counter()
    try:
        record, n_raw, n_dropped = _execute(pair, cfg, base_dir)
        status, note = 0, None
    except MatcherCrashed as exc:
        record, n_raw, n_dropped = _empty_record(pair, cfg), 0, 0
        status, note = 1, str(exc)
    return PairOutcome(
        pair_id=pair.pair_id,
        record=record,
        status=status,
        note=note,
        wall_s=time.perf_counter() - t0,
        n_raw=n_raw,
        n_dropped=n_dropped,
    )


def run_batch(
    manifest_path,
    cfg: AdapterConfig,
    out_path,
    workers: int = 4,
    progress=None,
) -> list[PairOutcome]:
    """Run the matcher over every manifest pair (bounded pool, one subprocess
    per pair) and atomically write one match file sorted by pair_id.

    Crashed pairs are reported in their records' "note" field and in the
    progress stream; they never fail the batch.  `progress`, when given, is a
    text stream receiving one JSON line per finished pair.
    """
    loaded = load_manifest(manifest_path)
    base = os.path.dirname(os.path.abspath(os.fspath(manifest_path)))
    pairs = sorted(loaded.records, key=lambda p: p.pair_id)
    outcomes: dict[str, PairOutcome] = {}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        futures = [pool.submit(run_matcher, p, cfg, base) for p in pairs]
        for fut in as_completed(futures):
            outcome = fut.result()
            outcomes[outcome.pair_id] = outcome
            if progress is not None:
                progress.write(canonical_json(outcome.progress_record()) + "\n")
                progress.flush()

    ordered = [outcomes[p.pair_id] for p in pairs]
    lines = []
    for outcome in ordered:
        rec = outcome.record.to_record()
        if outcome.note is not None:
            rec["note"] = outcome.note  # extra key; toolkit loaders ignore it
        lines.append(canonical_json(rec))
    atomic_write_text(out_path, "".join(line + "\n" for line in lines))
    return ordered
