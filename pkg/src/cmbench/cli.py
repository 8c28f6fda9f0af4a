"""Command-line front door.

Runs each benchmark task end-to-end from a pair manifest plus a directory of
match files, trains and evaluates the branch-selection gate, and merges
reports. Reports are byte-deterministic: worker count never changes output,
per-pair randomness is derived from the run seed with a cryptographic hash,
and rows are reduced in sorted order.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import gate as gate_mod
from . import ingest, metrics, preprocess, synth
from ._util import atomic_write_text, canonical_json, derive_seed, fingerprint
from .errors import (
    CmBenchError,
    DegeneratePoint,
    FingerprintMismatch,
    NoSuccesses,
    ParseError,
    SingularMatrix,
)
from .estimate import RansacConfig, Status, estimate_relative_pose, ransac_homography
from .geometry import (
    CameraIntrinsics,
    Homography,
    MatchSet,
    invert_homography,
    pose_angular_error,
)
from .ingest import LoadedMatches, MatchFileRecord, PairManifest
from .metrics import PairError, SceneSplit
from .preprocess import BranchId, PreprocessParams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_EMPTY = 3

_PX_TAUS = (5.0, 10.0, 20.0)
_DEG_TAUS = (5.0, 10.0, 20.0)
_GEO_TAUS = (3.0, 5.0, 10.0)
_CATEGORIES = ("sparse", "semi-dense", "dense")
_DASH = "—"


@dataclass(frozen=True)
class RunConfig:
    manifest: str
    matches_dir: str
    task: str
    ransac: RansacConfig
    out: str | None = None
    fmt: str = "csv"
    seed: int = 0
    max_matches: int = ingest.MATCH_CAP
    resize_max: int = 640
    workers: int = 1
    branch: BranchId = BranchId.NONE
    matchers: tuple[str, ...] = ()
    categories: dict[str, str] = field(default_factory=dict)
    preprocess_params: PreprocessParams = field(default_factory=PreprocessParams)

    def fingerprint_config(self) -> dict:
        return {
            "task": self.task,
            "seed": self.seed,
            "ransac": {
                "threshold": self.ransac.threshold,
                "max_iterations": self.ransac.max_iterations,
                "confidence": self.ransac.confidence,
            },
            "max_matches": self.max_matches,
            "resize_max": self.resize_max,
            "branch": int(self.branch),
            "preprocess": self.preprocess_params.to_record(),
        }


@dataclass(frozen=True)
class ReportRow:
    matcher_id: str
    category: str
    task: str
    success_rate: float
    metric_values: dict[str, float | None]
    fingerprint: str

    def to_record(self) -> dict:
        return {
            "matcher_id": self.matcher_id,
            "category": self.category,
            "task": self.task,
            "success_rate": self.success_rate,
            "metrics": self.metric_values,
            "fingerprint": self.fingerprint,
        }


# ---- shared evaluation plumbing ---------------------------------------------

def _resize_scale(size: tuple[int, int], resize_max: int) -> float:
    """Downscale factor bringing the longer side to resize_max (never up)."""
    return min(1.0, resize_max / max(size))


def _scale_h(s: float) -> Homography:
    return Homography.scale(s)


def _eval_homography_gt(gt: Homography, s_ir: float, s_vis: float) -> Homography:
    """Conjugate a ground-truth transform into evaluation-resolution frames."""
    return _scale_h(s_vis).compose(gt).compose(invert_homography(_scale_h(s_ir)))


def _prepare_matches(rec: MatchFileRecord, s_a: float, s_b: float, cap: int) -> MatchSet:
    """Rescale stored original-resolution coordinates to evaluation
    resolution and keep at most cap matches (most confident first)."""
    ms = rec.matches
    if len(ms) > cap:
        if ms.confidence is not None:
            order = np.argsort(-ms.confidence, kind="stable")[:cap]
            order = np.sort(order)
        else:
            order = np.arange(cap)
        ms = ms.take(order)
    return ms.scaled(s_a, s_b)


def _pair_seed(cfg: RunConfig, matcher_id: str, pair_id: str) -> int:
    return derive_seed(cfg.seed, cfg.task, matcher_id, pair_id, int(cfg.branch))


def _pair_ransac(cfg: RunConfig, matcher_id: str, pair_id: str) -> RansacConfig:
    return dataclasses.replace(cfg.ransac, seed=_pair_seed(cfg, matcher_id, pair_id))


class _MatchIndex:
    """All match records under a directory, keyed (matcher, pair, branch);
    the first occurrence in sorted file order wins."""

    def __init__(self, records: dict, matcher_ids: set[str], quarantined: int, files: int):
        self.records = records
        self.matcher_ids = matcher_ids
        self.quarantined = quarantined
        self.files = files

    def get(self, matcher_id: str, pair_id: str, branch: BranchId) -> MatchFileRecord | None:
        return self.records.get((matcher_id, pair_id, int(branch)))


def _index_matches(matches_dir: str, cap: int) -> _MatchIndex:
    paths = []
    for root, _dirs, files in os.walk(matches_dir):
        for name in files:
            if name.endswith(".jsonl"):
                paths.append(os.path.join(root, name))
    records: dict = {}
    matcher_ids: set[str] = set()
    quarantined = 0
    for path in sorted(paths):
        loaded: LoadedMatches = ingest.load_matches(path, expected_cap=cap)
        quarantined += len(loaded.quarantine)
        for rec in loaded.records:
            key = (rec.matcher_id, rec.pair_id, int(rec.branch))
            if key not in records:
                records[key] = rec
            matcher_ids.add(rec.matcher_id)
    return _MatchIndex(records, matcher_ids, quarantined, len(paths))


def _category_of(cfg: RunConfig, matcher_id: str) -> str:
    return cfg.categories.get(matcher_id, "sparse")


def _evaluate_homography_pair(
    cfg: RunConfig, matcher_id: str, pair: PairManifest, rec: MatchFileRecord | None,
    branch: BranchId | None = None,
) -> PairError:
    if rec is None or len(rec.matches) < 4:
        return PairError.failed(pair.pair_id)
    s_ir = _resize_scale(pair.ir_size, cfg.resize_max)
    s_vis = _resize_scale(pair.vis_size, cfg.resize_max)
    ms = _prepare_matches(rec, s_ir, s_vis, cfg.max_matches)
    rcfg = _pair_ransac(cfg, matcher_id, pair.pair_id)
    if branch is not None:
        rcfg = dataclasses.replace(rcfg, seed=derive_seed(cfg.seed, cfg.task, matcher_id, pair.pair_id, int(branch)))
    res = ransac_homography(ms, rcfg)
    if res.status is Status.FAILED:
        return PairError.failed(pair.pair_id)
    try:
        gt = _eval_homography_gt(pair.gt_homography, s_ir, s_vis)
        err = metrics.corner_error(
            res.model, gt, pair.ir_size[0] * s_ir, pair.ir_size[1] * s_ir)
    except (DegeneratePoint, SingularMatrix):
        return PairError.failed(pair.pair_id)
    return PairError.success(pair.pair_id, err)


def _evaluate_pose_pair(
    cfg: RunConfig, matcher_id: str, pair: PairManifest, rec: MatchFileRecord | None,
) -> PairError:
    if rec is None or len(rec.matches) < 8:
        return PairError.failed(pair.pair_id)
    s_ir = _resize_scale(pair.ir_size, cfg.resize_max)
    s_vis = _resize_scale(pair.vis_size, cfg.resize_max)
    ms = _prepare_matches(rec, s_ir, s_vis, cfg.max_matches)
    k1 = pair.intrinsics_ir.scaled(s_ir)
    k2 = pair.intrinsics_vis.scaled(s_vis)
    res = estimate_relative_pose(ms, k1, k2, _pair_ransac(cfg, matcher_id, pair.pair_id))
    if res.status is Status.FAILED:
        return PairError.failed(pair.pair_id)
    return PairError.success(pair.pair_id, pose_angular_error(res.model, pair.gt_pose))


def _evaluate_geo_pair(
    cfg: RunConfig, matcher_id: str, pair: PairManifest, rec: MatchFileRecord | None,
    annotation: ingest.GeoAnnotation,
    branch: BranchId | None = None,
) -> PairError:
    if rec is None or len(rec.matches) < 4:
        return PairError.failed(pair.pair_id)
    s_ir = _resize_scale(pair.ir_size, cfg.resize_max)
    s_vis = _resize_scale(pair.vis_size, cfg.resize_max)
    ms = _prepare_matches(rec, s_ir, s_vis, cfg.max_matches)
    rcfg = _pair_ransac(cfg, matcher_id, pair.pair_id)
    if branch is not None:
        rcfg = dataclasses.replace(rcfg, seed=derive_seed(cfg.seed, cfg.task, matcher_id, pair.pair_id, int(branch)))
    res = ransac_homography(ms, rcfg)
    if res.status is Status.FAILED:
        return PairError.failed(pair.pair_id)
    try:
        # Back to original resolution: the annotation lives there.
        h_orig = invert_homography(_scale_h(s_vis)).compose(res.model).compose(_scale_h(s_ir))
        err = metrics.geo_error(h_orig, annotation)
    except (DegeneratePoint, SingularMatrix):
        return PairError.failed(pair.pair_id)
    return PairError.success(pair.pair_id, err)


def _parallel_pairs(cfg: RunConfig, jobs: list, fn) -> dict:
    """Evaluate (key, callable) jobs with the configured worker count; the
    result dict is keyed so reduction order never depends on scheduling."""
    results: dict = {}
    if cfg.workers <= 1:
        for key, job in jobs:
            results[key] = fn(job)
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = {key: pool.submit(fn, job) for key, job in jobs}
            for key, fut in futures.items():
                results[key] = fut.result()
    return results


def _sorted_rows(rows: list[ReportRow], primary: str) -> list[ReportRow]:
    """Category blocks in fixed order; inside each, primary metric descending
    with matcher id as the deterministic tiebreak."""
    def key(row: ReportRow):
        cat = _CATEGORIES.index(row.category) if row.category in _CATEGORIES else len(_CATEGORIES)
        v = row.metric_values.get(primary)
        return (cat, -(v if v is not None else -math.inf), row.matcher_id)

    return sorted(rows, key=key)


# ---- report emission --------------------------------------------------------

def _fmt_value(v: float | None) -> str:
    return _DASH if v is None else f"{v:.6f}"


def _metric_columns(task: str) -> list[str]:
    if task in ("geo", "geo_hard"):
        return ["mederr_m", "sr@3m", "sr@5m", "sr@10m"]
    if task == "pose":
        return ["auc@5deg", "auc@10deg", "auc@20deg"]
    return ["auc@5px", "auc@10px", "auc@20px"]


def _render_csv(rows: list[ReportRow], task: str) -> str:
    cols = _metric_columns(task)
    lines = ["matcher_id,category,task,success_rate," + ",".join(cols) + ",fingerprint"]
    for r in rows:
        vals = ",".join(_fmt_value(r.metric_values.get(c)) for c in cols)
        lines.append(
            f"{r.matcher_id},{r.category},{r.task},{r.success_rate:.6f},{vals},{r.fingerprint}")
    return "\n".join(lines) + "\n"


def _render_json(rows: list[ReportRow], task: str, cfg_doc: dict, fp: str) -> str:
    doc = {
        "schema": "report@1",
        "task": task,
        "config": cfg_doc,
        "fingerprint": fp,
        "rows": [r.to_record() for r in rows],
    }
    return canonical_json(doc) + "\n"


def _render_table(rows: list[ReportRow], task: str) -> str:
    cols = ["matcher_id", "category", "success_rate"] + _metric_columns(task)
    table = [cols]
    for r in rows:
        table.append(
            [r.matcher_id, r.category, f"{r.success_rate:.4f}"]
            + [(_DASH if r.metric_values.get(c) is None else f"{r.metric_values[c]:.4f}")
               for c in _metric_columns(task)]
        )
    widths = [max(len(row[i]) for row in table) for i in range(len(cols))]
    out = []
    for irow, row in enumerate(table):
        out.append("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if irow == 0:
            out.append("  ".join("-" * w for w in widths))
    return "\n".join(out) + "\n"


def _emit(cfg: RunConfig, rows: list[ReportRow], task: str) -> None:
    fp = fingerprint(cfg.fingerprint_config())
    text = (
        _render_csv(rows, task)
        if cfg.fmt == "csv"
        else _render_json(rows, task, cfg.fingerprint_config(), fp)
    )
    if cfg.out:
        atomic_write_text(cfg.out, text)
        print(f"wrote {cfg.out} ({len(rows)} rows)")
    else:
        sys.stdout.write(text)


# ---- eval commands ----------------------------------------------------------

def _load_task_manifest(cfg: RunConfig, tasks: tuple[str, ...]) -> list[PairManifest] | int:
    try:
        loaded = ingest.load_manifest(cfg.manifest)
    except CmBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    pairs = [m for m in loaded.records if m.task in tasks]
    if not pairs:
        print(f"error: manifest holds no pairs for task(s) {tasks}", file=sys.stderr)
        return EXIT_EMPTY
    return pairs


def _matcher_list(cfg: RunConfig, index: _MatchIndex) -> list[str] | int:
    if cfg.matchers:
        return sorted(cfg.matchers)
    if not index.matcher_ids:
        print("error: no match records found and no --matchers given", file=sys.stderr)
        return EXIT_EMPTY
    return sorted(index.matcher_ids)


def _run_matcher_task(cfg: RunConfig, pairs, index, per_pair_fn) -> dict[str, list[PairError]]:
    matchers = _matcher_list(cfg, index)
    if isinstance(matchers, int):
        return matchers  # exit code
    jobs = []
    for matcher_id in matchers:
        for pair in pairs:
            rec = index.get(matcher_id, pair.pair_id, cfg.branch)
            jobs.append(((matcher_id, pair.pair_id), (matcher_id, pair, rec)))
    results = _parallel_pairs(cfg, jobs, lambda j: per_pair_fn(*j))
    out: dict[str, list[PairError]] = {m: [] for m in matchers}
    for (matcher_id, pair_id) in sorted(results):
        out[matcher_id].append(results[(matcher_id, pair_id)])
    return out


def _success_fraction(errors: list[PairError]) -> float:
    return sum(1 for e in errors if e.status is Status.SUCCESS) / len(errors)


def cmd_eval_homography(cfg: RunConfig) -> int:
    pairs = _load_task_manifest(cfg, ("homography",))
    if isinstance(pairs, int):
        return pairs
    index = _index_matches(cfg.matches_dir, cfg.max_matches)
    per_matcher = _run_matcher_task(
        cfg, pairs, index, lambda m, p, r: _evaluate_homography_pair(cfg, m, p, r))
    if isinstance(per_matcher, int):
        return per_matcher
    fp = fingerprint(cfg.fingerprint_config())
    rows = []
    for matcher_id, errors in per_matcher.items():
        vals = {f"auc@{int(t)}px": metrics.auc(errors, t) for t in _PX_TAUS}
        rows.append(ReportRow(
            matcher_id, _category_of(cfg, matcher_id), "homography",
            _success_fraction(errors), vals, fp))
    _emit(cfg, _sorted_rows(rows, "auc@5px"), "homography")
    return EXIT_OK


def cmd_eval_pose(cfg: RunConfig) -> int:
    pairs = _load_task_manifest(cfg, ("pose",))
    if isinstance(pairs, int):
        return pairs
    tags = {p.pair_id: SceneSplit(p.scene_id, p.split_id) for p in pairs}
    index = _index_matches(cfg.matches_dir, cfg.max_matches)
    per_matcher = _run_matcher_task(
        cfg, pairs, index, lambda m, p, r: _evaluate_pose_pair(cfg, m, p, r))
    if isinstance(per_matcher, int):
        return per_matcher
    fp = fingerprint(cfg.fingerprint_config())
    rows = []
    for matcher_id, errors in per_matcher.items():
        balanced = metrics.scene_balanced_auc(errors, tags, _DEG_TAUS)
        vals = {f"auc@{int(t)}deg": balanced[t] for t in _DEG_TAUS}
        rows.append(ReportRow(
            matcher_id, _category_of(cfg, matcher_id), "pose",
            _success_fraction(errors), vals, fp))
    _emit(cfg, _sorted_rows(rows, "auc@5deg"), "pose")
    return EXIT_OK


def _annotation_for(pair: PairManifest, cache: dict) -> ingest.GeoAnnotation:
    anns = cache.get(pair.annotation_path)
    if anns is None:
        anns = {a.pair_id: a for a in ingest.load_geo_annotations(pair.annotation_path)}
        cache[pair.annotation_path] = anns
    if pair.pair_id not in anns:
        raise ParseError(f"no annotation for pair {pair.pair_id!r}", path=pair.annotation_path)
    return anns[pair.pair_id]


def cmd_eval_geo(cfg: RunConfig, tasks: tuple[str, ...] = ("geo", "geo_hard")) -> int:
    pairs = _load_task_manifest(cfg, tasks)
    if isinstance(pairs, int):
        return pairs
    ann_cache: dict = {}
    try:
        annotations = {p.pair_id: _annotation_for(p, ann_cache) for p in pairs}
    except CmBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    index = _index_matches(cfg.matches_dir, cfg.max_matches)

    by_task: dict[str, list[PairManifest]] = {}
    for p in pairs:
        by_task.setdefault(p.task, []).append(p)
    all_rows = []
    fp = fingerprint(cfg.fingerprint_config())
    for task in sorted(by_task):
        per_matcher = _run_matcher_task(
            cfg, by_task[task], index,
            lambda m, p, r: _evaluate_geo_pair(cfg, m, p, r, annotations[p.pair_id]))
        if isinstance(per_matcher, int):
            return per_matcher
        for matcher_id, errors in per_matcher.items():
            try:
                med = metrics.median_error(errors)
            except NoSuccesses:
                med = None
            vals: dict[str, float | None] = {"mederr_m": med}
            for t in _GEO_TAUS:
                vals[f"sr@{int(t)}m"] = metrics.success_rate(errors, t)
            all_rows.append(ReportRow(
                matcher_id, _category_of(cfg, matcher_id), task,
                _success_fraction(errors), vals, fp))
    _emit(cfg, _sorted_rows(all_rows, "sr@3m"), by_task and sorted(by_task)[0] or "geo")
    return EXIT_OK


# ---- gate commands ----------------------------------------------------------

def _descriptor_for_pair(cfg: RunConfig, pair: PairManifest, provider, cache_dir: str | None):
    """Fused descriptor for a pair; raises on unembeddable pairs."""
    base = os.path.dirname(os.path.abspath(cfg.manifest))
    if isinstance(provider, gate_mod.ExternalProvider):
        f_ir = provider.embed(None, image_id=f"{pair.pair_id}/ir")
        f_vis = provider.embed(None, image_id=f"{pair.pair_id}/vis")
        return gate_mod.fuse(f_ir, f_vis)
    if not pair.ir_image or not pair.vis_image:
        raise FileNotFoundError(f"pair {pair.pair_id!r} has no image paths; the builtin "
                                "embedding provider needs images")
    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)
    f_ir = gate_mod.embed_image_file(resolve(pair.ir_image), provider, cache_dir)
    f_vis = gate_mod.embed_image_file(resolve(pair.vis_image), provider, cache_dir)
    return gate_mod.fuse(f_ir, f_vis)


def cmd_gate_label(cfg: RunConfig, matcher_id: str, provider_spec: str,
                   out_path: str, skip_path: str | None) -> int:
    pairs = _load_task_manifest(cfg, ("homography", "pose", "geo", "geo_hard"))
    if isinstance(pairs, int):
        return pairs
    try:
        provider = gate_mod.get_provider(provider_spec)
    except CmBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    index = _index_matches(cfg.matches_dir, cfg.max_matches)
    cache_dir = os.environ.get("CMBENCH_CACHE_DIR") or None

    samples: list[dict] = []
    skipped: list[dict] = []
    for pair in sorted(pairs, key=lambda p: p.pair_id):
        recs = {b: index.get(matcher_id, pair.pair_id, b) for b in BranchId}
        missing = [int(b) for b, r in recs.items() if r is None]
        if missing:
            skipped.append({"schema": "gate-skip@1", "pair_id": pair.pair_id,
                            "reason": f"missing match records for branches {missing}"})
            continue
        s_ir = _resize_scale(pair.ir_size, cfg.resize_max)
        s_vis = _resize_scale(pair.vis_size, cfg.resize_max)
        counts = []
        failures = 0
        for b in sorted(BranchId):
            ms = _prepare_matches(recs[b], s_ir, s_vis, cfg.max_matches)
            rcfg = dataclasses.replace(
                cfg.ransac, seed=derive_seed(cfg.seed, "gate-label", matcher_id, pair.pair_id, int(b)))
            res = ransac_homography(ms, rcfg)
            if res.status is Status.FAILED:
                failures += 1
                counts.append(0)
            else:
                counts.append(res.inlier_count)
        if failures == len(BranchId):
            skipped.append({"schema": "gate-skip@1", "pair_id": pair.pair_id,
                            "reason": "all branches failed estimation"})
            continue
        try:
            desc = _descriptor_for_pair(cfg, pair, provider, cache_dir)
        except (OSError, KeyError, CmBenchError) as exc:
            skipped.append({"schema": "gate-skip@1", "pair_id": pair.pair_id,
                            "reason": f"descriptor unavailable: {exc}"})
            continue
        label = gate_mod.argmax_branch(counts)
        samples.append({
            "schema": "gate-sample@1",
            "pair_id": pair.pair_id,
            "matcher_id": matcher_id,
            "provider": provider.provider_id,
            "label": int(label),
            "counts": counts,
            "descriptor": [float(v) for v in desc],
        })

    atomic_write_text(out_path, "".join(canonical_json(s) + "\n" for s in samples))
    skip_out = skip_path or out_path + ".skipped.jsonl"
    atomic_write_text(skip_out, "".join(canonical_json(s) + "\n" for s in skipped))
    print(f"wrote {len(samples)} samples to {out_path}; skipped {len(skipped)} "
          f"(listed in {skip_out})")
    return EXIT_OK if samples else EXIT_EMPTY


def _load_gate_samples(path: str) -> tuple[list[gate_mod.GateSample], str]:
    samples = []
    provider_id = "builtin"
    for lineno, rec in ingest._iter_jsonl(path):
        if not isinstance(rec, dict) or rec.get("schema") != "gate-sample@1":
            raise ingest.SchemaViolation("not a gate sample", path=path, line=lineno, field="schema")
        provider_id = str(rec.get("provider", provider_id))
        samples.append(gate_mod.GateSample(
            pair_id=str(rec["pair_id"]),
            descriptor=np.asarray(rec["descriptor"], dtype=np.float64),
            label=BranchId(int(rec["label"])),
            inlier_counts=tuple(int(c) for c in rec["counts"]),
        ))
    return samples, provider_id


def cmd_gate_train(samples_path: str, out_path: str, hyper: gate_mod.GateTrainConfig) -> int:
    try:
        samples, provider_id = _load_gate_samples(samples_path)
    except (CmBenchError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if not samples:
        print("error: no usable samples", file=sys.stderr)
        return EXIT_EMPTY
    model, final_loss = gate_mod.train_gate(samples, hyper, provider_id=provider_id)
    gate_mod.save_model(model, out_path)
    print(canonical_json({"model": out_path, "samples": len(samples),
                          "final_loss": final_loss}))
    return EXIT_OK


def _gain_pct(baseline: float, adaptive: float) -> float | None:
    if adaptive == baseline:
        return 0.0
    if baseline == 0.0:
        return None
    return (adaptive - baseline) / baseline * 100.0


def cmd_gate_eval(cfg: RunConfig, matcher_id: str, model_path: str | None,
                  provider_spec: str, identity_gate: bool) -> int:
    pairs = _load_task_manifest(cfg, (cfg.task,))
    if isinstance(pairs, int):
        return pairs
    index = _index_matches(cfg.matches_dir, cfg.max_matches)
    cache_dir = os.environ.get("CMBENCH_CACHE_DIR") or None

    model = None
    provider = None
    if not identity_gate:
        if model_path is None:
            print("error: provide --model or --identity-gate", file=sys.stderr)
            return EXIT_CONFIG
        try:
            model = gate_mod.load_model(model_path)
            provider = gate_mod.get_provider(provider_spec)
        except CmBenchError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG

    annotations: dict = {}
    if cfg.task in ("geo", "geo_hard"):
        ann_cache: dict = {}
        try:
            annotations = {p.pair_id: _annotation_for(p, ann_cache) for p in pairs}
        except CmBenchError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG

    def eval_with_branch(pair: PairManifest, branch: BranchId) -> PairError:
        rec = index.get(matcher_id, pair.pair_id, branch)
        if cfg.task == "pose":
            bcfg = dataclasses.replace(cfg, branch=branch)
            return _evaluate_pose_pair(bcfg, matcher_id, pair, rec)
        if cfg.task in ("geo", "geo_hard"):
            return _evaluate_geo_pair(cfg, matcher_id, pair, rec,
                                      annotations[pair.pair_id], branch=branch)
        return _evaluate_homography_pair(cfg, matcher_id, pair, rec, branch=branch)

    baseline_errors = []
    adaptive_errors = []
    chosen: dict[str, int] = {}
    for pair in sorted(pairs, key=lambda p: p.pair_id):
        baseline_errors.append(eval_with_branch(pair, BranchId.NONE))
        if identity_gate:
            branch = BranchId.NONE
        else:
            try:
                desc = _descriptor_for_pair(cfg, pair, provider, cache_dir)
                branch, _probs = gate_mod.predict_branch(model, desc)
            except (OSError, KeyError, CmBenchError):
                branch = BranchId.NONE
        chosen[pair.pair_id] = int(branch)
        if branch is BranchId.NONE:
            adaptive_errors.append(baseline_errors[-1])
        else:
            adaptive_errors.append(eval_with_branch(pair, branch))

    if cfg.task == "pose":
        tags = {p.pair_id: SceneSplit(p.scene_id, p.split_id) for p in pairs}
        metric_name = "auc@10deg"
        baseline_v = metrics.scene_balanced_auc(baseline_errors, tags, (10.0,))[10.0]
        adaptive_v = metrics.scene_balanced_auc(adaptive_errors, tags, (10.0,))[10.0]
    elif cfg.task in ("geo", "geo_hard"):
        metric_name = "sr@10m"
        baseline_v = metrics.success_rate(baseline_errors, 10.0)
        adaptive_v = metrics.success_rate(adaptive_errors, 10.0)
    else:
        metric_name = "auc@10px"
        baseline_v = metrics.auc(baseline_errors, 10.0)
        adaptive_v = metrics.auc(adaptive_errors, 10.0)

    gain = _gain_pct(baseline_v, adaptive_v)
    doc = {
        "schema": "gate-report@1",
        "task": cfg.task,
        "matcher_id": matcher_id,
        "metric": metric_name,
        "baseline": baseline_v,
        "adaptive": adaptive_v,
        "gain_pct": gain,
        "branches": chosen,
        "config": cfg.fingerprint_config(),
        "fingerprint": fingerprint(cfg.fingerprint_config()),
    }
    if cfg.fmt == "csv":
        text = ("matcher_id,task,metric,baseline,adaptive,gain_pct\n"
                f"{matcher_id},{cfg.task},{metric_name},{baseline_v:.6f},{adaptive_v:.6f},"
                f"{_fmt_value(gain)}\n")
    else:
        text = canonical_json(doc) + "\n"
    if cfg.out:
        atomic_write_text(cfg.out, text)
        print(f"wrote {cfg.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# ---- report merge and synthesis ---------------------------------------------

def cmd_report(paths: list[str], fmt: str, out: str | None, force: bool) -> int:
    docs = []
    for p in paths:
        try:
            with open(p, encoding="utf-8") as f:
                doc = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            print(f"error: {p}: {exc}", file=sys.stderr)
            return EXIT_CONFIG
        if not isinstance(doc, dict) or doc.get("schema") != "report@1":
            print(f"error: {p} is not a JSON report", file=sys.stderr)
            return EXIT_CONFIG
        docs.append(doc)
    if not docs:
        print("error: no reports to merge", file=sys.stderr)
        return EXIT_EMPTY
    fps = {d["fingerprint"] for d in docs}
    tasks = {d["task"] for d in docs}
    if (len(fps) > 1 or len(tasks) > 1) and not force:
        err = FingerprintMismatch(
            f"mixing reports with fingerprints {sorted(fps)} and tasks {sorted(tasks)}; "
            "pass --force to merge anyway")
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    task = sorted(tasks)[0]
    rows = []
    for d in docs:
        for r in d["rows"]:
            rows.append(ReportRow(
                matcher_id=str(r["matcher_id"]),
                category=str(r["category"]),
                task=str(r["task"]),
                success_rate=float(r["success_rate"]),
                metric_values={k: (None if v is None else float(v)) for k, v in r["metrics"].items()},
                fingerprint=str(r["fingerprint"]),
            ))
    primary = _metric_columns(task)[0] if task in ("homography", "pose") else "sr@3m"
    if task in ("geo", "geo_hard"):
        primary = "sr@3m"
    rows = _sorted_rows(rows, primary)
    text = (_render_csv(rows, task) if fmt == "csv"
            else _render_json(rows, task, docs[0].get("config", {}), sorted(fps)[0]))
    if out:
        atomic_write_text(out, text)
        print(f"wrote {out} ({len(rows)} rows)")
    else:
        sys.stdout.write(text)
    sys.stdout.write(_render_table(rows, task))
    return EXIT_OK


def cmd_synth_pairs(count: int, width: int, height: int, seed: int, out: str,
                    params: synth.HomographySamplerParams) -> int:
    records = []
    for i in range(count):
        pair_seed = derive_seed(seed, "synth-pairs", i)
        sp = synth.sample_homography(pair_seed, width, height, params)
        records.append(PairManifest(
            pair_id=f"synth-{i:05d}",
            dataset_id="synthetic",
            task="homography",
            ir_size=(width, height),
            vis_size=(width, height),
            gt_homography=sp.ground_truth,
            warped_side="vis",
            homography_seed=pair_seed,
        ))
    ingest.write_manifest(records, out)
    print(f"wrote {count} synthetic pairs to {out}")
    return EXIT_OK


def cmd_preprocess(input_path: str, branch: BranchId, out_path: str,
                   params: PreprocessParams) -> int:
    try:
        img = preprocess.load_image(input_path)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    result, _ = preprocess.apply_branch(branch, img, img, params)
    preprocess.save_png(result, out_path)
    print(f"wrote {out_path}")
    return EXIT_OK


# ---- argument parsing -------------------------------------------------------

def _add_common(p: argparse.ArgumentParser, needs_matches: bool = True) -> None:
    p.add_argument("--manifest", required=True, help="pair manifest (JSON lines)")
    if needs_matches:
        p.add_argument("--matches-dir", required=True,
                       help="directory scanned recursively for *.jsonl match files")
    p.add_argument("--out", default=None, help="output path (default: stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv", dest="fmt")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ransac-threshold", type=float, default=3.0)
    p.add_argument("--ransac-iterations", type=int, default=2000)
    p.add_argument("--ransac-confidence", type=float, default=0.9999)
    p.add_argument("--max-matches", type=int, default=ingest.MATCH_CAP)
    p.add_argument("--resize-max", type=int, default=640)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--branch", type=int, choices=(0, 1, 2, 3), default=0,
                   help="which preprocessing branch's match files to evaluate")
    p.add_argument("--matchers", default=None,
                   help="comma-separated matcher ids to report (default: all found)")
    p.add_argument("--categories", default=None,
                   help="JSON file mapping matcher_id to sparse|semi-dense|dense")


def _build_run_config(args, task: str) -> RunConfig | int:
    categories: dict[str, str] = {}
    if getattr(args, "categories", None):
        try:
            with open(args.categories, encoding="utf-8") as f:
                raw = json.load(f)
            if not isinstance(raw, dict):
                raise ValueError("categories file must map matcher ids to categories")
            for k, v in raw.items():
                if v not in _CATEGORIES:
                    raise ValueError(f"unknown category {v!r} for {k!r}")
                categories[str(k)] = str(v)
        except (OSError, ValueError, json.JSONDecodeError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_CONFIG
    try:
        ransac = RansacConfig(
            threshold=args.ransac_threshold,
            max_iterations=args.ransac_iterations,
            confidence=args.ransac_confidence,
            seed=args.seed,
        )
        if args.max_matches < 1 or args.resize_max < 1 or args.workers < 1:
            raise ValueError("--max-matches, --resize-max and --workers must be positive")
        return RunConfig(
            manifest=args.manifest,
            matches_dir=getattr(args, "matches_dir", ""),
            task=task,
            ransac=ransac,
            out=args.out,
            fmt=args.fmt,
            seed=args.seed,
            max_matches=args.max_matches,
            resize_max=args.resize_max,
            workers=args.workers,
            branch=BranchId(args.branch),
            matchers=tuple(s for s in (args.matchers or "").split(",") if s),
            categories=categories,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cmbench",
        description="Evaluation toolkit for infrared-visible feature matching",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name in ("eval-homography", "eval-pose", "eval-geo"):
        p = sub.add_parser(name, help=f"run the {name.split('-')[1]} benchmark task")
        _add_common(p)
        if name == "eval-geo":
            p.add_argument("--task", choices=("geo", "geo_hard", "both"), default="both")

    p = sub.add_parser("gate-label", help="generate branch labels from per-branch matches")
    _add_common(p)
    p.add_argument("--matcher", required=True)
    p.add_argument("--provider", default="builtin",
                   help='"builtin" or a path to an embedding file')
    p.add_argument("--skip-out", default=None)

    p = sub.add_parser("gate-train", help="train the branch classifier")
    p.add_argument("--samples", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--hidden", type=int, default=0)
    p.add_argument("--weight-decay", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("gate-eval", help="baseline vs adaptive downstream metric")
    _add_common(p)
    p.add_argument("--task", choices=("homography", "pose", "geo", "geo_hard"),
                   default="homography")
    p.add_argument("--matcher", required=True)
    p.add_argument("--model", default=None)
    p.add_argument("--provider", default="builtin")
    p.add_argument("--identity-gate", action="store_true",
                   help="always select the no-op branch (baseline sanity mode)")

    p = sub.add_parser("report", help="merge row files into one table")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--format", choices=("csv", "json"), default="csv", dest="fmt")
    p.add_argument("--out", default=None)
    p.add_argument("--force", action="store_true")

    p = sub.add_parser("synth-pairs", help="emit a synthetic homography manifest")
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--width", type=int, default=640)
    p.add_argument("--height", type=int, default=480)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--min-overlap", type=float, default=0.60)

    p = sub.add_parser("preprocess", help="apply one branch to an image, write PNG")
    p.add_argument("--input", required=True)
    p.add_argument("--branch", type=int, choices=(0, 1, 2, 3), required=True)
    p.add_argument("--out", required=True)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "eval-homography":
            cfg = _build_run_config(args, "homography")
            return cfg if isinstance(cfg, int) else cmd_eval_homography(cfg)
        if args.command == "eval-pose":
            cfg = _build_run_config(args, "pose")
            return cfg if isinstance(cfg, int) else cmd_eval_pose(cfg)
        if args.command == "eval-geo":
            tasks = ("geo", "geo_hard") if args.task == "both" else (args.task,)
            cfg = _build_run_config(args, tasks[0])
            return cfg if isinstance(cfg, int) else cmd_eval_geo(cfg, tasks)
        if args.command == "gate-label":
            cfg = _build_run_config(args, "homography")
            if isinstance(cfg, int):
                return cfg
            out = args.out or "gate-samples.jsonl"
            return cmd_gate_label(cfg, args.matcher, args.provider, out, args.skip_out)
        if args.command == "gate-train":
            hyper = gate_mod.GateTrainConfig(
                learning_rate=args.lr, epochs=args.epochs, batch_size=args.batch_size,
                hidden_width=args.hidden, weight_decay=args.weight_decay, seed=args.seed)
            return cmd_gate_train(args.samples, args.out, hyper)
        if args.command == "gate-eval":
            cfg = _build_run_config(args, args.task)
            if isinstance(cfg, int):
                return cfg
            return cmd_gate_eval(cfg, args.matcher, args.model, args.provider,
                                 args.identity_gate)
        if args.command == "report":
            return cmd_report(args.inputs, args.fmt, args.out, args.force)
        if args.command == "synth-pairs":
            params = synth.HomographySamplerParams(min_overlap=args.min_overlap)
            return cmd_synth_pairs(args.count, args.width, args.height, args.seed,
                                   args.out, params)
        if args.command == "preprocess":
            return cmd_preprocess(args.input, BranchId(args.branch), args.out,
                                  PreprocessParams())
        raise AssertionError(f"unhandled command {args.command!r}")
    except CmBenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    raise SystemExit(main())
