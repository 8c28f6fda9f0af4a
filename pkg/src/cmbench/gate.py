"""Branch selection front-end: pair embeddings, descriptor fusion, oracle
labels, four-class training, and inference.

The embedding is a pluggable provider. The built-in provider is a handcrafted
640-d descriptor (8x8 grid of gradient-orientation histograms plus per-cell
luminance moments on a 224x224 resample); the external provider reads
precomputed vectors, so embeddings from any backbone can be dropped in.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from ._util import bilinear_resize, canonical_json
from .errors import (
    AllBranchesFailed,
    DimensionMismatch,
    DuplicateId,
    NonFiniteLoss,
    ParseError,
    SchemaViolation,
    UnknownProvider,
)
from .estimate import RansacConfig, Status, ransac_homography
from .geometry import MatchSet
from .preprocess import BranchId, GrayImage

_GRID = 8
_BINS = 8
_SIDE = 224
BUILTIN_DIM = _GRID * _GRID * (_BINS + 2)


# ---- embedding providers ----------------------------------------------------

def builtin_embedding(img: GrayImage) -> np.ndarray:
    """640-d handcrafted descriptor of a bilinear 224x224 resample: per grid
    cell an 8-bin magnitude-weighted gradient-orientation histogram plus the
    cell's luminance mean and standard deviation."""
    r = bilinear_resize(img.as_float(), _SIDE, _SIDE)
    gy, gx = np.gradient(r)
    mag = np.sqrt(gx * gx + gy * gy)
    theta = np.arctan2(gy, gx)
    bins = np.minimum((theta + np.pi) / (2.0 * np.pi) * _BINS, _BINS - 1).astype(np.int64)

    cell = _SIDE // _GRID
    out = np.zeros(BUILTIN_DIM)
    k = 0
    for cy in range(_GRID):
        for cx in range(_GRID):
            ys, xs = cy * cell, cx * cell
            cm = mag[ys:ys + cell, xs:xs + cell]
            cb = bins[ys:ys + cell, xs:xs + cell]
            cr = r[ys:ys + cell, xs:xs + cell]
            out[k:k + _BINS] = np.bincount(cb.ravel(), weights=cm.ravel(), minlength=_BINS)
            mean = cr.mean()
            var = (cr * cr).mean() - mean * mean
            out[k + _BINS] = mean
            out[k + _BINS + 1] = np.sqrt(max(var, 0.0))
            k += _BINS + 2
    return out


class BuiltinProvider:
    provider_id = "builtin"
    dim = BUILTIN_DIM

    def embed(self, img: GrayImage, image_id: str | None = None) -> np.ndarray:
        return builtin_embedding(img)


class ExternalProvider:
    """Serves vectors from an embedding file keyed by image id."""

    def __init__(self, provider_id: str, dim: int, vectors: dict[str, np.ndarray]):
        self.provider_id = provider_id
        self.dim = dim
        self._vectors = vectors

    def embed(self, img: GrayImage | None, image_id: str | None = None) -> np.ndarray:
        if image_id is None or image_id not in self._vectors:
            raise KeyError(f"no precomputed embedding for image id {image_id!r}")
        return self._vectors[image_id]


def load_embeddings(path) -> ExternalProvider:
    """Read an embedding file: JSON-lines records
    {schema, image_id, provider, dim, values}."""
    path = os.fspath(path)
    vectors: dict[str, np.ndarray] = {}
    provider_id: str | None = None
    dim: int | None = None
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(str(exc), path=path, line=lineno) from exc
            if not isinstance(rec, dict):
                raise SchemaViolation("record is not an object", path=path, line=lineno)
            if rec.get("schema") != "embedding@1":
                raise SchemaViolation("unknown schema", path=path, line=lineno, field="schema")
            for field in ("image_id", "provider", "dim", "values"):
                if field not in rec:
                    raise SchemaViolation("missing field", path=path, line=lineno, field=field)
            values = rec["values"]
            if not isinstance(values, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in values
            ):
                raise SchemaViolation("values must be numbers", path=path, line=lineno, field="values")
            if int(rec["dim"]) != len(values):
                raise DimensionMismatch(
                    f"{path}:{lineno}: declared dim {rec['dim']} != {len(values)} values"
                )
            if dim is None:
                dim = len(values)
                provider_id = str(rec["provider"])
            elif len(values) != dim:
                raise DimensionMismatch(f"{path}:{lineno}: dim {len(values)} != file dim {dim}")
            image_id = str(rec["image_id"])
            if image_id in vectors:
                raise DuplicateId(f"{path}:{lineno}: duplicate image id {image_id!r}")
            vec = np.asarray(values, dtype=np.float64)
            if not np.all(np.isfinite(vec)):
                raise SchemaViolation("non-finite values", path=path, line=lineno, field="values")
            vectors[image_id] = vec
    if dim is None:
        raise SchemaViolation("embedding file holds no records", path=path)
    return ExternalProvider(provider_id or "external", dim, vectors)


def get_provider(spec: str):
    """Resolve "builtin" or a path to an embedding file."""
    if spec == "builtin":
        return BuiltinProvider()
    if os.path.exists(spec):
        return load_embeddings(spec)
    raise UnknownProvider(f"no such provider or embedding file: {spec!r}")


def embed(img: GrayImage, provider, image_id: str | None = None) -> np.ndarray:
    return provider.embed(img, image_id=image_id)


def embed_image_file(path, provider, cache_dir: str | None = None) -> np.ndarray:
    """Embed an image file with optional on-disk caching keyed by content."""
    from .preprocess import load_image

    if cache_dir:
        with open(path, "rb") as f:
            digest = hashlib.sha256(f.read()).hexdigest()
        key = f"{provider.provider_id}-{digest}.json"
        cached = os.path.join(cache_dir, key)
        if os.path.exists(cached):
            with open(cached, encoding="utf-8") as f:
                return np.asarray(json.load(f), dtype=np.float64)
        vec = provider.embed(load_image(path), image_id=os.fspath(path))
        os.makedirs(cache_dir, exist_ok=True)
        with open(cached, "w", encoding="utf-8") as f:
            json.dump([float(v) for v in vec], f)
        return vec
    return provider.embed(load_image(path), image_id=os.fspath(path))


# ---- fusion and labels -------------------------------------------------------

def fuse(f_ir: np.ndarray, f_vis: np.ndarray) -> np.ndarray:
    """[f_ir, f_vis, |f_ir - f_vis|, f_ir * f_vis] concatenated in that order."""
    f_ir = np.asarray(f_ir, dtype=np.float64).reshape(-1)
    f_vis = np.asarray(f_vis, dtype=np.float64).reshape(-1)
    if f_ir.shape != f_vis.shape:
        raise DimensionMismatch(f"embedding dims differ: {f_ir.shape[0]} vs {f_vis.shape[0]}")
    return np.concatenate([f_ir, f_vis, np.abs(f_ir - f_vis), f_ir * f_vis])


@dataclass(frozen=True)
class GateSample:
    pair_id: str
    descriptor: np.ndarray
    label: BranchId
    inlier_counts: tuple[int, int, int, int]


def argmax_branch(counts: Sequence[int]) -> BranchId:
    """Largest count wins; ties go to the lowest branch code."""
    best = max(counts)
    for code, c in enumerate(counts):
        if c == best:
            return BranchId(code)
    raise AssertionError("unreachable")


def oracle_label(
    ir: GrayImage,
    vis: GrayImage,
    branch_matches: Mapping[BranchId, MatchSet],
    cfg: RansacConfig,
    provider=None,
    pair_id: str = "",
) -> GateSample:
    """Label a pair by the branch whose matches survive RANSAC with the most
    inliers. The label depends only on the per-branch inlier counts; the
    images feed the descriptor alone."""
    missing = [b for b in BranchId if b not in branch_matches]
    if missing:
        raise ValueError(f"matches missing for branches {missing}")
    counts = []
    failures = 0
    for b in sorted(BranchId):
        branch_cfg = dataclasses.replace(cfg, seed=_branch_seed(cfg.seed, b))
        res = ransac_homography(branch_matches[b], branch_cfg)
        if res.status is Status.FAILED:
            failures += 1
            counts.append(0)
        else:
            counts.append(res.inlier_count)
    if failures == len(BranchId):
        raise AllBranchesFailed(f"pair {pair_id!r}: every branch failed estimation")
    provider = provider or BuiltinProvider()
    desc = fuse(provider.embed(ir, image_id=f"{pair_id}/ir"), provider.embed(vis, image_id=f"{pair_id}/vis"))
    return GateSample(pair_id, desc, argmax_branch(counts), tuple(counts))


def _branch_seed(seed: int, branch: BranchId) -> int:
    h = hashlib.sha256(f"{seed}/{int(branch)}".encode()).digest()
    return int.from_bytes(h[:8], "big")


# ---- classifier -------------------------------------------------------------

@dataclass(frozen=True)
class GateTrainConfig:
    learning_rate: float = 0.1
    epochs: int = 100
    batch_size: int = 32
    hidden_width: int = 0  # 0 = linear classifier
    weight_decay: float = 0.0
    seed: int = 0


@dataclass(frozen=True)
class GateModel:
    provider_id: str
    dim: int
    norm_mean: np.ndarray
    norm_std: np.ndarray
    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    seed: int
    class_order: tuple[int, ...] = (0, 1, 2, 3)

    def __post_init__(self):
        if self.weights[-1].shape[0] != 4 or self.biases[-1].shape[0] != 4:
            raise ValueError("classifier must emit exactly 4 logits")
        if tuple(self.class_order) != (0, 1, 2, 3):
            raise ValueError("class order must follow the branch codes")

    def logits(self, descriptor: np.ndarray) -> np.ndarray:
        x = (np.asarray(descriptor, dtype=np.float64) - self.norm_mean) / self.norm_std
        return _forward(self.weights, self.biases, x[None, :])[0]


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - np.max(z, axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward(ws, bs, x: np.ndarray) -> np.ndarray:
    h = x
    for w, b in zip(ws[:-1], bs[:-1]):
        h = np.maximum(h @ w.T + b, 0.0)
    return h @ ws[-1].T + bs[-1]


def loss_and_gradients(ws, bs, x: np.ndarray, y: np.ndarray, weight_decay: float = 0.0):
    """Mean softmax cross-entropy (plus L2 on weights) and its analytic
    gradients; the finite-difference check in the test suite targets this."""
    n = x.shape[0]
    acts = [x]
    pre = []
    h = x
    for w, b in zip(ws[:-1], bs[:-1]):
        z = h @ w.T + b
        pre.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    logits = h @ ws[-1].T + bs[-1]

    shifted = logits - logits.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1)) + logits.max(axis=1)
    loss = float((logsumexp - logits[np.arange(n), y]).mean())
    loss += 0.5 * weight_decay * sum(float((w * w).sum()) for w in ws)

    probs = softmax(logits)
    probs[np.arange(n), y] -= 1.0
    dz = probs / n
    gws: list[np.ndarray] = []
    gbs: list[np.ndarray] = []
    for layer in range(len(ws) - 1, -1, -1):
        gws.append(dz.T @ acts[layer] + weight_decay * ws[layer])
        gbs.append(dz.sum(axis=0))
        if layer > 0:
            dz = (dz @ ws[layer]) * (pre[layer - 1] > 0.0)
    return loss, gws[::-1], gbs[::-1]


def train_gate(
    samples: Sequence[GateSample],
    hyper: GateTrainConfig | None = None,
    provider_id: str = "builtin",
) -> tuple[GateModel, float]:
    """Mini-batch gradient descent on the four-class objective. Features are
    standardized on the training set and the affine normalization is stored
    inside the model. Returns the model and the final full-set loss."""
    if not samples:
        raise ValueError("no training samples")
    hyper = hyper or GateTrainConfig()
    x = np.stack([np.asarray(s.descriptor, dtype=np.float64) for s in samples])
    y = np.array([int(s.label) for s in samples])

    present = set(int(v) for v in np.unique(y))
    absent = [b.name for b in BranchId if int(b) not in present]
    if absent:
        warnings.warn(f"no training samples for branches: {', '.join(absent)}", stacklevel=2)

    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std < 1e-12, 1.0, std)
    xn = (x - mean) / std

    dim = x.shape[1]
    rng = np.random.default_rng(hyper.seed)
    shapes = [(4, dim)] if hyper.hidden_width <= 0 else [(hyper.hidden_width, dim), (4, hyper.hidden_width)]
    ws = [rng.normal(0.0, 1.0 / np.sqrt(cols), size=(rows, cols)) for rows, cols in shapes]
    bs = [np.zeros(rows) for rows, _ in shapes]

    n = len(samples)
    batch = max(1, min(hyper.batch_size, n))
    for _ in range(hyper.epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch):
            idx = order[start:start + batch]
            loss, gws, gbs = loss_and_gradients(ws, bs, xn[idx], y[idx], hyper.weight_decay)
            if not np.isfinite(loss):
                raise NonFiniteLoss(
                    f"loss became non-finite (lr={hyper.learning_rate}, batch={batch})"
                )
            ws = [w - hyper.learning_rate * g for w, g in zip(ws, gws)]
            bs = [b - hyper.learning_rate * g for b, g in zip(bs, gbs)]

    final_loss, _, _ = loss_and_gradients(ws, bs, xn, y, hyper.weight_decay)
    model = GateModel(
        provider_id=provider_id,
        dim=dim,
        norm_mean=mean,
        norm_std=std,
        weights=tuple(ws),
        biases=tuple(bs),
        seed=hyper.seed,
    )
    return model, float(final_loss)


def predict_branch(model: GateModel, descriptor: np.ndarray) -> tuple[BranchId, np.ndarray]:
    """Standardize, forward, softmax; ties resolved exactly like the oracle
    labels (lowest branch code)."""
    descriptor = np.asarray(descriptor, dtype=np.float64).reshape(-1)
    if descriptor.shape[0] != model.dim:
        raise DimensionMismatch(f"descriptor dim {descriptor.shape[0]} != model dim {model.dim}")
    probs = softmax(model.logits(descriptor))
    best = float(np.max(probs))
    for code in range(4):
        if probs[code] == best:
            return BranchId(code), probs
    raise AssertionError("unreachable")


# ---- model serialization ----------------------------------------------------

def save_model(model: GateModel, path) -> None:
    doc = {
        "schema": "gate-model@1",
        "provider": model.provider_id,
        "dim": model.dim,
        "normalization": {
            "mean": [float(v) for v in model.norm_mean],
            "std": [float(v) for v in model.norm_std],
        },
        "layers": [
            {
                "rows": int(w.shape[0]),
                "cols": int(w.shape[1]),
                "weights": [float(v) for v in w.ravel()],
                "bias": [float(v) for v in b],
            }
            for w, b in zip(model.weights, model.biases)
        ],
        "class_order": list(model.class_order),
        "seed": model.seed,
    }
    from ._util import atomic_write_text

    atomic_write_text(path, canonical_json(doc) + "\n")


def load_model(path) -> GateModel:
    path = os.fspath(path)
    try:
        with open(path, encoding="utf-8") as f:
            doc = json.load(f)
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc), path=path) from exc
    if not isinstance(doc, dict) or doc.get("schema") != "gate-model@1":
        raise SchemaViolation("not a gate model file", path=path, field="schema")
    try:
        norm = doc["normalization"]
        ws = []
        bs = []
        for layer in doc["layers"]:
            rows, cols = int(layer["rows"]), int(layer["cols"])
            w = np.asarray(layer["weights"], dtype=np.float64)
            if w.size != rows * cols:
                raise SchemaViolation(
                    f"layer weights hold {w.size} values, expected {rows * cols}",
                    path=path,
                    field="layers",
                )
            ws.append(w.reshape(rows, cols))
            bs.append(np.asarray(layer["bias"], dtype=np.float64))
        return GateModel(
            provider_id=str(doc["provider"]),
            dim=int(doc["dim"]),
            norm_mean=np.asarray(norm["mean"], dtype=np.float64),
            norm_std=np.asarray(norm["std"], dtype=np.float64),
            weights=tuple(ws),
            biases=tuple(bs),
            seed=int(doc["seed"]),
            class_order=tuple(int(c) for c in doc["class_order"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(f"malformed gate model: {exc}", path=path) from exc
