"""Small shared helpers: deterministic seeding, canonical JSON, atomic writes."""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from typing import Any

import numpy as np


def derive_seed(*parts: Any) -> int:
    """Stable 64-bit seed from heterogeneous parts.

    Uses SHA-256 rather than hash() so results are identical across processes
    and platforms (hash() is salted per interpreter run).
    """
    h = hashlib.sha256()
    for p in parts:
        h.update(repr(p).encode("utf-8"))
        h.update(b"\x1f")
    return int.from_bytes(h.digest()[:8], "big")


def canonical_json(obj: Any) -> str:
    """Deterministic JSON encoding: sorted keys, no whitespace."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def fingerprint(config: dict[str, Any]) -> str:
    """Short hex digest identifying a run configuration."""
    return hashlib.sha256(canonical_json(config).encode("utf-8")).hexdigest()[:16]


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write via a temp file in the same directory plus rename."""
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".part")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def round_half_away(x: np.ndarray) -> np.ndarray:
    """Round to nearest integer with ties going away from zero.

    np.round rounds half to even, which would disagree with the documented
    byte-level contract of the preprocessing branches.
    """
    return np.where(x >= 0, np.floor(x + 0.5), np.ceil(x - 0.5))


def clamp_u8(x: np.ndarray) -> np.ndarray:
    """Clamp to [0, 255] and cast, after half-away-from-zero rounding."""
    return np.clip(round_half_away(x), 0.0, 255.0).astype(np.uint8)


def pad_reflect(a: np.ndarray, pad_y: int, pad_x: int) -> np.ndarray:
    """Edge-inclusive reflection padding (works down to 1x1 inputs)."""
    return np.pad(a, ((pad_y, pad_y), (pad_x, pad_x)), mode="symmetric")


def bilinear_resize(img: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resample of a 2-D float array to (out_h, out_w).

    Uses the half-pixel-center grid mapping src = (dst + 0.5) * scale - 0.5
    with edge clamping.
    """
    img = np.asarray(img, dtype=np.float64)
    in_h, in_w = img.shape
    if (in_h, in_w) == (out_h, out_w):
        return img.copy()
    ys = (np.arange(out_h) + 0.5) * (in_h / out_h) - 0.5
    xs = (np.arange(out_w) + 0.5) * (in_w / out_w) - 0.5
    ys = np.clip(ys, 0.0, in_h - 1.0)
    xs = np.clip(xs, 0.0, in_w - 1.0)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.floor(xs).astype(np.int64)
    y1 = np.minimum(y0 + 1, in_h - 1)
    x1 = np.minimum(x0 + 1, in_w - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    a = img[np.ix_(y0, x0)]
    b = img[np.ix_(y0, x1)]
    c = img[np.ix_(y1, x0)]
    d = img[np.ix_(y1, x1)]
    top = a + (b - a) * fx
    bot = c + (d - c) * fx
    return top + (bot - top) * fy
