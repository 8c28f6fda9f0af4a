"""Embedding export for the gate's external-provider path.

Computes the toolkit's built-in 640-d descriptor per image and writes the
embedding@1 JSON-lines file its gate loads.  All validation (unique ids,
finite values, dimension against the declared value) happens before anything
is written, and the write itself is atomic, so a failed export never leaves a
file behind.
"""

from __future__ import annotations

import os

import numpy as np

from cmbench import builtin_embedding, load_image
from cmbench.errors import DimensionMismatch, DuplicateId, EmptyInput, SchemaViolation

from ._io import atomic_write_text, canonical_json, resolve

EMBED_SCHEMA = "embedding@1"
DEFAULT_PROVIDER = "adapter-builtin"


def pair_image_entries(records, base_dir: str = ".") -> list[tuple[str, str]]:
    """(image_id, path) entries for every manifest pair with image paths,
    using the "<pair_id>/ir" and "<pair_id>/vis" ids the gate keys on."""
    entries = []
    for rec in sorted(records, key=lambda r: r.pair_id):
        for side, rel in (("ir", rec.ir_image), ("vis", rec.vis_image)):
            if rel is not None:
                entries.append((f"{rec.pair_id}/{side}", resolve(base_dir, rel)))
    return entries


def export_embeddings(entries, out_path, provider_id: str = DEFAULT_PROVIDER,
                      dim: int | None = None) -> int:
    """Embed each (image_id, image_path) entry and write the embedding file.

    `dim`, when given, is the declared dimension; a vector of any other
    length aborts the export before the file is touched.  Returns the
    written dimension.
    """
    entries = list(entries)
    if not entries:
        raise EmptyInput("no images to embed")
    records = []
    seen: set[str] = set()
    expected = dim
    for image_id, path in entries:
        if image_id in seen:
            raise DuplicateId(f"duplicate image id {image_id!r}")
        seen.add(image_id)
        vec = builtin_embedding(load_image(os.fspath(path)))
        if not np.all(np.isfinite(vec)):
            raise SchemaViolation(f"non-finite embedding for {image_id!r}", field="values")
        if expected is None:
            expected = len(vec)
        elif len(vec) != expected:
            raise DimensionMismatch(
                f"{image_id!r}: embedding has {len(vec)} values, declared dim {expected}"
            )
        records.append({
            "schema": EMBED_SCHEMA,
            "image_id": image_id,
            "provider": provider_id,
            "dim": len(vec),
            "values": [float(v) for v in vec],
        })
    atomic_write_text(out_path, "".join(canonical_json(r) + "\n" for r in records))
    return int(expected)
