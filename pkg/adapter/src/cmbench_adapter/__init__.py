"""Bridge between external feature matchers and the cmbench toolkit.

An external matcher is any executable that accepts two image paths and an
output path. The adapter feeds it preprocessed, resized image pairs from a
cmbench manifest, rescales the returned coordinates back to the original
resolution, and writes match files the toolkit loads with zero quarantined
records. It can also export image embeddings in the toolkit's external
provider format.
"""

from .config import AdapterConfig, MatcherCrashed, load_config
from .embeddings import export_embeddings
from .runner import PairOutcome, run_batch, run_matcher

__version__ = "1.0.0"

__all__ = [
    "AdapterConfig",
    "MatcherCrashed",
    "PairOutcome",
    "export_embeddings",
    "load_config",
    "run_batch",
    "run_matcher",
    "__version__",
]
