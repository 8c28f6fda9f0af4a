"""Numeric hot loops with a compiled core and a pure NumPy fallback.

The compiled extension is preferred when importable; setting the environment
variable ``CMBENCH_PURE_PYTHON`` to a non-empty value other than ``"0"``
forces the NumPy backend. Both produce bit-identical float64 output.
"""

from __future__ import annotations

import os

from . import _reference

BACKEND = "reference"
_impl = _reference

if os.environ.get("CMBENCH_PURE_PYTHON", "0") in ("", "0"):
    try:
        from . import _core as _native  # type: ignore[attr-defined]

        _impl = _native
        BACKEND = "native"
    except ImportError:  # extension not built; fall back silently
        pass


def _as_c64(a):
    import numpy as np

    return np.ascontiguousarray(a, dtype=np.float64)


def transfer_sq(h, h_inv, pts_a, pts_b):
    return _impl.transfer_sq(_as_c64(h), _as_c64(h_inv), _as_c64(pts_a), _as_c64(pts_b))


def sampson_sq(e, pts_a, pts_b):
    return _impl.sampson_sq(_as_c64(e), _as_c64(pts_a), _as_c64(pts_b))


def conv2d(padded, kernel, out_h, out_w):
    return _impl.conv2d(_as_c64(padded), _as_c64(kernel), out_h, out_w)


def window_mean_var(padded, radius, out_h, out_w):
    return _impl.window_mean_var(_as_c64(padded), radius, out_h, out_w)


def window_min_max(padded, radius, out_h, out_w):
    return _impl.window_min_max(_as_c64(padded), radius, out_h, out_w)


reference = _reference

__all__ = [
    "BACKEND",
    "conv2d",
    "reference",
    "sampson_sq",
    "transfer_sq",
    "window_mean_var",
    "window_min_max",
]
