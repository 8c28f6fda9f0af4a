"""Pure NumPy implementations of the numeric hot loops.

The compiled backend (`_core`) mirrors these functions operation-for-operation:
identical expression trees and identical accumulation order over window
offsets (row-major), so both backends produce bit-identical float64 results.
Keep the two files in sync when touching either.
"""

from __future__ import annotations

import numpy as np

_W_EPS = 1e-12


def transfer_sq(h: np.ndarray, h_inv: np.ndarray, pts_a: np.ndarray, pts_b: np.ndarray) -> np.ndarray:
    """Squared symmetric transfer distance per correspondence.

    forward ||h(a) - b||^2 plus backward ||h_inv(b) - a||^2; rows whose
    homogeneous depth vanishes on either side get +inf.
    """
    ax, ay = pts_a[:, 0], pts_a[:, 1]
    bx, by = pts_b[:, 0], pts_b[:, 1]

    wa = h[2, 0] * ax + h[2, 1] * ay + h[2, 2]
    wb = h_inv[2, 0] * bx + h_inv[2, 1] * by + h_inv[2, 2]
    valid = (np.abs(wa) > _W_EPS) & (np.abs(wb) > _W_EPS)
    wa = np.where(valid, wa, 1.0)
    wb = np.where(valid, wb, 1.0)

    ua = (h[0, 0] * ax + h[0, 1] * ay + h[0, 2]) / wa
    va = (h[1, 0] * ax + h[1, 1] * ay + h[1, 2]) / wa
    ub = (h_inv[0, 0] * bx + h_inv[0, 1] * by + h_inv[0, 2]) / wb
    vb = (h_inv[1, 0] * bx + h_inv[1, 1] * by + h_inv[1, 2]) / wb

    dxf = ua - bx
    dyf = va - by
    dxb = ub - ax
    dyb = vb - ay
    d = (dxf * dxf + dyf * dyf) + (dxb * dxb + dyb * dyb)
    return np.where(valid, d, np.inf)


def sampson_sq(e: np.ndarray, pts_a: np.ndarray, pts_b: np.ndarray) -> np.ndarray:
    """Squared Sampson distance to the epipolar constraint x_b^T E x_a = 0.

    Points are in normalized camera coordinates. Rows with a vanishing
    denominator get +inf.
    """
    ax, ay = pts_a[:, 0], pts_a[:, 1]
    bx, by = pts_b[:, 0], pts_b[:, 1]

    ex0 = e[0, 0] * ax + e[0, 1] * ay + e[0, 2]
    ex1 = e[1, 0] * ax + e[1, 1] * ay + e[1, 2]
    ex2 = e[2, 0] * ax + e[2, 1] * ay + e[2, 2]
    etx0 = e[0, 0] * bx + e[1, 0] * by + e[2, 0]
    etx1 = e[0, 1] * bx + e[1, 1] * by + e[2, 1]

    num = bx * ex0 + by * ex1 + ex2
    num = num * num
    den = (ex0 * ex0 + ex1 * ex1) + (etx0 * etx0 + etx1 * etx1)
    valid = den > _W_EPS
    den = np.where(valid, den, 1.0)
    return np.where(valid, num / den, np.inf)


def conv2d(padded: np.ndarray, kernel: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Dense 2-D correlation of a pre-padded float64 image with a small kernel.

    `padded` must have shape (out_h + kh - 1, out_w + kw - 1); the caller
    chooses the border policy by padding beforehand.
    """
    kh, kw = kernel.shape
    acc = np.zeros((out_h, out_w), dtype=np.float64)
    for dy in range(kh):
        for dx in range(kw):
            acc += kernel[dy, dx] * padded[dy:dy + out_h, dx:dx + out_w]
    return acc


def window_mean_var(padded: np.ndarray, radius: int, out_h: int, out_w: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel mean and variance over a (2r+1)^2 window of a padded image.

    Variance uses E[x^2] - E[x]^2 with a clamp at zero; for 8-bit-valued
    inputs the cancellation error is far below one grey level.
    """
    side = 2 * radius + 1
    count = float(side * side)
    s = np.zeros((out_h, out_w), dtype=np.float64)
    s2 = np.zeros((out_h, out_w), dtype=np.float64)
    for dy in range(side):
        for dx in range(side):
            w = padded[dy:dy + out_h, dx:dx + out_w]
            s += w
            s2 += w * w
    mean = s / count
    var = s2 / count - mean * mean
    return mean, np.maximum(var, 0.0)


def window_min_max(padded: np.ndarray, radius: int, out_h: int, out_w: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-pixel min and max over a (2r+1)^2 window of a padded image."""
    side = 2 * radius + 1
    mn = padded[0:out_h, 0:out_w].copy()
    mx = mn.copy()
    for dy in range(side):
        for dx in range(side):
            if dy == 0 and dx == 0:
                continue
            w = padded[dy:dy + out_h, dx:dx + out_w]
            np.minimum(mn, w, out=mn)
            np.maximum(mx, w, out=mx)
    return mn, mx
