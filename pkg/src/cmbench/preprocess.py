"""The four candidate enhancement branches applied before matching.

All branches consume and produce 8-bit luminance images, handle borders by
reflection, and round half away from zero, so outputs are byte-reproducible
across runs, platforms, and kernel backends.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import kernels
from ._util import clamp_u8, pad_reflect

_SCHARR_X = np.array([[-3.0, 0.0, 3.0], [-10.0, 0.0, 10.0], [-3.0, 0.0, 3.0]])
_SCHARR_Y = _SCHARR_X.T.copy()


class BranchId(enum.IntEnum):
    """Enhancement branches; the integer codes double as training labels."""

    NONE = 0
    UNSHARP = 1
    SCHARR_LCN = 2
    MORPH_GRADIENT = 3


@dataclass(frozen=True)
class GrayImage:
    """Row-major 8-bit luminance raster."""

    data: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.data)
        if a.ndim != 2 or a.dtype != np.uint8 or a.size == 0:
            raise ValueError("expected a non-empty 2-D uint8 array")
        a = np.ascontiguousarray(a)
        a.flags.writeable = False
        object.__setattr__(self, "data", a)

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    def as_float(self) -> np.ndarray:
        return self.data.astype(np.float64)


@dataclass(frozen=True)
class PreprocessParams:
    unsharp_sigma: float = 1.5
    unsharp_amount: float = 1.0
    lcn_window: int = 15
    lcn_epsilon: float = 1.0
    morph_radius: int = 1

    def __post_init__(self):
        if not self.unsharp_sigma > 0:
            raise ValueError("unsharp_sigma must be positive")
        if self.lcn_window < 3 or self.lcn_window % 2 == 0:
            raise ValueError("lcn_window must be odd and at least 3")
        if self.morph_radius < 1:
            raise ValueError("morph_radius must be at least 1")

    def to_record(self) -> dict:
        return {
            "unsharp_sigma": self.unsharp_sigma,
            "unsharp_amount": self.unsharp_amount,
            "lcn_window": self.lcn_window,
            "lcn_epsilon": self.lcn_epsilon,
            "morph_radius": self.morph_radius,
        }


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Dense 2-D Gaussian with radius ceil(3*sigma), normalized to sum 1."""
    r = math.ceil(3.0 * sigma)
    ax = np.arange(-r, r + 1, dtype=np.float64)
    d2 = ax[:, None] ** 2 + ax[None, :] ** 2
    k = np.exp(-d2 / (2.0 * sigma * sigma))
    return k / k.sum()


def branch_none(img: GrayImage) -> GrayImage:
    return img


def branch_unsharp(img: GrayImage, sigma: float = 1.5, amount: float = 1.0) -> GrayImage:
    """Sharpen by adding the scaled difference between the image and its
    Gaussian blur: out = img + amount * (img - blur)."""
    k = gaussian_kernel(sigma)
    r = k.shape[0] // 2
    f = img.as_float()
    blur = kernels.conv2d(pad_reflect(f, r, r), k, img.height, img.width)
    return GrayImage(clamp_u8(f + amount * (f - blur)))


def branch_scharr_lcn(img: GrayImage, lcn_window: int = 15, epsilon: float = 1.0) -> GrayImage:
    """Gradient magnitude (3/10/3 derivative kernels) followed by local
    contrast normalization and an affine rescale to the full 8-bit range."""
    f = img.as_float()
    padded = pad_reflect(f, 1, 1)
    gx = kernels.conv2d(padded, _SCHARR_X, img.height, img.width)
    gy = kernels.conv2d(padded, _SCHARR_Y, img.height, img.width)
    mag = np.sqrt(gx * gx + gy * gy)

    r = lcn_window // 2
    mean, var = kernels.window_mean_var(pad_reflect(mag, r, r), r, img.height, img.width)
    lcn = (mag - mean) / (np.sqrt(var) + epsilon)

    lo = float(lcn.min())
    hi = float(lcn.max())
    if hi - lo <= 1e-12:
        return GrayImage(np.full_like(img.data, 128))
    return GrayImage(clamp_u8((lcn - lo) / (hi - lo) * 255.0))


def branch_morph_gradient(img: GrayImage, radius: int = 1) -> GrayImage:
    """Dilation minus erosion over a square structuring element."""
    f = img.as_float()
    mn, mx = kernels.window_min_max(pad_reflect(f, radius, radius), radius, img.height, img.width)
    return GrayImage(clamp_u8(mx - mn))


def apply_branch(
    branch: BranchId,
    ir: GrayImage,
    vis: GrayImage,
    params: PreprocessParams | None = None,
) -> tuple[GrayImage, GrayImage]:
    """Apply one branch with identical parameters to both modalities."""
    p = params or PreprocessParams()

    def one(img: GrayImage) -> GrayImage:
        if branch is BranchId.NONE:
            return branch_none(img)
        if branch is BranchId.UNSHARP:
            return branch_unsharp(img, p.unsharp_sigma, p.unsharp_amount)
        if branch is BranchId.SCHARR_LCN:
            return branch_scharr_lcn(img, p.lcn_window, p.lcn_epsilon)
        if branch is BranchId.MORPH_GRADIENT:
            return branch_morph_gradient(img, p.morph_radius)
        raise ValueError(f"unknown branch {branch!r}")

    return one(ir), one(vis)


def load_image(path) -> GrayImage:
    """Read PNG or 8-bit grayscale TIFF; color inputs are reduced to
    luminance with BT.601 weights."""
    with Image.open(path) as im:
        gray = im.convert("L")
        return GrayImage(np.asarray(gray, dtype=np.uint8))


def save_png(img: GrayImage, path) -> None:
    Image.fromarray(img.data, mode="L").save(path, format="PNG")
