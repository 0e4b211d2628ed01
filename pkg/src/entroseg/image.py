"""Raster image types, grayscale conversion, max dilation, and entropy scoring."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

# ITU-R BT.601 luma weights
_LUMA = np.array([0.299, 0.587, 0.114])

ENTROPY_THRESHOLD_BITS = 6.5


@dataclass
class RasterImage:
    """Pixel grid with 1 or 3 channels, intensities in [0, 1].

    ``data`` is laid out row-major as (height, width, channels) float64.
    8-bit sources are expected to be divided by 255 before construction.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, np.newaxis]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ValueError(f"expected (H, W, 1|3) data, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise ValueError("intensities must lie in [0, 1]")
        self.data = arr

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def channel(self, c: int) -> np.ndarray:
        return self.data[:, :, c]

    def crop(self, x1: int, y1: int, x2: int, y2: int) -> "RasterImage":
        """Crop to the half-open pixel box [x1, x2) x [y1, y2)."""
        if x2 <= x1 or y2 <= y1:
            raise ValueError(f"empty crop ({x1},{y1},{x2},{y2})")
        return RasterImage(self.data[y1:y2, x1:x2, :].copy())


@dataclass
class GrayImage:
    """Single-channel luminance grid, values in [0, 1]."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim != 2:
            raise ValueError(f"expected 2-D data, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        self.data = arr

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


class EntropyClass(enum.Enum):
    """Scene class derived from global histogram entropy."""

    SCENE_LIKE = "SceneLike"
    PRODUCT_LIKE = "ProductLike"


@dataclass
class DilationKernel:
    """Structuring element for max dilation.

    The footprint is the set of offsets within ``radius`` where an isotropic
    Gaussian with parameter ``sigma`` exceeds 1% of its peak, so ``sigma``
    shapes a disk-like support inside the (2*radius+1)^2 window.  The anchor
    sits at the center and the mask is symmetric about it.
    """

    radius: int = 5
    sigma: float = 2.0
    support_mask: np.ndarray = field(default=None, repr=False)  # type: ignore[assignment]

    _CUTOFF = 0.01

    def __post_init__(self):
        if self.radius < 1:
            raise ValueError("radius must be >= 1")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if self.support_mask is None:
            r = self.radius
            dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
            # Gaussian >= cutoff * peak  <=>  dx^2 + dy^2 <= 2 sigma^2 ln(1/cutoff)
            r2_max = 2.0 * self.sigma**2 * np.log(1.0 / self._CUTOFF)
            self.support_mask = (dx * dx + dy * dy) <= r2_max
        mask = np.asarray(self.support_mask, dtype=bool)
        side = 2 * self.radius + 1
        if mask.shape != (side, side):
            raise ValueError(f"support mask must be {side}x{side}")
        if not mask[self.radius, self.radius]:
            raise ValueError("support mask must contain the anchor")
        if not np.array_equal(mask, mask[::-1, ::-1]):
            raise ValueError("support mask must be symmetric about the anchor")
        self.support_mask = mask


def to_grayscale(img: RasterImage) -> GrayImage:
    """Collapse channels to luminance: 0.299 R + 0.587 G + 0.114 B.

    Single-channel input is copied unchanged.
    """
    if img.channels == 1:
        return GrayImage(img.data[:, :, 0].copy())
    if img.channels == 3:
        return GrayImage(img.data @ _LUMA)
    raise ValueError(f"unsupported channel count {img.channels}")


def dilate(img: RasterImage, kernel: DilationKernel | None = None) -> RasterImage:
    """Max dilation over the kernel support, per channel.

    Each output pixel is the maximum input value over the support mask
    centered on it; at the borders the support is clipped to the image.
    """
    if kernel is None:
        kernel = DilationKernel()
    if kernel.radius >= min(img.width, img.height):
        raise ValueError(
            f"kernel radius {kernel.radius} does not fit inside a "
            f"{img.width}x{img.height} image"
        )
    out = np.empty_like(img.data)
    for c in range(img.channels):
        # 'nearest' replication is equivalent to clipping the support for
        # any centered footprint closed under shrinking offsets.
        out[:, :, c] = ndimage.maximum_filter(
            img.data[:, :, c], footprint=kernel.support_mask, mode="nearest"
        )
    return RasterImage(out)


def dilate_gray(gray: GrayImage, kernel: DilationKernel | None = None) -> GrayImage:
    """Convenience wrapper of :func:`dilate` for single-channel images."""
    dil = dilate(RasterImage(gray.data[:, :, np.newaxis]), kernel)
    return GrayImage(dil.data[:, :, 0])


def shannon_entropy(img: GrayImage) -> float:
    """Histogram entropy in bits over 256 intensity bins.

    Values are quantized with floor(v * 255) clamped to [0, 255]; the result
    lies in [0, 8].
    """
    if img.data.size == 0:
        raise ValueError("empty image")
    bins = np.clip(np.floor(img.data * 255.0).astype(np.int64), 0, 255)
    counts = np.bincount(bins.ravel(), minlength=256)
    p = counts[counts > 0] / img.data.size
    return float(-(p * np.log2(p)).sum())


def classify_entropy(
    e: float, threshold: float = ENTROPY_THRESHOLD_BITS
) -> EntropyClass:
    """Split images into scene-like vs product-like by entropy.

    Scores at or above the threshold (default 6.5 bits) are SceneLike; the
    boundary value itself is assigned SceneLike.
    """
    if e < 0:
        raise ValueError("entropy must be non-negative")
    return EntropyClass.SCENE_LIKE if e >= threshold else EntropyClass.PRODUCT_LIKE
