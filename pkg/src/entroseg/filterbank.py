"""Leung-Malik filter bank and orientation-invariant texture responses.

The bank mixes anisotropic Gaussian-derivative kernels (first and second
order, 6 orientations per scale), Laplacian-of-Gaussian kernels, and
isotropic Gaussians.  Per-(family, scale) derivative responses are pooled
by a pixel-wise max of absolute values so the output does not depend on
stroke orientation.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sp_fft
from scipy import ndimage

from .image import GrayImage

FIRST_DERIV = "first_deriv"
SECOND_DERIV = "second_deriv"
LOG = "log"
GAUSSIAN = "gaussian"

_N_ORIENTATIONS = 6
# Basic scale ladder shared by the isotropic families: 1, sqrt2, 2, 2*sqrt2
_BASIC_SCALES = np.sqrt(2.0) ** np.arange(4)
_ELONGATION = 3.0


@dataclass(frozen=True)
class LMFilter:
    """One bank member: 2-D kernel tagged with family, scale and orientation."""

    kernel: np.ndarray
    family: str
    scale: int
    orientation: float | None = None  # radians in [0, pi), None if isotropic


@dataclass
class FilterBank:
    """Immutable collection of LM kernels with a per-group index.

    ``groups`` lists the response-map groups in output order: one
    (family, scale) entry per derivative sextet, then one entry per LoG and
    per Gaussian kernel.  ``group_members`` maps each group to the indices
    of its filters inside ``filters``.
    """

    filters: list[LMFilter]
    groups: list[tuple[str, int]]
    group_members: list[list[int]]
    support: int
    deriv_scales: int

    _fft_lock: threading.Lock = field(
        default_factory=threading.Lock, repr=False, compare=False
    )
    _fft_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.filters)

    @property
    def n_groups(self) -> int:
        return len(self.groups)

    def kernel_ffts(self, shape: tuple[int, int]) -> np.ndarray:
        """Zero-padded kernel rFFTs for the given transform shape, cached.

        Only the most recent shape is retained so memory stays bounded when
        a shared bank sweeps a fixed-size dataset.
        """
        with self._fft_lock:
            cached = self._fft_cache.get(shape)
            if cached is None:
                stack = np.stack(
                    [sp_fft.rfft2(f.kernel, s=shape) for f in self.filters]
                )
                self._fft_cache.clear()
                self._fft_cache[shape] = stack
                cached = stack
            return cached


@dataclass
class ResponseStack:
    """Per-group response maps for one image channel.

    ``maps`` has shape (n_groups, H, W); ``groups`` mirrors the bank's group
    order.  Derivative groups hold orientation-pooled absolute responses,
    LoG and Gaussian groups hold the raw convolution output.
    """

    maps: np.ndarray
    groups: list[tuple[str, int]]
    channel: int = 0

    @property
    def n_groups(self) -> int:
        return self.maps.shape[0]


def _gauss_1d(sigma: float, x: np.ndarray, order: int) -> np.ndarray:
    var = sigma * sigma
    g = np.exp(-(x * x) / (2.0 * var)) / np.sqrt(2.0 * np.pi * var)
    if order == 0:
        return g
    if order == 1:
        return -g * (x / var)
    if order == 2:
        return g * ((x * x) - var) / (var * var)
    raise ValueError(f"unsupported derivative order {order}")


def _normalize(kernel: np.ndarray, zero_mean: bool) -> np.ndarray:
    if zero_mean:
        kernel = kernel - kernel.mean()
    return kernel / np.abs(kernel).sum()


def _oriented_derivative(
    support: int, sigma: float, theta: float, order: int
) -> np.ndarray:
    """Anisotropic Gaussian derivative: 3:1 elongation along the filter axis,
    derivative of the given order across it, rotated by theta."""
    half = (support - 1) // 2
    y, x = np.mgrid[-half : half + 1, -half : half + 1]
    c, s = np.cos(theta), np.sin(theta)
    xr = c * x - s * y
    yr = s * x + c * y
    kern = _gauss_1d(_ELONGATION * sigma, xr, 0) * _gauss_1d(sigma, yr, order)
    return _normalize(kern, zero_mean=True)


def _isotropic(support: int, sigma: float, laplacian: bool) -> np.ndarray:
    half = (support - 1) // 2
    y, x = np.mgrid[-half : half + 1, -half : half + 1]
    r2 = x * x + y * y
    var = sigma * sigma
    g = np.exp(-r2 / (2.0 * var)) / (2.0 * np.pi * var)
    if laplacian:
        return _normalize(g * (r2 - 2.0 * var) / (var * var), zero_mean=True)
    return _normalize(g, zero_mean=False)


def build_lm_filterbank(support: int = 49, deriv_scales: int = 3) -> FilterBank:
    """Build the bank: 6 orientations x 2 derivative orders x ``deriv_scales``
    scales, plus 8 LoG and 4 Gaussian kernels.

    Derivative scales follow sigma = sqrt(2)^i; derivative and LoG kernels
    are zero-mean, and every kernel is L1-normalized.
    """
    if support < 7 or support % 2 == 0:
        raise ValueError("support must be odd and >= 7")
    if deriv_scales < 1:
        raise ValueError("deriv_scales must be >= 1")

    deriv_sigmas = np.sqrt(2.0) ** np.arange(deriv_scales)
    filters: list[LMFilter] = []
    groups: list[tuple[str, int]] = []
    group_members: list[list[int]] = []

    for family, order in ((FIRST_DERIV, 1), (SECOND_DERIV, 2)):
        for si, sigma in enumerate(deriv_sigmas):
            members = []
            for oi in range(_N_ORIENTATIONS):
                theta = np.pi * oi / _N_ORIENTATIONS
                kern = _oriented_derivative(support, float(sigma), theta, order)
                members.append(len(filters))
                filters.append(LMFilter(kern, family, si, theta))
            groups.append((family, si))
            group_members.append(members)

    log_sigmas = np.concatenate([_BASIC_SCALES, 3.0 * _BASIC_SCALES])
    for si, sigma in enumerate(log_sigmas):
        kern = _isotropic(support, float(sigma), laplacian=True)
        groups.append((LOG, si))
        group_members.append([len(filters)])
        filters.append(LMFilter(kern, LOG, si, None))

    for si, sigma in enumerate(_BASIC_SCALES):
        kern = _isotropic(support, float(sigma), laplacian=False)
        groups.append((GAUSSIAN, si))
        group_members.append([len(filters)])
        filters.append(LMFilter(kern, GAUSSIAN, si, None))

    return FilterBank(
        filters=filters,
        groups=groups,
        group_members=group_members,
        support=support,
        deriv_scales=deriv_scales,
    )


def _as_channel(channel: GrayImage | np.ndarray) -> np.ndarray:
    arr = channel.data if isinstance(channel, GrayImage) else np.asarray(channel)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D channel, got shape {arr.shape}")
    return arr.astype(np.float64, copy=False)


def convolve(channel: GrayImage | np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """True convolution (kernel flipped) with edge replication at borders.

    Output has the same shape as the input channel.
    """
    arr = _as_channel(channel)
    kernel = np.asarray(kernel, dtype=np.float64)
    if kernel.shape[0] > arr.shape[0] or kernel.shape[1] > arr.shape[1]:
        raise ValueError(
            f"kernel {kernel.shape} larger than image {arr.shape}"
        )
    return ndimage.convolve(arr, kernel, mode="nearest")


def apply_filterbank(
    channel: GrayImage | np.ndarray, bank: FilterBank, use_fft: bool = True
) -> np.ndarray:
    """Per-filter responses, shape (len(bank), H, W).

    The FFT path pads the channel by edge replication once and reuses a
    single forward transform across all kernels; it matches the direct
    path to within accumulation error.
    """
    arr = _as_channel(channel)
    if not use_fft:
        return np.stack([convolve(arr, f.kernel) for f in bank.filters])

    sup = bank.support
    if sup > arr.shape[0] or sup > arr.shape[1]:
        raise ValueError(f"kernel {sup}x{sup} larger than image {arr.shape}")
    pad = sup // 2
    padded = np.pad(arr, pad, mode="edge")
    full = (padded.shape[0] + sup - 1, padded.shape[1] + sup - 1)
    shape = (sp_fft.next_fast_len(full[0], True), sp_fft.next_fast_len(full[1], True))
    f_img = sp_fft.rfft2(padded, s=shape)
    f_kernels = bank.kernel_ffts(shape)

    h, w = arr.shape
    y0 = sup // 2 + pad
    x0 = sup // 2 + pad
    out = np.empty((len(bank), h, w))
    for i in range(len(bank)):
        resp = sp_fft.irfft2(f_img * f_kernels[i], s=shape)
        out[i] = resp[y0 : y0 + h, x0 : x0 + w]
    return out


def max_over_orientations(bank: FilterBank, responses: np.ndarray) -> ResponseStack:
    """Pool per-filter responses into per-group maps.

    Derivative groups take the pixel-wise max of absolute responses over
    their 6 orientations; LoG and Gaussian maps pass through unchanged.
    """
    responses = np.asarray(responses)
    if responses.shape[0] != len(bank):
        raise ValueError(
            f"got {responses.shape[0]} response maps for {len(bank)} filters"
        )
    maps = np.empty((bank.n_groups,) + responses.shape[1:])
    for gi, members in enumerate(bank.group_members):
        family = bank.groups[gi][0]
        if family in (FIRST_DERIV, SECOND_DERIV):
            maps[gi] = np.abs(responses[members]).max(axis=0)
        else:
            maps[gi] = responses[members[0]]
    return ResponseStack(maps=maps, groups=list(bank.groups))


def compute_response_stack(
    channel: GrayImage | np.ndarray,
    bank: FilterBank,
    channel_index: int = 0,
    use_fft: bool = True,
) -> ResponseStack:
    """Convolve one channel with the whole bank and pool orientations."""
    stack = max_over_orientations(bank, apply_filterbank(channel, bank, use_fft))
    stack.channel = channel_index
    return stack
