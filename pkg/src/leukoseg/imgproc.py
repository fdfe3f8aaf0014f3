"""Histogram, threshold, morphology and labeling operations on 2-D arrays."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .errors import DimensionMismatchError
from .raster import RasterImage


@dataclass(frozen=True)
class StructuringElement:
    """Flat structuring element given as ``(dy, dx)`` offsets."""

    shape: str
    radius: int
    offsets: tuple

    @classmethod
    def make(cls, shape="ellipse", radius=3):
        if radius < 1:
            raise ValueError("structuring element radius must be >= 1")
        r = int(radius)
        if shape == "square":
            offs = [(dy, dx) for dy in range(-r, r + 1) for dx in range(-r, r + 1)]
        elif shape == "ellipse":
            # digital disk; radius 1 is the 4-neighbourhood cross
            offs = [
                (dy, dx)
                for dy in range(-r, r + 1)
                for dx in range(-r, r + 1)
                if dy * dy + dx * dx <= r * r
            ]
        else:
            raise ValueError(f"unknown structuring element shape {shape!r}")
        return cls(shape, r, tuple(offs))


def _gray(img):
    data = img.data if isinstance(img, RasterImage) else np.asarray(img)
    if data.ndim != 2:
        raise ValueError("expected a single-channel image")
    return data


def histogram(img, mask=None) -> np.ndarray:
    """256-bin histogram of an 8-bit image, optionally over ``mask`` only."""
    data = _gray(img)
    vals = data[mask] if mask is not None else data.ravel()
    return np.bincount(vals.astype(np.int64), minlength=256)[:256]


def equalize_histogram(img: RasterImage) -> RasterImage:
    data = _gray(img)
    cdf = np.cumsum(histogram(data)).astype(np.int64)
    n = int(cdf[-1])
    cdf_min = int(cdf[np.nonzero(cdf)[0][0]])
    if n == cdf_min:
        return RasterImage(data)
    # round(255 * num / den) with halves going up, in integers
    num = 255 * (cdf - cdf_min)
    den = n - cdf_min
    lut = np.clip((2 * num + den) // (2 * den), 0, 255).astype(np.uint8)
    return RasterImage(lut[data])


class StretchResult(NamedTuple):
    image: RasterImage
    degenerate: bool


def stretch_contrast(img, low=0.01, high=0.99, mask=None) -> StretchResult:
    """Linearly map the [low, high] percentile range to [0, 255].

    ``img`` may be an 8-bit raster or a float plane. Percentiles are taken
    over ``mask`` when given; pixels outside the mask are still mapped.
    """
    if not (0.0 <= low < high <= 1.0):
        raise ValueError(f"need 0 <= low < high <= 1, got ({low}, {high})")
    data = _gray(img).astype(np.float64)
    sample = data[mask] if mask is not None else data.ravel()
    if sample.size == 0:
        return StretchResult(RasterImage(np.zeros(data.shape, np.uint8)), True)
    lo, hi = np.quantile(sample, [low, high])
    if hi <= lo:
        return StretchResult(RasterImage(np.zeros(data.shape, np.uint8)), True)
    scaled = (data - lo) / (hi - lo) * 255.0
    out = np.floor(np.clip(scaled, 0.0, 255.0) + 0.5).astype(np.uint8)
    return StretchResult(RasterImage(out), False)


def otsu_threshold(img, mask=None) -> int:
    """Threshold maximizing between-class variance of the split {<= t, > t}.

    Ties go to the smallest t. The comparison is done with exact integers:
    for a split with n0, n1 pixels and sums s0, s1 the between-class
    variance is proportional to (n1*s0 - n0*s1)^2 / (n0*n1).
    """
    hist = [int(v) for v in histogram(img, mask)]
    total_n = sum(hist)
    if total_n == 0:
        return 0
    total_s = sum(i * c for i, c in enumerate(hist))
    best_t = None
    best_num, best_den = 0, 1
    n0 = s0 = 0
    for t in range(255):
        n0 += hist[t]
        s0 += t * hist[t]
        n1 = total_n - n0
        if n0 == 0 or n1 == 0:
            continue
        num = (n1 * s0 - n0 * (total_s - s0)) ** 2
        den = n0 * n1
        if best_t is None or num * best_den > best_num * den:
            best_t, best_num, best_den = t, num, den
    if best_t is None:
        # single occupied bin
        return next(i for i, c in enumerate(hist) if c)
    return best_t


def threshold(img, t, polarity="above") -> np.ndarray:
    data = _gray(img)
    if polarity == "above":
        return data > t
    if polarity == "below":
        return data <= t
    raise ValueError(f"polarity must be 'above' or 'below', got {polarity!r}")


def _shift_or(mask, offsets):
    h, w = mask.shape
    r = max(max(abs(dy), abs(dx)) for dy, dx in offsets)
    padded = np.pad(mask, r, constant_values=False)
    out = np.zeros_like(mask)
    for dy, dx in offsets:
        out |= padded[r + dy : r + dy + h, r + dx : r + dx + w]
    return out


def _shift_and(mask, offsets):
    h, w = mask.shape
    r = max(max(abs(dy), abs(dx)) for dy, dx in offsets)
    padded = np.pad(mask, r, constant_values=False)
    out = np.ones_like(mask)
    for dy, dx in offsets:
        out &= padded[r + dy : r + dy + h, r + dx : r + dx + w]
    return out


def dilate(mask, se: StructuringElement) -> np.ndarray:
    return _shift_or(np.asarray(mask, dtype=bool), [(-dy, -dx) for dy, dx in se.offsets])


def erode(mask, se: StructuringElement) -> np.ndarray:
    """Erosion; pixels whose neighbourhood leaves the frame see background."""
    return _shift_and(np.asarray(mask, dtype=bool), se.offsets)


def close(mask, se: StructuringElement) -> np.ndarray:
    """Dilation followed by erosion of a mask embedded in an all-background plane.

    The frame is padded by the element radius first, so dilation can spill
    past the border and erosion pulls it back. This keeps closing extensive
    and idempotent at the border.
    """
    mask = np.asarray(mask, dtype=bool)
    r = se.radius
    padded = np.pad(mask, r, constant_values=False)
    out = erode(dilate(padded, se), se)
    return out[r:-r, r:-r]


def open_(mask, se: StructuringElement) -> np.ndarray:
    """Erosion followed by dilation; removes specks smaller than the element."""
    mask = np.asarray(mask, dtype=bool)
    return dilate(erode(mask, se), se)


def _same_shape(a, b):
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"mask shapes differ: {a.shape} vs {b.shape}")
    return a, b


def mask_and(a, b):
    a, b = _same_shape(a, b)
    return a & b


def mask_or(a, b):
    a, b = _same_shape(a, b)
    return a | b


def mask_diff(a, b):
    """Pixels in ``a`` but not in ``b``."""
    a, b = _same_shape(a, b)
    return a & ~b


def mask_not(a):
    return ~np.asarray(a, dtype=bool)


def connected_components(mask, connectivity=8) -> np.ndarray:
    """Label connected true regions 1..L in raster order of first encounter."""
    return kernels.label_components(mask, connectivity)


def distance_transform(mask) -> np.ndarray:
    """Exact Euclidean distance to the nearest false pixel; outside the frame counts as false."""
    mask = np.asarray(mask, dtype=bool)
    padded = np.pad(mask, 1, constant_values=False)
    return np.sqrt(kernels.edt_squared(padded))[1:-1, 1:-1]
