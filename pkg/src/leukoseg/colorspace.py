"""RGB to CMYK, CIELAB and luma conversions.

All functions take a 3-channel :class:`RasterImage` and work per pixel.
"""

from typing import NamedTuple

import numpy as np

from .errors import ChannelCountError
from .raster import RasterImage

# sRGB primaries, D65 white
_RGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
# XYZ of RGB (1, 1, 1); equals D65 (0.95047, 1, 1.08883) to 7 digits and
# keeps neutral grays at exactly a* = b* = 0
_WHITE_D65 = _RGB_TO_XYZ.sum(axis=1)
_EPS = (6.0 / 29.0) ** 3
_KAPPA = 1.0 / (3.0 * (6.0 / 29.0) ** 2)


class CmykPlanes(NamedTuple):
    c: np.ndarray
    m: np.ndarray
    y: np.ndarray
    k: np.ndarray


class LabPlanes(NamedTuple):
    l: np.ndarray  # noqa: E741
    a: np.ndarray
    b: np.ndarray


def _rgb(img):
    if img.channels != 3:
        raise ChannelCountError(f"expected a 3-channel RGB image, got {img.channels} channel(s)")
    return img.data


def rgb_to_cmyk(img: RasterImage) -> CmykPlanes:
    """Convert to CMYK planes in [0, 1].

    Pure black (K = 1) has an undefined chroma; C, M and Y are set to 0 there.
    """
    rgb = _rgb(img).astype(np.float64) / 255.0
    k = 1.0 - rgb.max(axis=2)
    denom = 1.0 - k
    black = denom == 0.0
    safe = np.where(black, 1.0, denom)
    planes = []
    for ch in range(3):
        v = (1.0 - rgb[:, :, ch] - k) / safe
        v[black] = 0.0
        # the numerator is >= 0 and <= denom by construction; clip float dust
        planes.append(np.clip(v, 0.0, 1.0))
    return CmykPlanes(planes[0], planes[1], planes[2], k)


def cmyk_plane_to_gray(plane: np.ndarray) -> RasterImage:
    """Quantize a [0, 1] plane to 8 bits, rounding half up."""
    plane = np.asarray(plane, dtype=np.float64)
    if not np.all(np.isfinite(plane)) or plane.min(initial=0.0) < 0.0 or plane.max(initial=0.0) > 1.0:
        raise ValueError("plane samples must lie in [0, 1]")
    return RasterImage(np.floor(255.0 * plane + 0.5).astype(np.uint8))


def _srgb_to_linear(c):
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _lab_f(t):
    return np.where(t > _EPS, np.cbrt(t), t * _KAPPA + 4.0 / 29.0)


def rgb_to_lab(img: RasterImage) -> LabPlanes:
    """CIE L*a*b* of sRGB pixels (D65 reference white)."""
    rgb = _srgb_to_linear(_rgb(img).astype(np.float64) / 255.0)
    xyz = rgb @ _RGB_TO_XYZ.T / _WHITE_D65
    fx, fy, fz = (_lab_f(xyz[:, :, i]) for i in range(3))
    return LabPlanes(116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz))


def rgb_to_gray(img: RasterImage) -> RasterImage:
    """BT.601 luma, rounded half up (computed in exact integer arithmetic)."""
    rgb = _rgb(img).astype(np.int64)
    acc = 299 * rgb[:, :, 0] + 587 * rgb[:, :, 1] + 114 * rgb[:, :, 2]
    return RasterImage(((acc + 500) // 1000).astype(np.uint8))
