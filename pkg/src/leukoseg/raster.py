"""Pixel containers and lossless image I/O.

Only the 8-bit raster gets its own class because the channel count carries
meaning. The other containers are plain numpy arrays:

* float plane -- ``float64`` array of shape ``(h, w)``
* binary mask -- ``bool`` array of shape ``(h, w)``
* label map   -- ``int32`` array of shape ``(h, w)``, 0 is background
"""

from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    CorruptImageError,
    ImageNotFoundError,
    ImageWriteError,
    UnsupportedFormatError,
)

_READ_FORMATS = {"PNG", "PPM"}  # Pillow reports PGM as "PPM"
_WRITE_FORMATS = {".png": "PNG", ".ppm": "PPM", ".pgm": "PPM"}


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Interleaved 8-bit raster with 1 or 3 channels.

    ``data`` is stored read-only with shape ``(h, w)`` for one channel and
    ``(h, w, 3)`` for three.
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.uint8, copy=True)
        if arr.ndim == 3 and arr.shape[2] == 1:
            arr = arr[:, :, 0].copy()
        if arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
            raise ValueError(f"raster must have 1 or 3 channels, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("raster must be at least 1x1")
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape[:2]

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(np.array_equal(self.data, other.data))

    def __hash__(self):
        return hash((self.data.shape, self.data.tobytes()))

    def __repr__(self):
        return f"RasterImage(width={self.width}, height={self.height}, channels={self.channels})"


def _open(path):
    path = Path(path)
    if not path.is_file():
        raise ImageNotFoundError(f"no such image file: {path}")
    try:
        im = Image.open(path)
    except UnidentifiedImageError as exc:
        raise UnsupportedFormatError(f"{path}: not a PNG/PPM/PGM image") from exc
    except (OSError, SyntaxError, ValueError) as exc:
        raise CorruptImageError(f"{path}: {exc}") from exc
    if im.format not in _READ_FORMATS:
        im.close()
        raise UnsupportedFormatError(f"{path}: format {im.format} is not supported (PNG, PPM, PGM only)")
    try:
        im.load()
    except (OSError, SyntaxError, ValueError) as exc:
        im.close()
        raise CorruptImageError(f"{path}: {exc}") from exc
    return im


def load_image(path) -> RasterImage:
    """Read a PNG, PPM (P6) or PGM (P5) file as an 8-bit raster.

    Alpha is dropped; palette images are expanded to RGB.
    """
    with _open(path) as im:
        mode = im.mode
        if mode in ("RGBA", "P", "CMYK", "YCbCr"):
            im = im.convert("RGB")
        elif mode == "LA":
            im = im.convert("L")
        elif mode == "1":
            im = im.convert("L")
        elif mode not in ("RGB", "L"):
            raise UnsupportedFormatError(f"{path}: pixel mode {mode} is not 8-bit gray/RGB")
        return RasterImage(np.asarray(im))


def load_labels(path) -> np.ndarray:
    """Read a label map stored as a 16-bit (or 8-bit) grayscale PNG."""
    with _open(path) as im:
        if im.mode not in ("I;16", "I;16B", "I", "L"):
            raise UnsupportedFormatError(f"{path}: label maps must be grayscale, got {im.mode}")
        return np.asarray(im).astype(np.int32)


def _atomic_save(pil_image, path, fmt):
    path = Path(path)
    if not path.parent.is_dir():
        raise ImageWriteError(f"parent directory does not exist: {path.parent}")
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            pil_image.save(fh, format=fmt)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise ImageWriteError(f"cannot write {path}: {exc}") from exc


def _format_for(path):
    fmt = _WRITE_FORMATS.get(Path(path).suffix.lower())
    if fmt is None:
        raise UnsupportedFormatError(f"{path}: only .png, .ppm and .pgm can be written")
    return fmt


def save_image(img: RasterImage, path) -> None:
    """Write ``img`` losslessly; the extension picks PNG or PPM/PGM."""
    fmt = _format_for(path)
    try:
        _atomic_save(Image.fromarray(np.ascontiguousarray(img.data)), path, fmt)
    except PermissionError as exc:  # mkstemp in a read-only directory
        raise ImageWriteError(f"cannot write {path}: {exc}") from exc


def save_labels(labels: np.ndarray, path) -> None:
    """Write a label map as a 16-bit grayscale PNG."""
    labels = np.asarray(labels)
    if labels.size and (labels.min() < 0 or labels.max() > 65535):
        raise ValueError("label values must lie in [0, 65535] for 16-bit storage")
    arr = labels.astype(np.uint16)
    try:
        _atomic_save(Image.fromarray(arr), path, "PNG")
    except PermissionError as exc:
        raise ImageWriteError(f"cannot write {path}: {exc}") from exc


def _palette(n, seed):
    # bright colours drawn without replacement from a 6x6x7 grid; beyond
    # 252 labels, extra non-black colours are drawn and deduplicated
    rng = np.random.default_rng(seed)
    levels_rg = np.linspace(40, 255, 6).astype(np.uint8)
    levels_b = np.linspace(40, 255, 7).astype(np.uint8)
    grid = np.array([(r, g, b) for r in levels_rg for g in levels_rg for b in levels_b], dtype=np.uint8)
    grid = grid[rng.permutation(len(grid))]
    if n <= len(grid):
        return grid[:n]
    seen = {tuple(c) for c in grid.tolist()}
    extra = []
    while len(extra) < n - len(grid):
        c = tuple(int(v) for v in rng.integers(1, 256, size=3))
        if c not in seen:
            seen.add(c)
            extra.append(c)
    return np.concatenate([grid, np.array(extra, dtype=np.uint8)])


def label_to_image(labels: np.ndarray, palette_seed: int = 0) -> RasterImage:
    """Render a label map in false colour; label 0 is black."""
    labels = np.asarray(labels)
    ids = np.unique(labels)
    ids = ids[ids != 0]
    colors = _palette(len(ids), palette_seed)
    out = np.zeros(labels.shape + (3,), dtype=np.uint8)
    if len(ids):
        fg = labels != 0
        out[fg] = colors[np.searchsorted(ids, labels[fg])]
    return RasterImage(out)


def mask_to_image(mask: np.ndarray) -> RasterImage:
    """True -> 255, false -> 0, single channel."""
    return RasterImage(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8))
