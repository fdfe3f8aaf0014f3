"""Synthetic stained-slide generator with exact per-pixel ground truth."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .errors import PlacementError
from .raster import RasterImage


@dataclass(frozen=True)
class SynthConfig:
    width: int = 512
    height: int = 512
    n_cells: int = 8
    radius_range: tuple = (22.0, 32.0)
    nucleus_fraction_range: tuple = (0.45, 0.65)
    overlap_pairs: int = 0
    noise_sigma: float = 6.0
    seed: int = 42
    background_color: tuple = (235, 220, 225)
    cytoplasm_color: tuple = (140, 130, 210)
    nucleus_color: tuple = (120, 60, 130)
    color_jitter: float = 6.0
    aspect_range: tuple = (0.85, 1.0)
    gap: float = 6.0  # minimum free space between cells that are not a pair
    max_attempts: int = 5000

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError("width and height must be >= 1")
        if self.n_cells < 0 or self.overlap_pairs < 0:
            raise ValueError("n_cells and overlap_pairs must be >= 0")
        if 2 * self.overlap_pairs > self.n_cells:
            raise ValueError("overlap_pairs needs 2 cells per pair")
        lo, hi = self.radius_range
        if not 0 < lo <= hi:
            raise ValueError("radius_range must satisfy 0 < lo <= hi")
        if 2 * hi > min(self.width, self.height):
            raise ValueError("largest cell does not fit inside the frame")
        flo, fhi = self.nucleus_fraction_range
        if not 0 < flo <= fhi < 1:
            raise ValueError("nucleus_fraction_range must lie in (0, 1)")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be >= 0")

    @classmethod
    def from_dict(cls, data):
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown SynthConfig field(s): {', '.join(sorted(unknown))}")
        kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
        return cls(**kwargs)

    def to_dict(self):
        return {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self).items()}


@dataclass(frozen=True)
class Cell:
    cx: float
    cy: float
    a: float  # semi-axes
    b: float
    theta: float
    nx: float  # nucleus center
    ny: float
    na: float
    nb: float
    ntheta: float
    cytoplasm_rgb: tuple
    nucleus_rgb: tuple
    pair: int  # index of the overlap pair, -1 for free cells


@dataclass(frozen=True, eq=False)
class GroundTruth:
    instances: np.ndarray
    nucleus: np.ndarray
    cytoplasm: np.ndarray
    semantic: np.ndarray
    cells: tuple = ()

    @property
    def n_instances(self):
        return int(self.instances.max(initial=0))


def _ellipse_dist(xx, yy, cx, cy, a, b, theta):
    c, s = math.cos(theta), math.sin(theta)
    dx, dy = xx - cx, yy - cy
    u = (dx * c + dy * s) / a
    v = (-dx * s + dy * c) / b
    return np.sqrt(u * u + v * v)


def _make_cell(rng, cfg, cx, cy, r, pair):
    aspect = rng.uniform(*cfg.aspect_range)
    theta = rng.uniform(0, math.pi)
    frac = rng.uniform(*cfg.nucleus_fraction_range)
    nr = frac * r
    # off-centre nucleus, kept well inside the cell body
    room = max(0.0, 0.85 * r * aspect - nr)
    off = rng.uniform(0, min(0.15 * r, room))
    ang = rng.uniform(0, 2 * math.pi)
    naspect = rng.uniform(0.8, 1.0)
    jitter = lambda base: tuple(  # noqa: E731
        float(np.clip(v + rng.uniform(-cfg.color_jitter, cfg.color_jitter), 0, 255)) for v in base
    )
    return Cell(
        cx, cy, r, r * aspect, theta,
        cx + off * math.cos(ang), cy + off * math.sin(ang), nr, nr * naspect, rng.uniform(0, math.pi),
        jitter(cfg.cytoplasm_color), jitter(cfg.nucleus_color), pair,
    )


def _place(rng, cfg):
    lo, hi = cfg.radius_range
    placed = []  # (cx, cy, r, pair)

    def fits(cx, cy, r):
        if cx - r < 1 or cy - r < 1 or cx + r > cfg.width - 2 or cy + r > cfg.height - 2:
            return False
        return all(math.hypot(cx - px, cy - py) > r + pr + cfg.gap for px, py, pr, _ in placed)

    attempts = 0
    for p in range(cfg.overlap_pairs):
        while True:
            attempts += 1
            if attempts > cfg.max_attempts:
                raise PlacementError(f"could not place overlap pair {p} after {cfg.max_attempts} attempts")
            r1, r2 = rng.uniform(lo, hi, size=2)
            x1 = rng.uniform(r1, cfg.width - r1)
            y1 = rng.uniform(r1, cfg.height - r1)
            ang = rng.uniform(0, 2 * math.pi)
            d = 1.4 * (r1 + r2) / 2.0
            x2, y2 = x1 + d * math.cos(ang), y1 + d * math.sin(ang)
            if fits(x1, y1, r1) and fits(x2, y2, r2):
                placed.append((x1, y1, r1, p))
                placed.append((x2, y2, r2, p))
                break
    for i in range(cfg.n_cells - 2 * cfg.overlap_pairs):
        while True:
            attempts += 1
            if attempts > cfg.max_attempts:
                raise PlacementError(f"could not place cell {i} after {cfg.max_attempts} attempts")
            r = rng.uniform(lo, hi)
            x = rng.uniform(r, cfg.width - r)
            y = rng.uniform(r, cfg.height - r)
            if fits(x, y, r):
                placed.append((x, y, r, -1))
                break
    return placed


def generate_slide(cfg: SynthConfig | None = None):
    """Render one slide; returns ``(RasterImage, GroundTruth)``.

    Overlap pairs are drawn first at a centre distance of 1.4 times their
    mean radius. Pixels covered by both cells of a pair go to the cell with
    the smaller normalized elliptical distance, except that a nucleus always
    belongs to its own cell.
    """
    cfg = cfg or SynthConfig()
    rng = np.random.default_rng(cfg.seed)
    placed = _place(rng, cfg)
    cells = [_make_cell(rng, cfg, x, y, r, pair) for x, y, r, pair in placed]

    h, w = cfg.height, cfg.width
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    best = np.full((h, w), np.inf)
    owner = np.zeros((h, w), dtype=np.int32)
    nucleus_owner = np.zeros((h, w), dtype=np.int32)
    for i, c in enumerate(cells, start=1):
        d = _ellipse_dist(xx, yy, c.cx, c.cy, c.a, c.b, c.theta)
        take = (d <= 1.0) & (d < best)
        owner[take] = i
        best[take] = d[take]
        nd = _ellipse_dist(xx, yy, c.nx, c.ny, c.na, c.nb, c.ntheta)
        nucleus_owner[nd <= 1.0] = i
    owner = np.where(nucleus_owner > 0, nucleus_owner, owner)

    img = np.empty((h, w, 3), dtype=np.float64)
    img[:] = cfg.background_color
    nucleus = nucleus_owner > 0
    for i, c in enumerate(cells, start=1):
        own = owner == i
        img[own & ~nucleus] = c.cytoplasm_rgb
        img[nucleus_owner == i] = c.nucleus_rgb
    if cfg.noise_sigma > 0:
        img += rng.normal(0.0, cfg.noise_sigma, size=img.shape)
    img = np.clip(np.floor(img + 0.5), 0, 255).astype(np.uint8)

    semantic = owner > 0
    truth = GroundTruth(
        instances=owner,
        nucleus=nucleus,
        cytoplasm=semantic & ~nucleus,
        semantic=semantic,
        cells=tuple(cells),
    )
    return RasterImage(img), truth
