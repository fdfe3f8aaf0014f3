"""Seed extraction and marker-driven watershed."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import WatershedError
from .imgproc import connected_components, distance_transform


@dataclass(frozen=True)
class SeedConfig:
    dt_fraction: float = 0.5
    min_seed_area: int = 9

    def __post_init__(self):
        if not 0.0 < self.dt_fraction < 1.0:
            raise ValueError("dt_fraction must lie in (0, 1)")
        if self.min_seed_area < 1:
            raise ValueError("min_seed_area must be >= 1")


@dataclass(frozen=True, eq=False)
class WatershedResult:
    labels: np.ndarray
    boundary: np.ndarray
    trace: np.ndarray  # flood level of each absorbed pixel, in order

    @property
    def n_labels(self):
        return int(self.labels.max(initial=0))


def extract_seeds(nucleus_mask, cfg: SeedConfig | None = None) -> np.ndarray:
    """Markers from the distance-transform cores of each nucleus component.

    Every 8-connected component is cut at ``dt_fraction`` of its own maximum
    distance; a dumbbell-shaped component can leave several cores, which is
    how touching nuclei end up with separate seeds.
    """
    cfg = cfg or SeedConfig()
    mask = np.asarray(nucleus_mask, dtype=bool)
    if not mask.any():
        return np.zeros(mask.shape, dtype=np.int32)
    comps = connected_components(mask, 8)
    dist = distance_transform(mask)
    n = int(comps.max())
    peak = np.zeros(n + 1)
    np.maximum.at(peak, comps.ravel(), dist.ravel())
    cores = mask & (dist > cfg.dt_fraction * peak[comps])
    seeds = connected_components(cores, 8)
    sizes = np.bincount(seeds.ravel())
    keep = sizes >= cfg.min_seed_area
    keep[0] = False
    # compact surviving labels, preserving raster order
    remap = np.zeros(len(sizes), dtype=np.int32)
    remap[keep] = np.arange(1, int(keep.sum()) + 1, dtype=np.int32)
    return remap[seeds]


def watershed(surface, seeds, domain, connectivity=4) -> WatershedResult:
    """Flood ``surface`` from ``seeds`` within ``domain``.

    Pixels are absorbed in order of (flood level, insertion sequence, raster
    index). A pixel touching two different labels when it is absorbed
    becomes a watershed-line pixel and belongs to no label. Pockets that a
    line seals off from every label are marked as line pixels too; only
    domain components holding no seed at all stay 0.
    """
    surface = np.asarray(surface, dtype=np.float64)
    seeds = np.asarray(seeds, dtype=np.int32)
    domain = np.asarray(domain, dtype=bool)
    if not (surface.shape == seeds.shape == domain.shape):
        raise WatershedError("surface, seeds and domain must share one shape")
    if not (seeds > 0).any():
        raise WatershedError("no seeds given")
    if (seeds < 0).any():
        raise WatershedError("seed labels must be non-negative")
    if ((seeds > 0) & ~domain).any():
        raise WatershedError("seed pixels lie outside the domain")
    labels, boundary, trace = kernels.priority_flood(surface, seeds, domain, connectivity)
    comps = connected_components(domain, connectivity)
    seeded = np.zeros(int(comps.max()) + 1, dtype=bool)
    seeded[comps[seeds > 0]] = True
    seeded[0] = False
    boundary |= seeded[comps] & (labels == 0)
    return WatershedResult(labels, boundary, trace)
