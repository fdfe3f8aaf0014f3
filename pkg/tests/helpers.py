"""Shared fixture builders."""

import numpy as np


def random_mask(rng, h, w, density=None):
    """Random binary mask, sometimes smoothed into blobs."""
    p = rng.uniform(0.2, 0.8) if density is None else density
    m = rng.random((h, w)) < p
    if rng.random() < 0.5:
        # a blobbier mask: majority vote over 3x3
        pad = np.pad(m.astype(int), 1)
        s = sum(pad[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w] for dy in (-1, 0, 1) for dx in (-1, 0, 1))
        m = s >= 5
    return m


def disk(shape, cy, cx, r):
    yy, xx = np.indices(shape)
    return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
