"""Hot per-pixel kernels.

Each kernel exists twice: a numba version (``*_jit``) written as explicit
loops, and a fallback (``*_numpy``) that uses vectorized numpy where the
algorithm allows it and plain Python otherwise. Both produce identical
results; ``label_components``, ``edt_squared`` and ``priority_flood``
dispatch on ``LEUKOSEG_JIT``.
"""

import heapq

import numpy as np

from ._jit import JIT_ENABLED, njit

_INF = 1.0e20

OFFSETS_4 = np.array([[-1, 0], [0, -1], [0, 1], [1, 0]], dtype=np.int64)
OFFSETS_8 = np.array(
    [[-1, -1], [-1, 0], [-1, 1], [0, -1], [0, 1], [1, -1], [1, 0], [1, 1]],
    dtype=np.int64,
)


def neighbor_offsets(connectivity):
    if connectivity == 4:
        return OFFSETS_4
    if connectivity == 8:
        return OFFSETS_8
    raise ValueError(f"connectivity must be 4 or 8, got {connectivity!r}")


# ---------------------------------------------------------------------------
# connected components
# ---------------------------------------------------------------------------


@njit
def _find(parent, i):
    root = i
    while parent[root] != root:
        root = parent[root]
    while parent[i] != root:
        nxt = parent[i]
        parent[i] = root
        i = nxt
    return root


@njit
def _label_components_jit(mask, eight):
    h, w = mask.shape
    n = h * w
    parent = np.arange(n, dtype=np.int64)
    # first pass: union with already-visited neighbors
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            i = y * w + x
            if x > 0 and mask[y, x - 1]:
                a = _find(parent, i)
                b = _find(parent, i - 1)
                if a != b:
                    if a < b:
                        parent[b] = a
                    else:
                        parent[a] = b
            if y > 0:
                for dx in range(-1, 2):
                    if dx != 0 and not eight:
                        continue
                    xx = x + dx
                    if xx < 0 or xx >= w or not mask[y - 1, xx]:
                        continue
                    a = _find(parent, i)
                    b = _find(parent, i - w + dx)
                    if a != b:
                        if a < b:
                            parent[b] = a
                        else:
                            parent[a] = b
    out = np.zeros((h, w), dtype=np.int32)
    root_label = np.zeros(n, dtype=np.int32)
    nxt = 0
    for y in range(h):
        for x in range(w):
            if not mask[y, x]:
                continue
            r = _find(parent, y * w + x)
            if root_label[r] == 0:
                nxt += 1
                root_label[r] = nxt
            out[y, x] = root_label[r]
    return out


def _label_components_numpy(mask, eight):
    h, w = mask.shape
    if not mask.any():
        return np.zeros((h, w), dtype=np.int32)
    big = np.iinfo(np.int64).max
    idx = np.arange(h * w, dtype=np.int64).reshape(h, w)
    lab = np.where(mask, idx, big)
    offsets = OFFSETS_8 if eight else OFFSETS_4
    while True:
        padded = np.pad(lab, 1, constant_values=big)
        new = lab.copy()
        for dy, dx in offsets:
            new = np.minimum(new, padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w])
        new = np.where(mask, new, big)
        # pointer jumping: a pixel's label names another pixel of the same
        # component, whose label is at least as small
        flat = new.ravel()
        fg = mask.ravel()
        jumped = flat.copy()
        jumped[fg] = flat[flat[fg]]
        new = np.minimum(new, jumped.reshape(h, w))
        if np.array_equal(new, lab):
            break
        lab = new
    # the surviving label of a component is its smallest raster index,
    # i.e. its first pixel in scan order
    roots = np.unique(lab[mask])
    out = np.zeros((h, w), dtype=np.int32)
    out[mask] = np.searchsorted(roots, lab[mask]).astype(np.int32) + 1
    return out


def label_components(mask, connectivity=8):
    """Label 4- or 8-connected true regions in raster order of first encounter."""
    eight = neighbor_offsets(connectivity) is OFFSETS_8
    mask = np.ascontiguousarray(mask, dtype=np.bool_)
    if JIT_ENABLED:
        return _label_components_jit(mask, eight)
    return _label_components_numpy(mask, eight)


# ---------------------------------------------------------------------------
# exact Euclidean distance transform (lower envelope of parabolas)
# ---------------------------------------------------------------------------


@njit
def _edt_1d(f, d, v, z):
    n = f.shape[0]
    k = 0
    v[0] = 0
    z[0] = -np.inf
    z[1] = np.inf
    for q in range(1, n):
        p = v[k]
        s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * (q - p))
        while s <= z[k]:
            k -= 1
            p = v[k]
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * (q - p))
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    k = 0
    for q in range(n):
        while z[k + 1] < q:
            k += 1
        dq = q - v[k]
        d[q] = dq * dq + f[v[k]]


@njit
def _edt_squared_jit(bg_cost):
    h, w = bg_cost.shape
    n = max(h, w)
    f = np.empty(n, dtype=np.float64)
    d = np.empty(n, dtype=np.float64)
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1, dtype=np.float64)
    tmp = np.empty((h, w), dtype=np.float64)
    for x in range(w):
        for y in range(h):
            f[y] = bg_cost[y, x]
        _edt_1d(f[:h], d[:h], v, z)
        for y in range(h):
            tmp[y, x] = d[y]
    out = np.empty((h, w), dtype=np.float64)
    for y in range(h):
        for x in range(w):
            f[x] = tmp[y, x]
        _edt_1d(f[:w], d[:w], v, z)
        for x in range(w):
            out[y, x] = d[x]
    return out


def _edt_squared_numpy(fg):
    h, w = fg.shape
    # column pass: 1-D distance to the nearest background pixel in the column
    col = np.full((h, w), np.inf)
    run = np.full(w, np.inf)
    for y in range(h):
        run = np.where(fg[y], run + 1.0, 0.0)
        col[y] = run
    run = np.full(w, np.inf)
    for y in range(h - 1, -1, -1):
        run = np.where(fg[y], run + 1.0, 0.0)
        col[y] = np.minimum(col[y], run)
    g2 = col * col
    # row pass: min over k of g2[k] + (x - k)^2
    xs = np.arange(w, dtype=np.float64)
    sq = (xs[:, None] - xs[None, :]) ** 2
    out = np.empty((h, w), dtype=np.float64)
    for y in range(h):
        out[y] = np.min(g2[y][None, :] + sq, axis=1)
    return out


def edt_squared(fg):
    """Squared distance from each pixel to the nearest false pixel of ``fg``.

    ``fg`` must contain at least one false pixel (callers pad with a
    background border).
    """
    fg = np.ascontiguousarray(fg, dtype=np.bool_)
    if JIT_ENABLED:
        return _edt_squared_jit(np.where(fg, _INF, 0.0))
    return _edt_squared_numpy(fg)


# ---------------------------------------------------------------------------
# priority flood (marker-driven watershed with lines)
# ---------------------------------------------------------------------------


@njit
def _heap_less(pa, sa, ia, pb, sb, ib):
    if pa != pb:
        return pa < pb
    if sa != sb:
        return sa < sb
    return ia < ib


@njit
def _heap_push(hp, hs, hi, size, p, s, i):
    pos = size
    hp[pos] = p
    hs[pos] = s
    hi[pos] = i
    while pos > 0:
        parent = (pos - 1) >> 1
        if _heap_less(hp[pos], hs[pos], hi[pos], hp[parent], hs[parent], hi[parent]):
            hp[pos], hp[parent] = hp[parent], hp[pos]
            hs[pos], hs[parent] = hs[parent], hs[pos]
            hi[pos], hi[parent] = hi[parent], hi[pos]
            pos = parent
        else:
            break
    return size + 1


@njit
def _heap_pop(hp, hs, hi, size):
    size -= 1
    hp[0] = hp[size]
    hs[0] = hs[size]
    hi[0] = hi[size]
    pos = 0
    while True:
        left = 2 * pos + 1
        if left >= size:
            break
        best = left
        right = left + 1
        if right < size and _heap_less(hp[right], hs[right], hi[right], hp[left], hs[left], hi[left]):
            best = right
        if _heap_less(hp[best], hs[best], hi[best], hp[pos], hs[pos], hi[pos]):
            hp[pos], hp[best] = hp[best], hp[pos]
            hs[pos], hs[best] = hs[best], hs[pos]
            hi[pos], hi[best] = hi[best], hi[pos]
            pos = best
        else:
            break
    return size


@njit
def _priority_flood_jit(surface, labels, domain, offsets):
    h, w = surface.shape
    n = h * w
    boundary = np.zeros((h, w), dtype=np.bool_)
    queued = np.zeros((h, w), dtype=np.bool_)
    hp = np.empty(n, dtype=np.float64)
    hs = np.empty(n, dtype=np.int64)
    hi = np.empty(n, dtype=np.int64)
    trace = np.empty(n, dtype=np.float64)
    size = 0
    seq = 0
    nt = 0
    noff = offsets.shape[0]
    for y in range(h):
        for x in range(w):
            if labels[y, x] == 0:
                continue
            for k in range(noff):
                yy = y + offsets[k, 0]
                xx = x + offsets[k, 1]
                if yy < 0 or yy >= h or xx < 0 or xx >= w:
                    continue
                if not domain[yy, xx] or labels[yy, xx] != 0 or queued[yy, xx]:
                    continue
                queued[yy, xx] = True
                size = _heap_push(hp, hs, hi, size, max(surface[yy, xx], surface[y, x]), seq, yy * w + xx)
                seq += 1
    while size > 0:
        level = hp[0]
        idx = hi[0]
        size = _heap_pop(hp, hs, hi, size)
        y = idx // w
        x = idx % w
        trace[nt] = level
        nt += 1
        found = 0
        clash = False
        for k in range(noff):
            yy = y + offsets[k, 0]
            xx = x + offsets[k, 1]
            if yy < 0 or yy >= h or xx < 0 or xx >= w:
                continue
            lab = labels[yy, xx]
            if lab == 0:
                continue
            if found == 0:
                found = lab
            elif lab != found:
                clash = True
        if clash:
            boundary[y, x] = True
            continue
        labels[y, x] = found
        for k in range(noff):
            yy = y + offsets[k, 0]
            xx = x + offsets[k, 1]
            if yy < 0 or yy >= h or xx < 0 or xx >= w:
                continue
            if not domain[yy, xx] or labels[yy, xx] != 0 or queued[yy, xx]:
                continue
            queued[yy, xx] = True
            size = _heap_push(hp, hs, hi, size, max(surface[yy, xx], level), seq, yy * w + xx)
            seq += 1
    return labels, boundary, trace[:nt].copy()


def _priority_flood_numpy(surface, labels, domain, offsets):
    h, w = surface.shape
    boundary = np.zeros((h, w), dtype=bool)
    queued = np.zeros((h, w), dtype=bool)
    offs = [(int(dy), int(dx)) for dy, dx in offsets]
    heap = []
    seq = 0
    trace = []
    surf = surface.tolist()
    lab = labels.tolist()
    dom = domain.tolist()
    q = queued.tolist()

    def neighbors(y, x):
        for dy, dx in offs:
            yy, xx = y + dy, x + dx
            if 0 <= yy < h and 0 <= xx < w:
                yield yy, xx

    for y, x in zip(*np.nonzero(labels)):
        y, x = int(y), int(x)
        for yy, xx in neighbors(y, x):
            if dom[yy][xx] and lab[yy][xx] == 0 and not q[yy][xx]:
                q[yy][xx] = True
                heapq.heappush(heap, (max(surf[yy][xx], surf[y][x]), seq, yy * w + xx))
                seq += 1
    while heap:
        level, _, idx = heapq.heappop(heap)
        y, x = divmod(idx, w)
        trace.append(level)
        found = 0
        clash = False
        for yy, xx in neighbors(y, x):
            v = lab[yy][xx]
            if v == 0:
                continue
            if found == 0:
                found = v
            elif v != found:
                clash = True
        if clash:
            boundary[y, x] = True
            continue
        lab[y][x] = found
        for yy, xx in neighbors(y, x):
            if dom[yy][xx] and lab[yy][xx] == 0 and not q[yy][xx]:
                q[yy][xx] = True
                heapq.heappush(heap, (max(surf[yy][xx], level), seq, yy * w + xx))
                seq += 1
    return np.array(lab, dtype=labels.dtype), boundary, np.array(trace, dtype=np.float64)


def priority_flood(surface, seeds, domain, connectivity=4):
    """Grow ``seeds`` over ``surface`` inside ``domain``.

    Returns ``(labels, boundary, trace)`` where ``trace`` lists the flood
    level at which each non-seed pixel was absorbed, in absorption order.
    """
    surface = np.ascontiguousarray(surface, dtype=np.float64)
    labels = np.array(seeds, dtype=np.int32, copy=True)
    domain = np.ascontiguousarray(domain, dtype=np.bool_)
    offsets = neighbor_offsets(connectivity)
    if JIT_ENABLED:
        return _priority_flood_jit(surface, labels, domain, offsets)
    return _priority_flood_numpy(surface, labels, domain, offsets)
