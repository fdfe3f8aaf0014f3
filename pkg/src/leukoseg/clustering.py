"""1-D k-means over a masked plane and IoU-based role assignment."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ClusteringError, DimensionMismatchError


@dataclass(frozen=True)
class KMeansConfig:
    k: int = 3
    max_iterations: int = 100
    tolerance: float = 1e-4
    seed: int = 42
    init: str = "quantile"

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not self.tolerance > 0:
            raise ValueError("tolerance must be > 0")
        if self.init not in ("quantile", "random"):
            raise ValueError(f"init must be 'quantile' or 'random', got {self.init!r}")


@dataclass(frozen=True, eq=False)
class ClusterOutcome:
    centroids: np.ndarray  # ascending
    assignments: np.ndarray  # int32 map, 1..k inside the domain, 0 outside
    inertia: float
    iterations: int
    inertia_history: tuple = field(default=())

    @property
    def k(self):
        return len(self.centroids)

    def cluster_mask(self, index):
        """Mask of cluster ``index`` (1-based)."""
        return self.assignments == index


@dataclass(frozen=True)
class RoleAssignment:
    nucleus: int
    cytoplasm: int
    background: int
    iou_scores: tuple


def _assign(values, centroids):
    # nearest centroid, lowest index on ties; centroids are sorted so the
    # midpoints between neighbours define the cells
    mids = (centroids[:-1] + centroids[1:]) / 2.0
    return np.searchsorted(mids, values, side="left")


def _initial_centroids(uniq, counts, cfg):
    if cfg.init == "quantile":
        # weighted quantiles at (2i+1)/(2k); with k=3 that is 1/6, 3/6, 5/6
        cum = np.cumsum(counts)
        total = cum[-1]
        qs = (2 * np.arange(cfg.k) + 1) / (2.0 * cfg.k)
        pos = np.searchsorted(cum, qs * total, side="left")
        cents = uniq[np.minimum(pos, len(uniq) - 1)].astype(np.float64)
        if len(np.unique(cents)) == cfg.k:
            return np.sort(cents)
        # heavy ties collapsed some quantiles; spread over the distinct values
        idx = np.round(np.linspace(0, len(uniq) - 1, cfg.k)).astype(int)
        return uniq[idx].astype(np.float64)
    rng = np.random.default_rng(cfg.seed)
    return np.sort(rng.choice(uniq, size=cfg.k, replace=False).astype(np.float64))


def _gap_centroids(uniq, w, k):
    # cut the sorted distinct values at their k-1 widest gaps and start from
    # the weighted mean of each run; exact for well-separated groups
    cuts = np.sort(np.argsort(-np.diff(uniq), kind="stable")[: k - 1]) + 1
    bounds = np.concatenate([[0], cuts, [len(uniq)]])
    return np.array(
        [np.sum(w[a:b] * uniq[a:b]) / np.sum(w[a:b]) for a, b in zip(bounds[:-1], bounds[1:])]
    )


def _lloyd(uniq, w, centroids, cfg):
    history = []
    iterations = 0
    for iterations in range(1, cfg.max_iterations + 1):
        lab = _assign(uniq, centroids)
        history.append(float(np.sum(w * (uniq - centroids[lab]) ** 2)))
        sums = np.bincount(lab, weights=w * uniq, minlength=cfg.k)
        sizes = np.bincount(lab, weights=w, minlength=cfg.k)
        new = np.where(sizes > 0, sums / np.where(sizes > 0, sizes, 1.0), centroids)
        new = np.sort(new)
        shift = float(np.max(np.abs(new - centroids)))
        centroids = new
        if shift < cfg.tolerance:
            break
    lab = _assign(uniq, centroids)
    inertia = float(np.sum(w * (uniq - centroids[lab]) ** 2))
    history.append(inertia)
    return centroids, lab, inertia, iterations, tuple(history)


def kmeans_1d(values, domain, cfg: KMeansConfig | None = None) -> ClusterOutcome:
    """Lloyd's k-means on the in-domain samples of a real-valued plane.

    Samples are compressed to (distinct value, count) pairs first, so the
    centroid sums are reductions in a fixed order and the result does not
    depend on pixel order or thread count. With quantile init a second run
    starts from the widest gaps between values; the lower-inertia run wins.
    """
    cfg = cfg or KMeansConfig()
    values = np.asarray(values, dtype=np.float64)
    domain = np.asarray(domain, dtype=bool)
    if values.shape != domain.shape:
        raise DimensionMismatchError(f"plane {values.shape} vs domain {domain.shape}")
    sample = values[domain]
    if sample.size == 0:
        raise ClusteringError("empty clustering domain")
    uniq, inverse, counts = np.unique(sample, return_inverse=True, return_counts=True)
    if len(uniq) < cfg.k:
        raise ClusteringError(f"domain has {len(uniq)} distinct value(s), need at least k={cfg.k}")
    w = counts.astype(np.float64)

    starts = [_initial_centroids(uniq, counts, cfg)]
    if cfg.init == "quantile" and cfg.k > 1:
        starts.append(_gap_centroids(uniq, w, cfg.k))
    best = None
    for start in starts:
        run = _lloyd(uniq, w, start, cfg)
        if best is None or run[2] < best[2]:
            best = run
    centroids, lab, inertia, iterations, history = best
    assignments = np.zeros(values.shape, dtype=np.int32)
    assignments[domain] = (lab[inverse] + 1).astype(np.int32)
    return ClusterOutcome(centroids, assignments, inertia, iterations, history)


def iou(a, b) -> float:
    """Intersection over union; two empty masks score 1.0."""
    a = np.asarray(a, dtype=bool)
    b = np.asarray(b, dtype=bool)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a & b)) / union


def resolve_roles(outcome: ClusterOutcome, rough_nucleus) -> RoleAssignment:
    """Name the three clusters by their IoU with a rough nucleus mask.

    Highest IoU is the nucleus, lowest the background, the rest cytoplasm.
    Ties prefer the darker centroid for nucleus and the lighter one for
    background; centroids are ascending, so index order is brightness order.
    """
    if outcome.k != 3:
        raise ClusteringError(f"role resolution needs k=3 clusters, got {outcome.k}")
    rough = np.asarray(rough_nucleus, dtype=bool)
    scores = [iou(outcome.cluster_mask(i), rough) for i in (1, 2, 3)]
    nucleus = max((1, 2, 3), key=lambda i: (scores[i - 1], -i))
    rest = [i for i in (1, 2, 3) if i != nucleus]
    background = min(rest, key=lambda i: (scores[i - 1], -i))
    cytoplasm = next(i for i in rest if i != background)
    return RoleAssignment(nucleus, cytoplasm, background, tuple(scores))
