"""Three-stage pipeline: semantic mask, k-means roles, watershed instances."""

from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clustering import ClusterOutcome, KMeansConfig, RoleAssignment, kmeans_1d, resolve_roles
from .colorspace import cmyk_plane_to_gray, rgb_to_cmyk, rgb_to_gray, rgb_to_lab
from .errors import ChannelCountError, NoSeedsError, StageError
from .imgproc import (
    StructuringElement,
    close,
    distance_transform,
    open_,
    equalize_histogram,
    mask_and,
    otsu_threshold,
    stretch_contrast,
    threshold,
)
from .raster import RasterImage, label_to_image, mask_to_image, save_image, save_labels
from .watershed import SeedConfig, WatershedResult, extract_seeds, watershed

log = logging.getLogger(__name__)

EMIT_CHOICES = ("labelmap", "overlay", "contours", "crops", "masks", "metrics-json")
DEFAULT_EMIT = frozenset({"labelmap", "overlay", "crops", "metrics-json"})


@dataclass(frozen=True)
class PipelineConfig:
    se_radius: int = 3
    se_shape: str = "ellipse"
    stretch_percentiles: tuple = (0.01, 0.99)
    kmeans: KMeansConfig = field(default_factory=KMeansConfig)
    seeds: SeedConfig = field(default_factory=SeedConfig)
    min_cell_area: int = 50
    nucleus_clean_radius: int = 2  # 0 disables
    cluster_domain: str = "masked"
    cluster_channel: str = "a"
    y_polarity: str = "below"
    m_polarity: str = "above"
    emit: frozenset = DEFAULT_EMIT
    record_timings: bool = False

    def __post_init__(self):
        if self.se_radius < 1:
            raise ValueError("se_radius must be >= 1")
        lo, hi = self.stretch_percentiles
        if not 0.0 <= lo < hi <= 1.0:
            raise ValueError("stretch_percentiles must satisfy 0 <= low < high <= 1")
        if self.nucleus_clean_radius < 0:
            raise ValueError("nucleus_clean_radius must be >= 0")
        if self.min_cell_area < 1:
            raise ValueError("min_cell_area must be >= 1")
        if self.cluster_domain not in ("masked", "full-frame"):
            raise ValueError("cluster_domain must be 'masked' or 'full-frame'")
        if self.cluster_channel not in ("l", "a", "b"):
            raise ValueError("cluster_channel must be one of 'l', 'a', 'b'")
        for pol in (self.y_polarity, self.m_polarity):
            if pol not in ("above", "below"):
                raise ValueError("polarity must be 'above' or 'below'")
        bad = set(self.emit) - set(EMIT_CHOICES)
        if bad:
            raise ValueError(f"unknown emit option(s): {', '.join(sorted(bad))}")
        object.__setattr__(self, "emit", frozenset(self.emit))
        object.__setattr__(self, "stretch_percentiles", tuple(self.stretch_percentiles))

    def to_dict(self):
        d = dataclasses.asdict(self)
        d["stretch_percentiles"] = list(self.stretch_percentiles)
        d["emit"] = sorted(self.emit)
        return d

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        if "kmeans" in data and isinstance(data["kmeans"], dict):
            data["kmeans"] = KMeansConfig(**data["kmeans"])
        if "seeds" in data and isinstance(data["seeds"], dict):
            data["seeds"] = SeedConfig(**data["seeds"])
        if "stretch_percentiles" in data:
            data["stretch_percentiles"] = tuple(data["stretch_percentiles"])
        if "emit" in data:
            data["emit"] = frozenset(data["emit"])
        return cls(**data)

    def structuring_element(self):
        return StructuringElement.make(self.se_shape, self.se_radius)


@dataclass(frozen=True, eq=False)
class Instance:
    id: int
    mask: np.ndarray
    bbox: tuple  # (x, y, w, h)
    area: int
    centroid: tuple  # (x, y)
    nucleus_area: int
    cytoplasm_area: int

    def to_dict(self):
        return {
            "id": self.id,
            "bbox": list(self.bbox),
            "area": self.area,
            "nucleus_area": self.nucleus_area,
            "cytoplasm_area": self.cytoplasm_area,
            "centroid": [round(self.centroid[0], 4), round(self.centroid[1], 4)],
        }


@dataclass(frozen=True, eq=False)
class InstanceSet:
    source_id: str
    instances: tuple
    semantic_mask: np.ndarray
    roles: RoleAssignment | None
    labels: np.ndarray  # instance id per pixel, 0 elsewhere

    def __len__(self):
        return len(self.instances)

    def union_mask(self):
        return self.labels > 0

    @classmethod
    def from_labels(cls, labels, source_id="pred", semantic=None, nucleus=None, cytoplasm=None):
        """Build an instance set straight from a label map (e.g. one read from disk)."""
        labels = compact_labels(np.asarray(labels, dtype=np.int32))
        semantic = labels > 0 if semantic is None else np.asarray(semantic, dtype=bool)
        return cls(source_id, _instances(labels, nucleus, cytoplasm), semantic, None, labels)


@dataclass(eq=False)
class PipelineRun:
    """Everything one pipeline pass produced, including intermediates."""

    image: RasterImage
    config: PipelineConfig
    stage1: dict
    clusters: ClusterOutcome
    roles: RoleAssignment
    stage2: dict
    watershed: WatershedResult
    stage3: dict
    instances: InstanceSet
    timings_ms: dict


# ---------------------------------------------------------------------------
# stage 1
# ---------------------------------------------------------------------------


def _stage1(img, cfg):
    if img.channels != 3:
        raise ChannelCountError(f"stage 1 needs a 3-channel RGB image, got {img.channels} channel(s)")
    se = cfg.structuring_element()
    cmyk = rgb_to_cmyk(img)
    y_gray = cmyk_plane_to_gray(cmyk.y)
    m_gray = cmyk_plane_to_gray(cmyk.m)
    y_eq = equalize_histogram(y_gray)
    lo, hi = cfg.stretch_percentiles
    y_st, degenerate = stretch_contrast(y_eq, lo, hi)
    y_thr = threshold(y_st, otsu_threshold(y_st), cfg.y_polarity)
    y_closed = close(y_thr, se)
    m_thr = threshold(m_gray, otsu_threshold(m_gray), cfg.m_polarity)
    m_closed = close(m_thr, se)
    semantic = mask_and(y_closed, m_closed)
    if np.all(img.data == img.data[0, 0]):
        log.warning("constant image: no structure to segment, returning an empty mask")
        semantic = np.zeros(img.shape, dtype=bool)
    elif degenerate:
        log.warning("Y channel stretch was degenerate (flat Y plane)")
    return {
        "cmyk": cmyk,
        "y_gray": y_gray,
        "m_gray": m_gray,
        "y_equalized": y_eq,
        "y_stretched": y_st,
        "y_threshold": y_thr,
        "y_closed": y_closed,
        "m_threshold": m_thr,
        "m_closed": m_closed,
        "semantic": semantic,
    }


def stage1_semantic(img: RasterImage, cfg: PipelineConfig | None = None) -> np.ndarray:
    """Mask of all cell pixels (nucleus and cytoplasm)."""
    return _stage1(img, cfg or PipelineConfig())["semantic"]


# ---------------------------------------------------------------------------
# stage 2
# ---------------------------------------------------------------------------


def _stage2(img, semantic, cfg):
    semantic = np.asarray(semantic, dtype=bool)
    if not semantic.any():
        raise ValueError("semantic mask is empty")
    domain = semantic if cfg.cluster_domain == "masked" else np.ones_like(semantic)
    lab = rgb_to_lab(img)
    plane = getattr(lab, cfg.cluster_channel)
    lo, hi = cfg.stretch_percentiles
    stretched, _ = stretch_contrast(plane, lo, hi, mask=domain)
    outcome = kmeans_1d(stretched.data.astype(np.float64), domain, cfg.kmeans)
    gray = rgb_to_gray(img)
    rough = threshold(gray, otsu_threshold(gray, mask=domain), "below") & domain
    roles = resolve_roles(outcome, rough)
    return outcome, roles, {"a_stretched": stretched, "gray": gray, "rough_nucleus": rough}


def stage2_cluster(img: RasterImage, semantic, cfg: PipelineConfig | None = None):
    """Cluster the stretched a* channel and name the clusters.

    Returns ``(ClusterOutcome, RoleAssignment)``.
    """
    outcome, roles, _ = _stage2(img, semantic, cfg or PipelineConfig())
    return outcome, roles


# ---------------------------------------------------------------------------
# stage 3
# ---------------------------------------------------------------------------


def compact_labels(labels):
    """Renumber labels to 1..L keeping their relative order."""
    ids = np.unique(labels)
    ids = ids[ids != 0]
    lut = np.zeros(int(labels.max(initial=0)) + 1, dtype=np.int32)
    lut[ids] = np.arange(1, len(ids) + 1, dtype=np.int32)
    return lut[labels]


def _touching_labels(labels, region, boundary):
    """Labels adjacent to ``region`` directly or across one watershed-line pixel."""
    grown = _grow(region)
    via = grown & boundary
    reach = grown | _grow(via)
    found = np.unique(labels[reach & ~region])
    return [int(v) for v in found if v != 0]


def _grow(mask):
    h, w = mask.shape
    p = np.pad(mask, 1)
    out = np.zeros_like(mask)
    for dy in (-1, 0, 1):
        for dx in (-1, 0, 1):
            out |= p[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]
    return out


def merge_small_regions(labels, boundary, min_area):
    """Fold regions smaller than ``min_area`` into their largest neighbour.

    Neighbours are regions touching directly or across a watershed line.
    Regions with no neighbour are dropped. Line pixels left with only one
    surrounding label after a merge are absorbed into it.
    """
    labels = labels.copy()
    boundary = boundary.copy()
    while True:
        areas = np.bincount(labels.ravel())
        small = [i for i in range(1, len(areas)) if 0 < areas[i] < min_area]
        if not small:
            break
        victim = min(small, key=lambda i: (areas[i], i))
        region = labels == victim
        neighbors = _touching_labels(labels, region, boundary)
        if not neighbors:
            labels[region] = 0
            continue
        target = max(neighbors, key=lambda i: (areas[i], -i))
        labels[region] = target
        # line pixels that no longer separate two labels join the target
        pad = np.pad(labels, 1)
        ys, xs = np.nonzero(boundary & _grow(region))
        for y, x in zip(ys, xs):
            around = pad[y : y + 3, x : x + 3]
            vals = set(np.unique(around[around > 0]).tolist())
            if vals == {target}:
                labels[y, x] = target
                boundary[y, x] = False
    return compact_labels(labels), boundary


def _instances(labels, nucleus=None, cytoplasm=None):
    n = int(labels.max(initial=0))
    if n == 0:
        return ()
    flat = labels.ravel()
    h, w = labels.shape
    ys, xs = np.indices((h, w))
    areas = np.bincount(flat, minlength=n + 1)
    sx = np.bincount(flat, weights=xs.ravel(), minlength=n + 1)
    sy = np.bincount(flat, weights=ys.ravel(), minlength=n + 1)
    nuc = np.bincount(flat[nucleus.ravel()], minlength=n + 1) if nucleus is not None else np.zeros(n + 1, int)
    cyt = np.bincount(flat[cytoplasm.ravel()], minlength=n + 1) if cytoplasm is not None else np.zeros(n + 1, int)
    out = []
    for i in range(1, n + 1):
        mask = labels == i
        rows = np.nonzero(mask.any(axis=1))[0]
        cols = np.nonzero(mask.any(axis=0))[0]
        y0, y1, x0, x1 = int(rows[0]), int(rows[-1]), int(cols[0]), int(cols[-1])
        out.append(
            Instance(
                id=i,
                mask=mask,
                bbox=(x0, y0, x1 - x0 + 1, y1 - y0 + 1),
                area=int(areas[i]),
                centroid=(float(sx[i] / areas[i]), float(sy[i] / areas[i])),
                nucleus_area=int(nuc[i]),
                cytoplasm_area=int(cyt[i]),
            )
        )
    return tuple(out)


def _stage3(semantic, outcome, roles, cfg):
    semantic = np.asarray(semantic, dtype=bool)
    nucleus = (outcome.assignments == roles.nucleus) & semantic
    cytoplasm = (outcome.assignments == roles.cytoplasm) & semantic
    if not nucleus.any():
        raise NoSeedsError("nucleus cluster is empty")
    # pixel noise leaves pinholes in the nucleus cluster (which would split
    # its distance-transform core) and stray specks in the cytoplasm (which
    # would become extra seeds)
    seed_mask = nucleus
    if cfg.nucleus_clean_radius:
        se = StructuringElement.make("ellipse", cfg.nucleus_clean_radius)
        seed_mask = open_(close(nucleus, se), se) & semantic
    seeds = extract_seeds(seed_mask, cfg.seeds)
    if not seeds.any():
        raise NoSeedsError("no seed survived distance-transform extraction")
    dist = distance_transform(semantic)
    wr = watershed(-dist, seeds, semantic)
    labels, boundary = merge_small_regions(wr.labels, wr.boundary, cfg.min_cell_area)
    merged = WatershedResult(labels, boundary, wr.trace)
    details = {"nucleus": nucleus, "seed_mask": seed_mask, "cytoplasm": cytoplasm, "distance": dist, "seeds": seeds, "raw": wr}
    return merged, labels, _instances(labels, nucleus, cytoplasm), details


def stage3_instances(semantic, outcome: ClusterOutcome, roles: RoleAssignment, cfg=None, source_id="image"):
    """Split the semantic mask into cells; returns ``(WatershedResult, InstanceSet)``."""
    cfg = cfg or PipelineConfig()
    wr, labels, instances, _ = _stage3(semantic, outcome, roles, cfg)
    return wr, InstanceSet(source_id, instances, np.asarray(semantic, dtype=bool), roles, labels)


# ---------------------------------------------------------------------------
# whole pipeline
# ---------------------------------------------------------------------------


def run_stages(img: RasterImage, cfg: PipelineConfig | None = None, source_id="image") -> PipelineRun:
    cfg = cfg or PipelineConfig()
    t0 = time.perf_counter()
    try:
        s1 = _stage1(img, cfg)
    except Exception as exc:
        raise StageError("stage1", exc) from exc
    t1 = time.perf_counter()
    try:
        outcome, roles, s2 = _stage2(img, s1["semantic"], cfg)
    except Exception as exc:
        raise StageError("stage2", exc) from exc
    t2 = time.perf_counter()
    try:
        wr, labels, instances, s3 = _stage3(s1["semantic"], outcome, roles, cfg)
    except Exception as exc:
        raise StageError("stage3", exc) from exc
    t3 = time.perf_counter()
    timings = {
        "stage1": round((t1 - t0) * 1e3, 3),
        "stage2": round((t2 - t1) * 1e3, 3),
        "stage3": round((t3 - t2) * 1e3, 3),
        "total": round((t3 - t0) * 1e3, 3),
    }
    iset = InstanceSet(source_id, instances, s1["semantic"], roles, labels)
    return PipelineRun(img, cfg, s1, outcome, roles, s2, wr, s3, iset, timings)


def run_pipeline(img: RasterImage, cfg: PipelineConfig | None = None, source_id="image") -> InstanceSet:
    return run_stages(img, cfg, source_id).instances


# ---------------------------------------------------------------------------
# outputs
# ---------------------------------------------------------------------------


def _contour(mask):
    """Inner 4-connected contour of a mask."""
    p = np.pad(mask, 1)
    interior = p[:-2, 1:-1] & p[2:, 1:-1] & p[1:-1, :-2] & p[1:-1, 2:]
    return mask & ~interior


def overlay_contours(img: RasterImage, result: InstanceSet, palette_seed=0) -> RasterImage:
    """Draw each instance's outline on the image in its palette colour."""
    base = img.data if img.channels == 3 else np.repeat(img.data[:, :, None], 3, axis=2)
    out = base.copy()
    colors = label_to_image(result.labels, palette_seed).data
    for inst in result.instances:
        edge = _contour(inst.mask)
        out[edge] = colors[edge]
    return RasterImage(out)


def metrics_dict(result: InstanceSet, cfg: PipelineConfig, timings_ms=None):
    return {
        "source_id": result.source_id,
        "n_instances": len(result.instances),
        "instances": [inst.to_dict() for inst in result.instances],
        "config": cfg.to_dict(),
        "timings_ms": timings_ms if (cfg.record_timings and timings_ms) else {},
    }


def write_json(data, path):
    """Atomic JSON write (temp file + rename)."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.tmp")
    tmp.write_text(json.dumps(data, indent=2) + "\n")
    tmp.replace(path)


def render_outputs(img, result: InstanceSet, wr: WatershedResult, emit, out_dir, cfg=None, timings_ms=None):
    """Write the requested artifacts into ``out_dir``; returns the paths written.

    File names: ``{id}_labels.png`` (16-bit), ``{id}_overlay.png``,
    ``{id}_contours.png``, ``crops/{id}_{n}.png``, ``masks/{id}_{n}.png``
    and ``{id}_metrics.json``.
    """
    cfg = cfg or PipelineConfig()
    out_dir = Path(out_dir)
    sid = result.source_id
    written = []
    emit = set(emit)
    bad = emit - set(EMIT_CHOICES)
    if bad:
        raise ValueError(f"unknown emit option(s): {', '.join(sorted(bad))}")
    if emit:
        out_dir.mkdir(parents=True, exist_ok=True)
    if "labelmap" in emit:
        p = out_dir / f"{sid}_labels.png"
        save_labels(result.labels, p)
        written.append(p)
    if "overlay" in emit:
        p = out_dir / f"{sid}_overlay.png"
        save_image(overlay_contours(img, result), p)
        written.append(p)
    if "contours" in emit:
        edges = np.zeros(result.labels.shape, dtype=bool)
        for inst in result.instances:
            edges |= _contour(inst.mask)
        if wr is not None:
            edges |= wr.boundary
        p = out_dir / f"{sid}_contours.png"
        save_image(mask_to_image(edges), p)
        written.append(p)
    if "crops" in emit:
        (out_dir / "crops").mkdir(exist_ok=True)
        for inst in result.instances:
            x, y, w, h = inst.bbox
            p = out_dir / "crops" / f"{sid}_{inst.id}.png"
            save_image(RasterImage(img.data[y : y + h, x : x + w]), p)
            written.append(p)
    if "masks" in emit:
        (out_dir / "masks").mkdir(exist_ok=True)
        for inst in result.instances:
            p = out_dir / "masks" / f"{sid}_{inst.id}.png"
            save_image(mask_to_image(inst.mask), p)
            written.append(p)
    if "metrics-json" in emit:
        p = out_dir / f"{sid}_metrics.json"
        write_json(metrics_dict(result, cfg, timings_ms), p)
        written.append(p)
    return written


# ---------------------------------------------------------------------------
# intermediate dumps
# ---------------------------------------------------------------------------

STAGE_FILES = (
    "00_cmyk_c.png",
    "01_cmyk_m.png",
    "02_cmyk_y.png",
    "03_cmyk_k.png",
    "04_y_equalized.png",
    "05_y_stretched.png",
    "06_y_threshold.png",
    "07_y_closed.png",
    "08_m_threshold.png",
    "09_m_closed.png",
    "10_semantic_and.png",
    "11_a_stretched.png",
    "12_cluster_map.png",
    "13_cluster_1.png",
    "14_cluster_2.png",
    "15_cluster_3.png",
    "16_rough_nucleus.png",
    "17_nucleus_cluster.png",
    "18_seed_mask.png",
    "19_distance.png",
    "20_seeds.png",
    "21_watershed_labels.png",
    "22_watershed_lines.png",
    "23_overlay.png",
)


def stage_images(run: PipelineRun):
    """Every intermediate of ``run`` as an 8-bit raster, keyed by file name."""
    s1, s2, s3 = run.stage1, run.stage2, run.stage3
    cmyk = s1["cmyk"]
    k = run.clusters.k
    cluster_gray = np.zeros(run.clusters.assignments.shape, dtype=np.uint8)
    if k > 1:
        cluster_gray = np.round(run.clusters.assignments * (255.0 / k)).astype(np.uint8)
    dist = s3["distance"]
    peak = float(dist.max(initial=0.0))
    dist8 = np.round(dist / peak * 255.0).astype(np.uint8) if peak > 0 else np.zeros(dist.shape, np.uint8)
    images = [
        cmyk_plane_to_gray(cmyk.c),
        cmyk_plane_to_gray(cmyk.m),
        cmyk_plane_to_gray(cmyk.y),
        cmyk_plane_to_gray(cmyk.k),
        s1["y_equalized"],
        s1["y_stretched"],
        mask_to_image(s1["y_threshold"]),
        mask_to_image(s1["y_closed"]),
        mask_to_image(s1["m_threshold"]),
        mask_to_image(s1["m_closed"]),
        mask_to_image(s1["semantic"]),
        s2["a_stretched"],
        RasterImage(cluster_gray),
        mask_to_image(run.clusters.cluster_mask(1)),
        mask_to_image(run.clusters.cluster_mask(2)),
        mask_to_image(run.clusters.cluster_mask(3)) if k >= 3 else mask_to_image(np.zeros_like(s1["semantic"])),
        mask_to_image(s2["rough_nucleus"]),
        mask_to_image(s3["nucleus"]),
        mask_to_image(s3["seed_mask"]),
        RasterImage(dist8),
        label_to_image(s3["seeds"]),
        label_to_image(run.watershed.labels),
        mask_to_image(run.watershed.boundary),
        overlay_contours(run.image, run.instances),
    ]
    return dict(zip(STAGE_FILES, images))


def dump_stages(run: PipelineRun, out_dir):
    """Write every intermediate image into ``out_dir``; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, img in stage_images(run).items():
        p = out_dir / name
        save_image(img, p)
        paths.append(p)
    return paths
