"""IoU evaluation and corpus runs."""

from __future__ import annotations

import json
import logging
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .clustering import iou
from .errors import DimensionMismatchError
from .pipeline import InstanceSet, PipelineConfig, metrics_dict, run_stages, write_json
from .raster import load_image, load_labels, mask_to_image, save_image, save_labels
from .synth import GroundTruth, SynthConfig, generate_slide

log = logging.getLogger(__name__)

MATCH_MIN_IOU = 0.1


@dataclass
class EvalReport:
    semantic_iou: float
    mean_instance_iou: float
    n_predicted: int
    n_truth: int
    pairs: list = field(default_factory=list)  # (truth_id, pred_id, iou)
    unmatched_predicted: int = 0
    unmatched_truth: int = 0

    @property
    def count_error(self):
        """Relative instance-count error |pred - truth| / truth."""
        if self.n_truth == 0:
            return 0.0 if self.n_predicted == 0 else float(self.n_predicted)
        return abs(self.n_predicted - self.n_truth) / self.n_truth

    def to_dict(self):
        return {
            "semantic_iou": self.semantic_iou,
            "mean_instance_iou": self.mean_instance_iou,
            "n_predicted": self.n_predicted,
            "n_truth": self.n_truth,
            "count_error": self.count_error,
            "unmatched_predicted": self.unmatched_predicted,
            "unmatched_truth": self.unmatched_truth,
            "pairs": [[t, p, v] for t, p, v in self.pairs],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["semantic_iou"],
            d["mean_instance_iou"],
            d["n_predicted"],
            d["n_truth"],
            [tuple(p) for p in d.get("pairs", [])],
            d.get("unmatched_predicted", 0),
            d.get("unmatched_truth", 0),
        )


def _pair_ious(pred, truth):
    """IoU of every overlapping (truth, pred) label pair, via a contingency table."""
    n_p = int(pred.max(initial=0))
    n_t = int(truth.max(initial=0))
    both = (pred > 0) & (truth > 0)
    inter = np.bincount(truth[both].astype(np.int64) * (n_p + 1) + pred[both], minlength=(n_t + 1) * (n_p + 1))
    inter = inter.reshape(n_t + 1, n_p + 1)
    area_p = np.bincount(pred.ravel(), minlength=n_p + 1)
    area_t = np.bincount(truth.ravel(), minlength=n_t + 1)
    out = []
    for t, p in zip(*np.nonzero(inter)):
        if t == 0 or p == 0:
            continue
        i = int(inter[t, p])
        out.append((int(t), int(p), i / (int(area_t[t]) + int(area_p[p]) - i)))
    return out


def evaluate(pred: InstanceSet, truth: GroundTruth) -> EvalReport:
    """Semantic IoU plus greedy one-to-one instance matching.

    Pairs are taken in descending IoU order (ties by truth id, then predicted
    id); each instance is used at most once and pairs under 0.1 IoU never
    match.
    """
    pred_labels = np.asarray(pred.labels)
    truth_labels = np.asarray(truth.instances)
    if pred_labels.shape != truth_labels.shape:
        raise DimensionMismatchError(f"prediction {pred_labels.shape} vs truth {truth_labels.shape}")
    semantic = iou(pred_labels > 0, truth.semantic)
    candidates = sorted(_pair_ious(pred_labels, truth_labels), key=lambda x: (-x[2], x[0], x[1]))
    used_t, used_p, pairs = set(), set(), []
    for t, p, v in candidates:
        if v < MATCH_MIN_IOU:
            break
        if t in used_t or p in used_p:
            continue
        used_t.add(t)
        used_p.add(p)
        pairs.append((t, p, v))
    pred_ids = set(np.unique(pred_labels[pred_labels > 0]).tolist())
    truth_ids = set(np.unique(truth_labels[truth_labels > 0]).tolist())
    mean_iou = float(np.mean([v for _, _, v in pairs])) if pairs else 0.0
    return EvalReport(
        semantic_iou=semantic,
        mean_instance_iou=mean_iou,
        n_predicted=len(pred_ids),
        n_truth=len(truth_ids),
        pairs=sorted(pairs),
        unmatched_predicted=len(pred_ids - used_p),
        unmatched_truth=len(truth_ids - used_t),
    )


# ---------------------------------------------------------------------------
# corpora
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CorpusSpec:
    """A synthetic corpus of ``n_slides`` slides derived from one master ``seed``.

    The cell count of each slide is drawn uniformly from ``n_cells_range``;
    every other field of ``slide`` is passed to :class:`SynthConfig`.
    """

    n_slides: int = 50
    seed: int = 42
    n_cells_range: tuple = (5, 12)
    slide: dict = field(default_factory=lambda: {"overlap_pairs": 1})

    @classmethod
    def from_dict(cls, d):
        known = {"n_slides", "seed", "n_cells_range", "slide"}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown corpus spec field(s): {', '.join(sorted(unknown))}")
        spec = cls(
            n_slides=int(d.get("n_slides", 50)),
            seed=int(d.get("seed", 42)),
            n_cells_range=tuple(d.get("n_cells_range", (5, 12))),
            slide=dict(d.get("slide", {"overlap_pairs": 1})),
        )
        if spec.n_slides < 0:
            raise ValueError("n_slides must be >= 0")
        lo, hi = spec.n_cells_range
        if not 0 <= lo <= hi:
            raise ValueError("n_cells_range must satisfy 0 <= lo <= hi")
        # validate the slide template once, up front
        SynthConfig.from_dict({**spec.slide, "n_cells": max(hi, 2 * spec.slide.get("overlap_pairs", 0))})
        return spec

    def to_dict(self):
        return {
            "n_slides": self.n_slides,
            "seed": self.seed,
            "n_cells_range": list(self.n_cells_range),
            "slide": dict(self.slide),
        }

    def slide_ids(self):
        return [f"slide_{i:04d}" for i in range(self.n_slides)]

    def slide_config(self, i):
        rng = np.random.default_rng([self.seed, i])
        lo, hi = self.n_cells_range
        n = int(rng.integers(lo, hi + 1))
        return SynthConfig.from_dict({**self.slide, "n_cells": n, "seed": self.seed * 100003 + i})


def write_synthetic_corpus(spec: CorpusSpec, out_dir):
    """Render a corpus to ``out_dir/images`` and ``out_dir/truth``."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "truth").mkdir(parents=True, exist_ok=True)
    written = []
    for i, sid in enumerate(spec.slide_ids()):
        img, truth = generate_slide(spec.slide_config(i))
        save_image(img, out_dir / "images" / f"{sid}.png")
        save_truth(truth, out_dir / "truth", sid)
        written.append(sid)
    write_json(spec.to_dict(), out_dir / "corpus.json")
    return written


def save_truth(truth: GroundTruth, directory, sid):
    directory = Path(directory)
    save_labels(truth.instances, directory / f"{sid}_instances.png")
    save_image(mask_to_image(truth.nucleus), directory / f"{sid}_nucleus.png")
    save_image(mask_to_image(truth.cytoplasm), directory / f"{sid}_cytoplasm.png")
    save_image(mask_to_image(truth.semantic), directory / f"{sid}_semantic.png")


def load_truth(directory, sid) -> GroundTruth:
    """Read ground truth written by :func:`save_truth`.

    Only the instance map is required; nucleus/cytoplasm masks are optional.
    """
    directory = Path(directory)
    instances = load_labels(directory / f"{sid}_instances.png")
    semantic = instances > 0
    nuc_path = directory / f"{sid}_nucleus.png"
    nucleus = load_image(nuc_path).data > 127 if nuc_path.exists() else np.zeros_like(semantic)
    return GroundTruth(instances, nucleus, semantic & ~nucleus, semantic)


def _dir_items(corpus_dir):
    corpus_dir = Path(corpus_dir)
    image_dir = corpus_dir / "images" if (corpus_dir / "images").is_dir() else corpus_dir
    truth_dir = corpus_dir / "truth" if (corpus_dir / "truth").is_dir() else corpus_dir
    items = []
    for p in sorted(image_dir.iterdir()):
        if p.suffix.lower() not in (".png", ".ppm", ".pgm") or p.name.startswith("."):
            continue
        if any(p.stem.endswith(s) for s in ("_instances", "_nucleus", "_cytoplasm", "_semantic")):
            continue
        items.append((p.stem, ("file", str(p), str(truth_dir))))
    return items


def _process(task):
    sid, source, cfg_dict, out_dir = task
    cfg = PipelineConfig.from_dict(cfg_dict)
    t0 = time.perf_counter()
    try:
        if source[0] == "synth":
            img, truth = generate_slide(SynthConfig.from_dict(source[1]))
        else:
            img = load_image(source[1])
            truth = load_truth(source[2], sid)
        run = run_stages(img, cfg, sid)
        report = evaluate(run.instances, truth)
    except Exception as exc:  # a bad slide must not abort the corpus
        log.warning("%s failed: %s", sid, exc)
        return sid, {"source_id": sid, "error": f"{type(exc).__name__}: {exc}"}
    entry = metrics_dict(run.instances, cfg, run.timings_ms)
    entry["evaluation"] = report.to_dict()
    entry["elapsed_ms"] = round((time.perf_counter() - t0) * 1e3, 3)
    write_json(entry, Path(out_dir) / f"{sid}.json")
    return sid, entry


def _stats(values):
    if not values:
        return {"mean": 0.0, "median": 0.0, "min": 0.0}
    return {"mean": statistics.fmean(values), "median": statistics.median(values), "min": min(values)}


def summarize(entries):
    """Aggregate per-image entries (sorted by source id) into the summary document."""
    ok = [e for _, e in sorted(entries.items()) if "evaluation" in e]
    failures = [{"source_id": sid, "error": e["error"]} for sid, e in sorted(entries.items()) if "error" in e]
    sem = [e["evaluation"]["semantic_iou"] for e in ok]
    ins = [e["evaluation"]["mean_instance_iou"] for e in ok]
    cnt = [e["evaluation"]["count_error"] for e in ok]
    s_sem, s_ins, s_cnt = _stats(sem), _stats(ins), _stats(cnt)
    return {
        "n_images": len(ok),
        "mean_semantic_iou": s_sem["mean"],
        "median_semantic_iou": s_sem["median"],
        "min_semantic_iou": s_sem["min"],
        "mean_instance_iou": s_ins["mean"],
        "median_instance_iou": s_ins["median"],
        "min_instance_iou": s_ins["min"],
        "mean_count_error": s_cnt["mean"],
        "failures": failures,
        "images": [e["source_id"] for e in ok],
    }


def run_corpus(source, cfg: PipelineConfig | None = None, out_dir=None, force=False, jobs=1):
    """Run the pipeline over a corpus and evaluate every slide.

    ``source`` is a :class:`CorpusSpec` (slides are generated in memory) or a
    directory holding ``images/`` and ``truth/``. Per-image JSON lands in
    ``out_dir/{id}.json``, the aggregate in ``out_dir/summary.json``.
    Existing per-image files are reused unless ``force`` is set.
    """
    cfg = cfg or PipelineConfig()
    if isinstance(source, CorpusSpec):
        items = [(sid, ("synth", source.slide_config(i).to_dict())) for i, sid in enumerate(source.slide_ids())]
    else:
        items = _dir_items(source)
    if not items:
        raise ValueError("corpus is empty")
    if out_dir is None:
        raise ValueError("out_dir is required")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    entries, tasks = {}, []
    for sid, src in items:
        cached = out_dir / f"{sid}.json"
        if cached.exists() and not force:
            try:
                entries[sid] = json.loads(cached.read_text())
                continue
            except json.JSONDecodeError:
                log.warning("ignoring unreadable cached result %s", cached)
        tasks.append((sid, src, cfg.to_dict(), str(out_dir)))

    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_process, tasks))
    else:
        results = [_process(t) for t in tasks]
    for sid, entry in results:
        entries[sid] = entry
    summary = summarize(entries)
    write_json(summary, out_dir / "summary.json")
    return summary
