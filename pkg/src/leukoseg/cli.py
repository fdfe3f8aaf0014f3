"""Command-line entry point.

Exit codes: 0 all inputs processed, 1 some input failed, 2 usage or
configuration error. ``LEUKOSEG_LOG`` sets the log level (DEBUG, INFO, ...).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import __version__
from .bench import CorpusSpec, evaluate, load_truth, run_corpus, summarize, write_synthetic_corpus
from .errors import DimensionMismatchError, LeukosegError
from .pipeline import EMIT_CHOICES, InstanceSet, PipelineConfig, dump_stages, render_outputs, run_stages, write_json
from .raster import load_image, load_labels

log = logging.getLogger("leukoseg")

EXIT_OK, EXIT_FAILED, EXIT_USAGE = 0, 1, 2


class ConfigError(Exception):
    pass


def _read_json(path, what):
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc}") from exc
    text = raw.decode("utf-8", errors="replace")
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        offset = len(text[: exc.pos].encode("utf-8"))
        raise ConfigError(f"invalid {what} {path}: {exc.msg} at byte offset {offset}") from exc


def _split_list(value):
    return [v.strip() for v in value.split(",") if v.strip()] if value else []


def build_config(args) -> PipelineConfig:
    """Defaults, then the JSON config file, then command-line flags."""
    data = PipelineConfig().to_dict()
    if getattr(args, "config", None):
        file_data = _read_json(args.config, "config")
        if not isinstance(file_data, dict):
            raise ConfigError("config file must hold a JSON object")
        for key, value in file_data.items():
            if key in ("kmeans", "seeds") and isinstance(value, dict):
                data[key].update(value)
            else:
                data[key] = value
    flags = {
        "se_radius": ("se_radius", None),
        "min_cell_area": ("min_cell_area", None),
        "cluster_domain": ("cluster_domain", None),
        "cluster_channel": ("cluster_channel", None),
        "dt_fraction": ("seeds", "dt_fraction"),
        "min_seed_area": ("seeds", "min_seed_area"),
        "kmeans_seed": ("kmeans", "seed"),
        "kmeans_init": ("kmeans", "init"),
    }
    for attr, (key, sub) in flags.items():
        value = getattr(args, attr, None)
        if value is None:
            continue
        if sub:
            data[key][sub] = value
        else:
            data[key] = value
    if getattr(args, "emit", None) is not None:
        data["emit"] = _split_list(args.emit)
    if getattr(args, "timings", False):
        data["record_timings"] = True
    try:
        return PipelineConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc


def _add_pipeline_flags(p):
    p.add_argument("--config", metavar="F", help="JSON pipeline config (flags override it)")
    p.add_argument("--se-radius", type=int, help="closing element radius in pixels (default 3)")
    p.add_argument("--min-cell-area", type=int, help="smallest instance kept, pixels (default 50)")
    p.add_argument("--dt-fraction", type=float, help="seed cut as a fraction of max distance (default 0.5)")
    p.add_argument("--min-seed-area", type=int, help="smallest seed kept, pixels (default 9)")
    p.add_argument("--kmeans-seed", type=int, help="k-means RNG seed (default 42)")
    p.add_argument("--kmeans-init", choices=("quantile", "random"), help="k-means initialisation (default quantile)")
    p.add_argument("--cluster-domain", choices=("masked", "full-frame"), help="pixels fed to k-means (default masked)")
    p.add_argument("--cluster-channel", choices=("l", "a", "b"), help="L*a*b* channel clustered (default a)")


def _jobs(value):
    return value if value and value > 0 else (os.cpu_count() or 1)


# ---------------------------------------------------------------------------
# segment
# ---------------------------------------------------------------------------


def _segment_one(task):
    path, out_dir, cfg_dict, force = task
    cfg = PipelineConfig.from_dict(cfg_dict)
    sid = Path(path).stem
    if not force and "metrics-json" in cfg.emit and (Path(out_dir) / f"{sid}_metrics.json").exists():
        return path, None, True
    try:
        img = load_image(path)
        run = run_stages(img, cfg, sid)
        render_outputs(img, run.instances, run.watershed, cfg.emit, out_dir, cfg, run.timings_ms)
    except (LeukosegError, OSError, ValueError) as exc:
        return path, f"{type(exc).__name__}: {exc}", False
    return path, None, False


def cmd_segment(args):
    if not args.inputs:
        print("segment: no input images given", file=sys.stderr)
        return EXIT_USAGE
    cfg = build_config(args)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    tasks = [(str(p), str(out_dir), cfg.to_dict(), args.force) for p in args.inputs]
    jobs = _jobs(args.jobs)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
            results = list(pool.map(_segment_one, tasks))
    else:
        results = [_segment_one(t) for t in tasks]
    failed = 0
    for path, error, skipped in results:
        if error:
            failed += 1
            print(f"{path}: {error}", file=sys.stderr)
        elif skipped:
            log.info("%s: outputs exist, skipped (use --force)", path)
        else:
            log.info("%s: done", path)
    return EXIT_FAILED if failed else EXIT_OK


# ---------------------------------------------------------------------------
# synth / corpus / eval
# ---------------------------------------------------------------------------


def _corpus_spec(path):
    data = _read_json(path, "spec")
    if not isinstance(data, dict):
        raise ConfigError("spec must hold a JSON object")
    try:
        return CorpusSpec.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid spec {path}: {exc}") from exc


def cmd_synth(args):
    spec = _corpus_spec(args.spec)
    try:
        ids = write_synthetic_corpus(spec, args.out)
    except LeukosegError as exc:
        print(f"synth: {exc}", file=sys.stderr)
        return EXIT_FAILED
    log.info("wrote %d slide(s) to %s", len(ids), args.out)
    return EXIT_OK


def cmd_corpus(args):
    cfg = build_config(args)
    source = _corpus_spec(args.spec) if args.spec else Path(args.dir)
    if not args.spec and not source.is_dir():
        raise ConfigError(f"corpus directory not found: {source}")
    try:
        summary = run_corpus(source, cfg, args.out, force=args.force, jobs=_jobs(args.jobs))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    print(json.dumps({k: v for k, v in summary.items() if k != "images"}, indent=2))
    return EXIT_FAILED if summary["failures"] else EXIT_OK


def cmd_eval(args):
    pred_dir, truth_dir = Path(args.pred), Path(args.truth)
    truth_root = truth_dir / "truth" if (truth_dir / "truth").is_dir() else truth_dir
    sids = sorted(p.name[: -len("_instances.png")] for p in truth_root.glob("*_instances.png"))
    if not sids:
        raise ConfigError(f"no *_instances.png ground truth in {truth_root}")
    entries, status = {}, EXIT_OK
    for sid in sids:
        pred_path = pred_dir / f"{sid}_labels.png"
        try:
            truth = load_truth(truth_root, sid)
            pred = InstanceSet.from_labels(load_labels(pred_path), sid)
            report = evaluate(pred, truth)
        except (DimensionMismatchError, LeukosegError, OSError) as exc:
            print(f"{sid}: {type(exc).__name__}: {exc}", file=sys.stderr)
            entries[sid] = {"source_id": sid, "error": f"{type(exc).__name__}: {exc}"}
            status = EXIT_FAILED
            continue
        entries[sid] = {"source_id": sid, "evaluation": report.to_dict()}
    summary = summarize(entries)
    if args.out:
        write_json({"summary": summary, "images": entries}, args.out)
    print(json.dumps({k: v for k, v in summary.items() if k != "images"}, indent=2))
    return status


# ---------------------------------------------------------------------------
# dump-stages
# ---------------------------------------------------------------------------


def cmd_dump_stages(args):
    cfg = build_config(args)
    try:
        img = load_image(args.image)
        run = run_stages(img, cfg, Path(args.image).stem)
    except (LeukosegError, OSError) as exc:
        print(f"{args.image}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    paths = dump_stages(run, args.out)
    log.info("wrote %d stage image(s) to %s", len(paths), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser():
    parser = argparse.ArgumentParser(prog="leukoseg", description="Unsupervised WBC instance segmentation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="segment slide images")
    p.add_argument("inputs", nargs="*", metavar="INPUTS")
    p.add_argument("--out", default="out", metavar="D", help="output directory (default ./out)")
    p.add_argument("--jobs", type=int, default=0, metavar="N", help="worker processes (default: all cores)")
    p.add_argument(
        "--emit",
        metavar="LIST",
        help=f"comma list from {{{','.join(EMIT_CHOICES)}}} (default labelmap,overlay,crops,metrics-json)",
    )
    p.add_argument("--force", action="store_true", help="recompute even if outputs exist")
    p.add_argument("--timings", action="store_true", help="record stage timings in metrics JSON")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("synth", help="render a synthetic corpus with ground truth")
    p.add_argument("--spec", required=True, metavar="F", help="corpus spec JSON")
    p.add_argument("--out", required=True, metavar="D")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("eval", help="score predicted label maps against ground truth")
    p.add_argument("--pred", required=True, metavar="D", help="directory of {id}_labels.png")
    p.add_argument("--truth", required=True, metavar="D", help="directory of {id}_instances.png")
    p.add_argument("--out", metavar="F", help="write the full report JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("corpus", help="segment and evaluate a whole corpus")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", metavar="F", help="synthetic corpus spec JSON")
    src.add_argument("--dir", metavar="D", help="directory with images/ and truth/")
    p.add_argument("--out", required=True, metavar="D")
    p.add_argument("--jobs", type=int, default=0, metavar="N")
    p.add_argument("--force", action="store_true")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_corpus)

    p = sub.add_parser("dump-stages", help="write every intermediate image of one run")
    p.add_argument("image", metavar="IMG")
    p.add_argument("--out", required=True, metavar="D")
    _add_pipeline_flags(p)
    p.set_defaults(func=cmd_dump_stages)
    return parser


def _setup_logging(verbose):
    level = os.environ.get("LEUKOSEG_LOG", "").upper() or ("DEBUG" if verbose > 1 else "INFO" if verbose else "WARNING")
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.verbose)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
