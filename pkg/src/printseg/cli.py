"""Command-line entry point: ``printseg <subcommand> ...``.

Settings resolve as command-line flag, then ``--config`` file, then the
built-in default. ``PRINTSEG_LOG`` sets the log level (``DEBUG``, ``INFO``,
``WARNING``...); ``-v`` flags raise it further.
"""

from __future__ import annotations

import argparse
import io
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__

log = logging.getLogger("printseg")

KIND_CHOICES = ("wholepart", "toplayer", "internal")


def _resolution(text: str) -> tuple[int, int]:
    from .raster import parse_resolution

    try:
        return parse_resolution(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _fractions(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated fractions, got {text!r}") from None


def _edges(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated seconds, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="printseg", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"printseg {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    sp = sub.add_parser("parse", help="G-code -> toolpath interchange file")
    sp.add_argument("gcode", type=Path)
    sp.add_argument("-o", "--out", type=Path, help="output file (default: stdout)")
    sp.add_argument("--classified", action="store_true", help="add the semantic class column")
    sp.add_argument("--config", type=Path, help="dataset config JSON (its 'slicing' block is used)")

    sp = sub.add_parser("render", help="render one image/mask pair from one G-code file")
    sp.add_argument("gcode", type=Path)
    sp.add_argument("-o", "--out", type=Path, required=True, help="output stem; writes <stem>_<frame>.png and _mask.png")
    sp.add_argument("--kind", choices=KIND_CHOICES, help="dataset kind (default: wholepart)")
    sp.add_argument("--seed", type=int, help="scene seed (default: 0)")
    sp.add_argument("--resolution", type=_resolution, help="WxH (default: 256x256)")
    sp.add_argument("--completion", type=float, help="fraction of layers printed (default: 1.0)")
    sp.add_argument("--frame", type=int, default=0, help="frame number used in the file name")
    sp.add_argument("--flat-ids", action="store_true", help="unshaded per-class colours instead of shading")
    sp.add_argument("--shadows", action="store_true", help="hard shadows")
    sp.add_argument("--config", type=Path, help="dataset config JSON")
    sp.add_argument("--preset", help="named preset config, e.g. reference_wholepart")

    sp = sub.add_parser("dataset", help="generate a dataset from a directory of G-code files")
    sp.add_argument("gcode_dir", type=Path)
    sp.add_argument("-o", "--out", type=Path, required=True, help="output root; writes <out>/<kind>/...")
    sp.add_argument("--kind", choices=KIND_CHOICES, help="dataset kind (default: wholepart)")
    sp.add_argument("--seed", type=int, help="master seed (default: 0)")
    sp.add_argument("--frames", type=int, help="frames per model and completion level (default: 5)")
    sp.add_argument("--completion", type=_fractions, help="comma-separated completion fractions (default: 0.33,1.0)")
    sp.add_argument("--resolution", type=_resolution, help="WxH (default: 256x256)")
    sp.add_argument("--jobs", type=int, help="worker processes (default: logical cores)")
    sp.add_argument("--config", type=Path, help="dataset config JSON")
    sp.add_argument("--preset", help="named preset config, e.g. reference_wholepart")

    sp = sub.add_parser("eval", help="IoU / mIoU of predicted masks against ground truth")
    sp.add_argument("--pred", type=Path, required=True, help="directory of predicted masks")
    sp.add_argument("--gt", type=Path, required=True, help="directory of ground-truth masks")
    sp.add_argument("--kind", choices=KIND_CHOICES, required=True)
    sp.add_argument("-o", "--out", type=Path, help="write the JSON report here instead of stdout")

    sp = sub.add_parser("jobstats", help="failure rate, runtime histogram and filename words from a job CSV")
    sp.add_argument("csv", type=Path, help="CSV with columns filename,duration_s,canceled")
    sp.add_argument("--min-duration", type=float, default=300.0, help="seconds; shorter jobs are excluded (default: 300)")
    sp.add_argument("--edges", type=_edges, help="comma-separated histogram bin edges in seconds")
    sp.add_argument("--top-k", type=int, default=25, help="number of filename words (default: 25)")
    sp.add_argument("-o", "--out", type=Path, help="write the JSON report here instead of stdout")

    sp = sub.add_parser("validate", help="re-check a dataset manifest against the files on disk")
    sp.add_argument("manifest", type=Path)
    return p


def _setup_logging(verbose: int) -> None:
    level = os.environ.get("PRINTSEG_LOG", "WARNING").upper()
    level = getattr(logging, level, logging.WARNING) if not level.isdigit() else int(level)
    level = max(logging.DEBUG, level - 10 * verbose)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def _require(*paths: Path, dirs: bool = False) -> None:
    for p in paths:
        if p is None:
            continue
        if not (p.is_dir() if dirs else p.is_file()):
            raise FileNotFoundError(f"{'directory' if dirs else 'file'} not found: {p}")


def _dataset_config(args, **extra):
    from .dataset import DatasetConfig, config_from_mapping, preset_path

    data = {}
    if getattr(args, "preset", None):
        data = json.loads(preset_path(args.preset).read_text(encoding="utf-8"))
    if args.config is not None:
        data.update(json.loads(args.config.read_text(encoding="utf-8")))
    overrides = {
        "kind": getattr(args, "kind", None),
        "master_seed": getattr(args, "seed", None),
        "resolution": getattr(args, "resolution", None),
        **extra,
    }
    if data:
        return config_from_mapping(data, **overrides)
    return DatasetConfig(**{k: v for k, v in overrides.items() if v is not None})


def _emit(text: str, out: Path | None) -> None:
    from .fileio import atomic_write_text

    if out is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(out, text)


def cmd_parse(args) -> int:
    from .gcode import SlicingConfig, load_toolpath, write_toolpath
    from .semantics import classify_segments

    _require(args.gcode, args.config)
    slicing = _dataset_config(args).slicing if args.config else SlicingConfig()
    tp = load_toolpath(args.gcode, slicing)
    buf = io.StringIO()
    classes = classify_segments(tp).structural if args.classified else None
    write_toolpath(tp, buf, classes)
    _emit(buf.getvalue(), args.out)
    log.info("%d segments in %d layers", len(tp.segments), tp.layer_count)
    return 0


def cmd_render(args) -> int:
    from dataclasses import replace

    from .dataset import completion_layer, stage_toolpath, _load_classified
    from .fileio import atomic_write_bytes, png_bytes
    from .raster import render_frame
    from .scene import sample_scene

    _require(args.gcode, args.config)
    config = _dataset_config(args)
    ct = _load_classified(str(args.gcode), config.slicing)
    if not ct.segments:
        raise ValueError(f"{args.gcode} contains no extrusion moves")
    fraction = 1.0 if args.completion is None else args.completion
    if not 0.0 < fraction <= 1.0:
        raise ValueError("--completion must lie in (0, 1]")
    staged = stage_toolpath(ct, fraction)
    ranges = replace(config.scene, resolution=config.resolution)
    scene = sample_scene(config.master_seed, ranges, ct.toolpath.bounds())
    bed_z = min(s.start[2] - s.height for s in ct.segments)
    pair = render_frame(scene, staged, config.kind, flat_ids=args.flat_ids,
                        shadows=args.shadows or config.shadows, bed_z=bed_z, frame_index=args.frame)
    stem = f"{args.out}_{args.frame:05d}"
    atomic_write_bytes(f"{stem}.png", png_bytes(pair.image))
    atomic_write_bytes(f"{stem}_mask.png", png_bytes(pair.mask))
    print(f"{stem}.png  {stem}_mask.png  (layer {completion_layer(fraction, ct.toolpath.layer_count)}"
          f" of {ct.toolpath.layer_count})")
    return 0


def cmd_dataset(args) -> int:
    from .dataset import generate_dataset

    _require(args.gcode_dir, dirs=True)
    _require(args.config)
    config = _dataset_config(args, frames_per_model=args.frames, completion_levels=args.completion)
    jobs = args.jobs if args.jobs is not None else (os.cpu_count() or 1)
    if jobs < 1:
        raise ValueError("--jobs must be at least 1")
    result = generate_dataset(args.gcode_dir, args.out, config, jobs=jobs)
    print(f"{len(result.entries)} pairs, {len(result.errors)} skipped files -> {result.manifest_path}")
    return 0


def cmd_eval(args) -> int:
    from .metrics import evaluate_dataset

    _require(args.pred, args.gt, dirs=True)
    report = evaluate_dataset(args.pred, args.gt, args.kind)
    print(report.table())
    if report.unmatched:
        print(f"unmatched: {', '.join(report.unmatched)}", file=sys.stderr)
    text = json.dumps(report.to_dict(), sort_keys=True) + "\n"
    if args.out is None:
        print()
    _emit(text, args.out)
    return 0


def cmd_jobstats(args) -> int:
    from .jobstats import DEFAULT_EDGES, analyze

    _require(args.csv)
    with open(args.csv, encoding="utf-8", newline="") as f:
        report = analyze(f, args.min_duration, args.edges or DEFAULT_EDGES, args.top_k)
    for e in report.row_errors:
        log.warning("row %d skipped: %s", e.row, e.message)
    _emit(json.dumps(report.to_dict(), indent=2) + "\n", args.out)
    return 0


def cmd_validate(args) -> int:
    from .dataset import validate_manifest

    _require(args.manifest)
    report = validate_manifest(args.manifest)
    print(report.summary())
    return 0 if report.ok else 1


COMMANDS = {
    "parse": cmd_parse,
    "render": cmd_render,
    "dataset": cmd_dataset,
    "eval": cmd_eval,
    "jobstats": cmd_jobstats,
    "validate": cmd_validate,
}


def _category(exc: Exception) -> str:
    from .dataset import DatasetError
    from .gcode import GCodeError
    from .jobstats import JobStatsError
    from .metrics import MetricsError
    from .scene import SceneConfigError

    if isinstance(exc, FileNotFoundError):
        return "file not found"
    for cls, name in ((GCodeError, "gcode"), (SceneConfigError, "config"), (DatasetError, "dataset"),
                      (MetricsError, "metrics"), (JobStatsError, "jobstats"), (json.JSONDecodeError, "config")):
        if isinstance(exc, cls):
            return name
    if isinstance(exc, OSError):
        return "io"
    return "invalid input"


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        return COMMANDS[args.command](args)
    except (OSError, ValueError, RuntimeError) as exc:
        print(f"printseg: error [{_category(exc)}]: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
