"""Batch generation of image/mask datasets and manifest validation.

Layout under the output root::

    <kind>/images/<model>_c<level>_<frame:05>.png
    <kind>/masks/<model>_c<level>_<frame:05>_mask.png
    <kind>/manifest.jsonl

The manifest's first line is a header record; every following line is one
pair (``"type": "pair"``) or one skipped input (``"type": "error"``).
Pairs are sorted by (model, completion index, frame index) so any worker
schedule yields the same bytes.
"""

from __future__ import annotations

import functools
import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import fileio
from .gcode import GCodeError, SlicingConfig, load_toolpath
from .raster import ImagePair, parse_resolution, render_frame
from .scene import Keyframe, SceneInstance, SceneRanges, derive_seed, interpolate, ranges_from_mapping, sample_scene
from .semantics import (
    ClassifiedToolpath,
    DatasetKind,
    classify_segments,
    label_top_layer,
    palette,
    truncate_to_layer,
)

log = logging.getLogger(__name__)

MANIFEST_SCHEMA = "printseg.manifest"
MANIFEST_VERSION = 1
GCODE_SUFFIXES = (".gcode", ".gco", ".g")


class DatasetError(RuntimeError):
    pass


@dataclass(frozen=True)
class DatasetConfig:
    kind: DatasetKind = DatasetKind.WHOLE_PART
    frames_per_model: int = 5
    completion_levels: tuple[float, ...] = (0.33, 1.0)
    resolution: tuple[int, int] = (256, 256)
    master_seed: int = 0
    scene: SceneRanges = SceneRanges()
    # frames between consecutive keyframes; frames in between are interpolated
    keyframe_interval: int = 10
    slicing: SlicingConfig = SlicingConfig()
    shadows: bool = False
    min_foreground: float = 0.005
    max_retries: int = 5
    # expected pair total of a reference run, informational only
    target_pairs: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "kind", DatasetKind.parse(self.kind))
        object.__setattr__(self, "completion_levels", tuple(float(c) for c in self.completion_levels))
        if self.frames_per_model < 1:
            raise DatasetError("frames_per_model must be at least 1")
        levels = self.completion_levels
        if not levels or any(not 0.0 < c <= 1.0 for c in levels):
            raise DatasetError("completion levels must lie in (0, 1]")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise DatasetError("completion levels must be strictly increasing")
        if self.keyframe_interval < 1:
            raise DatasetError("keyframe_interval must be at least 1")
        if min(self.resolution) < 16:
            raise DatasetError("resolution below 16 px")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


def load_dataset_config(path: str | Path, **overrides) -> DatasetConfig:
    """Read a JSON dataset config; keyword overrides win over file values."""
    with open(path, encoding="utf-8") as f:
        data = json.load(f)
    return config_from_mapping(data, **overrides)


def config_from_mapping(data: dict, **overrides) -> DatasetConfig:
    data = dict(data)
    kwargs = {}
    if "scene" in data:
        kwargs["scene"] = ranges_from_mapping(data.pop("scene"))
    if "slicing" in data:
        kwargs["slicing"] = SlicingConfig(**data.pop("slicing"))
    if isinstance(data.get("resolution"), str):
        data["resolution"] = parse_resolution(data["resolution"])
    for key, value in data.items():
        if key.startswith("_"):
            continue
        if key not in DatasetConfig.__dataclass_fields__:
            raise DatasetError(f"unknown dataset config key {key!r}")
        kwargs[key] = tuple(value) if isinstance(value, list) else value
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    if "resolution" in kwargs:
        kwargs["resolution"] = tuple(kwargs["resolution"])
    return DatasetConfig(**kwargs)


PRESET_DIR = Path(__file__).parent / "data" / "presets"


def preset_path(name: str) -> Path:
    path = PRESET_DIR / f"{name}.json"
    if not path.exists():
        known = ", ".join(sorted(p.stem for p in PRESET_DIR.glob("*.json")))
        raise DatasetError(f"unknown preset {name!r} (known: {known})")
    return path


# -- per-model preparation ---------------------------------------------------

def completion_layer(fraction: float, layer_count: int) -> int:
    """Number of layers printed at ``fraction`` completion (at least one)."""
    return max(1, min(layer_count, math.ceil(fraction * layer_count - 1e-9)))


@functools.lru_cache(maxsize=8)
def _load_classified(path: str, slicing: SlicingConfig) -> ClassifiedToolpath:
    return classify_segments(load_toolpath(path, slicing))


def stage_toolpath(ct: ClassifiedToolpath, fraction: float) -> ClassifiedToolpath:
    k = completion_layer(fraction, ct.toolpath.layer_count)
    return label_top_layer(truncate_to_layer(ct, k))


def _ranges(config: DatasetConfig) -> SceneRanges:
    return replace(config.scene, resolution=tuple(config.resolution))


def frame_seed(config: DatasetConfig, digest: str, completion_index: int, frame_index: int) -> int:
    return derive_seed(config.master_seed, digest, completion_index, frame_index)


def keyframe_seed(config: DatasetConfig, digest: str, completion_index: int, key_index: int) -> int:
    return derive_seed(config.master_seed, digest, completion_index, "key", key_index)


def retry_seed(seed: int, attempt: int) -> int:
    return derive_seed(seed, "retry", attempt)


def frame_scene(config: DatasetConfig, bounds, source: dict) -> SceneInstance:
    """Rebuild a frame's scene from its manifest ``scene`` record."""
    ranges = _ranges(config)
    if "retry_seed" in source:
        return sample_scene(source["retry_seed"], ranges, bounds)
    ka, kb = source["keyframes"]
    ia, ib = source["keyframe_indices"]
    a = sample_scene(ka, ranges, bounds)
    if source["t"] == 0.0 or kb is None:
        return a
    b = sample_scene(kb, ranges, bounds)
    return interpolate(Keyframe(ia, a), Keyframe(ib, b), source["t"])


def _keyframe_source(config: DatasetConfig, digest: str, ci: int, fi: int) -> dict:
    step = config.keyframe_interval
    j = fi // step
    ia, ib = j * step, (j + 1) * step
    t = (fi - ia) / step
    kb = keyframe_seed(config, digest, ci, j + 1) if t > 0.0 else None
    return {"keyframes": [keyframe_seed(config, digest, ci, j), kb], "keyframe_indices": [ia, ib], "t": t}


@dataclass(frozen=True)
class WorkItem:
    path: str
    stem: str
    completion_index: int
    frame_index: int


def _histogram(mask: np.ndarray) -> dict[str, int]:
    levels, counts = np.unique(mask, return_counts=True)
    return {str(int(lv)): int(c) for lv, c in zip(levels, counts)}


def render_item(config: DatasetConfig, ct_full: ClassifiedToolpath, ci: int, fi: int) -> tuple[ImagePair, dict]:
    """Render one frame, redrawing the scene when the foreground is too small.

    Returns the pair and the manifest fields that describe how its scene was
    produced.
    """
    ct = stage_toolpath(ct_full, config.completion_levels[ci])
    bounds = ct_full.toolpath.bounds()
    bed_z = min(s.start[2] - s.height for s in ct_full.segments)
    digest = ct_full.toolpath.source_digest
    seed = frame_seed(config, digest, ci, fi)
    source = _keyframe_source(config, digest, ci, fi)
    attempt = 0
    while True:
        scene = frame_scene(config, bounds, source)
        pair = render_frame(scene, ct, config.kind, shadows=config.shadows, bed_z=bed_z, frame_index=fi)
        fg = np.count_nonzero(pair.mask) / pair.mask.size
        if fg >= config.min_foreground or attempt >= config.max_retries:
            break
        attempt += 1
        source = {"retry_seed": retry_seed(seed, attempt)}
    info = {
        "frame_seed": seed,
        "scene": source,
        "attempts": attempt,
        "flagged": fg < config.min_foreground,
        "completion_layer": ct.completion_layer,
    }
    return pair, info


def _run_item(config: DatasetConfig, out: str, item: WorkItem) -> dict:
    ct_full = _load_classified(item.path, config.slicing)
    pair, info = render_item(config, ct_full, item.completion_index, item.frame_index)
    root = Path(out)
    name = f"{item.stem}_c{item.completion_index}_{item.frame_index:05d}"
    image_rel = f"images/{name}.png"
    mask_rel = f"masks/{name}_mask.png"
    image_png = fileio.png_bytes(pair.image)
    mask_png = fileio.png_bytes(pair.mask)
    fileio.atomic_write_bytes(root / image_rel, image_png)
    fileio.atomic_write_bytes(root / mask_rel, mask_png)
    h, w = pair.mask.shape
    return {
        "type": "pair",
        "image": image_rel,
        "mask": mask_rel,
        "image_sha256": hashlib.sha256(image_png).hexdigest(),
        "mask_sha256": hashlib.sha256(mask_png).hexdigest(),
        "source": Path(item.path).name,
        "source_digest": ct_full.toolpath.source_digest,
        "kind": config.kind.value,
        "completion_index": item.completion_index,
        "completion_fraction": config.completion_levels[item.completion_index],
        "completion_layer": info["completion_layer"],
        "frame_index": item.frame_index,
        "frame_seed": info["frame_seed"],
        "scene": info["scene"],
        "attempts": info["attempts"],
        "flagged": info["flagged"],
        "width": w,
        "height": h,
        "histogram": _histogram(pair.mask),
    }


def _run_item_star(args):
    return _run_item(*args)


def find_gcode(gcode_dir: str | Path) -> list[Path]:
    d = Path(gcode_dir)
    if not d.is_dir():
        raise FileNotFoundError(f"G-code directory not found: {d}")
    return sorted(p for p in d.iterdir() if p.is_file() and p.suffix.lower() in GCODE_SUFFIXES)


@dataclass
class DatasetResult:
    manifest_path: Path
    entries: list[dict]
    errors: list[dict] = field(default_factory=list)


def generate_dataset(gcode_dir: str | Path, out_dir: str | Path, config: DatasetConfig, jobs: int = 1) -> DatasetResult:
    """Render every model x completion level x frame and write the manifest.

    Files that fail to parse are recorded in the manifest's error records and
    skipped. ``jobs > 1`` renders frames in a process pool; output does not
    depend on ``jobs``.
    """
    files = find_gcode(gcode_dir)
    if not files:
        raise DatasetError(f"no G-code files in {gcode_dir}")
    root = Path(out_dir) / config.kind.value
    errors = []
    items = []
    stems = set()
    for path in files:
        if path.stem in stems:
            errors.append({"type": "error", "source": path.name, "message": "duplicate model name"})
            continue
        try:
            ct = _load_classified(str(path), config.slicing)
            if not ct.segments:
                raise GCodeError("no extrusion moves")
        except (GCodeError, UnicodeDecodeError) as exc:
            log.warning("skipping %s: %s", path.name, exc)
            errors.append({"type": "error", "source": path.name, "message": str(exc)})
            continue
        stems.add(path.stem)
        for ci in range(len(config.completion_levels)):
            for fi in range(config.frames_per_model):
                items.append(WorkItem(str(path), path.stem, ci, fi))
    if not items:
        raise DatasetError("no parseable G-code files")

    log.info("rendering %d frames into %s", len(items), root)
    args = [(config, str(root), it) for it in items]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            entries = list(pool.map(_run_item_star, args, chunksize=max(1, len(args) // (4 * jobs))))
    else:
        entries = [_run_item(*a) for a in args]

    entries.sort(key=lambda e: (e["source"], e["completion_index"], e["frame_index"]))
    errors.sort(key=lambda e: e["source"])
    manifest = root / "manifest.jsonl"
    write_manifest(manifest, config, entries, errors)
    return DatasetResult(manifest, entries, errors)


def write_manifest(path: Path, config: DatasetConfig, entries: Sequence[dict], errors: Sequence[dict]) -> None:
    header = {
        "schema": MANIFEST_SCHEMA,
        "version": MANIFEST_VERSION,
        "kind": config.kind.value,
        "palette": list(palette(config.kind)),
        "pairs": len(entries),
        "errors": len(errors),
        "config": config.to_dict(),
    }
    lines = [json.dumps(header, sort_keys=True)]
    lines += [json.dumps(e, sort_keys=True) for e in entries]
    lines += [json.dumps(e, sort_keys=True) for e in errors]
    fileio.atomic_write_text(path, "\n".join(lines) + "\n")


def read_manifest(path: str | Path) -> tuple[dict, list[dict], list[dict]]:
    """Header, pair records and error records of a manifest."""
    with open(path, encoding="utf-8") as f:
        header = json.loads(f.readline())
        if header.get("schema") != MANIFEST_SCHEMA:
            raise DatasetError(f"{path} is not a dataset manifest")
        if header.get("version") != MANIFEST_VERSION:
            raise DatasetError(f"unsupported manifest version {header.get('version')!r}")
        records = [json.loads(line) for line in f if line.strip()]
    pairs = [r for r in records if r.get("type") == "pair"]
    errors = [r for r in records if r.get("type") == "error"]
    return header, pairs, errors


def regenerate_frame(manifest_path: str | Path, entry: dict, gcode_path: str | Path) -> tuple[bytes, bytes]:
    """Re-render one manifest entry; returns (image PNG, mask PNG) bytes."""
    header, _, _ = read_manifest(manifest_path)
    config = config_from_mapping(header["config"])
    ct_full = _load_classified(str(gcode_path), config.slicing)
    if ct_full.toolpath.source_digest != entry["source_digest"]:
        raise DatasetError(f"{gcode_path} does not match the recorded source digest")
    ct = stage_toolpath(ct_full, config.completion_levels[entry["completion_index"]])
    bed_z = min(s.start[2] - s.height for s in ct_full.segments)
    scene = frame_scene(config, ct_full.toolpath.bounds(), entry["scene"])
    pair = render_frame(scene, ct, config.kind, shadows=config.shadows, bed_z=bed_z,
                        frame_index=entry["frame_index"])
    return fileio.png_bytes(pair.image), fileio.png_bytes(pair.mask)


# -- validation --------------------------------------------------------------

@dataclass
class EntryCheck:
    image: str
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


@dataclass
class ValidationReport:
    manifest: str
    checks: list[EntryCheck]
    problems: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.problems and all(c.ok for c in self.checks)

    def summary(self) -> str:
        failed = [c for c in self.checks if not c.ok]
        lines = [f"{self.manifest}: {len(self.checks) - len(failed)}/{len(self.checks)} entries pass"]
        lines += [f"  {p}" for p in self.problems]
        for c in failed:
            lines.append(f"  FAIL {c.image}: {'; '.join(c.failures)}")
        return "\n".join(lines)


def validate_manifest(path: str | Path) -> ValidationReport:
    """Re-hash every file and recount every mask named by the manifest."""
    path = Path(path)
    header, pairs, _ = read_manifest(path)
    root = path.parent
    allowed = set(header.get("palette") or palette(DatasetKind.parse(header["kind"])))
    checks = []
    problems = []
    if header.get("pairs") != len(pairs):
        problems.append(f"header lists {header.get('pairs')} pairs, found {len(pairs)}")
    for e in pairs:
        check = EntryCheck(e["image"])
        checks.append(check)
        img_path, mask_path = root / e["image"], root / e["mask"]
        for p, key in ((img_path, "image_sha256"), (mask_path, "mask_sha256")):
            if not p.exists():
                check.failures.append(f"missing file {p.name}")
            elif fileio.sha256_file(p) != e[key]:
                check.failures.append(f"hash mismatch for {p.name}")
        if not mask_path.exists():
            continue
        try:
            mask = fileio.read_png(mask_path)
        except OSError as exc:
            check.failures.append(f"unreadable mask: {exc}")
            continue
        if mask.shape != (e["height"], e["width"]):
            check.failures.append(f"mask is {mask.shape[1]}x{mask.shape[0]}, expected {e['width']}x{e['height']}")
        if img_path.exists():
            try:
                img = fileio.read_png(img_path)
                if img.shape[:2] != mask.shape:
                    check.failures.append("image and mask sizes differ")
            except OSError as exc:
                check.failures.append(f"unreadable image: {exc}")
        hist = _histogram(mask)
        if hist != e["histogram"]:
            check.failures.append("histogram mismatch")
        if sum(e["histogram"].values()) != e["width"] * e["height"]:
            check.failures.append("recorded histogram does not sum to the image area")
        stray = sorted(int(v) for v in hist if int(v) not in allowed)
        if stray:
            check.failures.append(f"levels outside palette: {stray}")
    return ValidationReport(str(path), checks, problems)
