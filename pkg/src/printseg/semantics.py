"""Semantic classes for beads, partial completion and per-dataset mask levels."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .gcode import ExtrusionSegment, HintKind, Toolpath

__all__ = [
    "SemanticClass",
    "DatasetKind",
    "ClassifiedToolpath",
    "PALETTES",
    "CLASS_LEVELS",
    "classify_segments",
    "truncate_to_layer",
    "label_top_layer",
    "relabel_for_dataset",
    "palette",
    "from_classes",
]


class SemanticClass(enum.IntEnum):
    BACKGROUND = 0
    PART = 1
    TOP_LAYER = 2
    SHELL = 3
    INFILL = 4
    SUPPORT = 5


class DatasetKind(enum.Enum):
    WHOLE_PART = "wholepart"
    TOP_LAYER = "toplayer"
    INTERNAL_STRUCTURE = "internal"

    @classmethod
    def parse(cls, value: "str | DatasetKind") -> "DatasetKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        aliases = {"wholepart": cls.WHOLE_PART, "part": cls.WHOLE_PART,
                   "toplayer": cls.TOP_LAYER, "top": cls.TOP_LAYER,
                   "internal": cls.INTERNAL_STRUCTURE, "internalstructure": cls.INTERNAL_STRUCTURE}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown dataset kind {value!r}") from None


# mask grey level -> class, per dataset kind
PALETTES: dict[DatasetKind, dict[int, SemanticClass]] = {
    DatasetKind.WHOLE_PART: {0: SemanticClass.BACKGROUND, 255: SemanticClass.PART},
    DatasetKind.TOP_LAYER: {0: SemanticClass.BACKGROUND, 255: SemanticClass.TOP_LAYER},
    DatasetKind.INTERNAL_STRUCTURE: {
        0: SemanticClass.BACKGROUND,
        85: SemanticClass.SHELL,
        170: SemanticClass.SUPPORT,
        255: SemanticClass.INFILL,
    },
}

CLASS_LEVELS: dict[DatasetKind, dict[SemanticClass, int]] = {
    kind: {cls: level for level, cls in pal.items()} for kind, pal in PALETTES.items()
}


def palette(kind: DatasetKind) -> tuple[int, ...]:
    """Sorted grey levels a mask of ``kind`` may contain."""
    return tuple(sorted(PALETTES[DatasetKind.parse(kind)]))


@dataclass(frozen=True)
class ClassifiedToolpath:
    """A toolpath with one class per segment.

    ``structural`` keeps the class each bead had before top-layer labelling,
    so the internal-structure masks can ignore top-layer status.
    """

    toolpath: Toolpath
    classes: tuple[SemanticClass, ...]
    completion_layer: int
    structural: tuple[SemanticClass, ...] = ()

    def __post_init__(self):
        if not self.structural:
            object.__setattr__(self, "structural", tuple(self.classes))
        n = len(self.toolpath.segments)
        if len(self.classes) != n or len(self.structural) != n:
            raise ValueError("one class per segment required")
        if not 0 <= self.completion_layer <= self.toolpath.layer_count:
            raise ValueError("completion_layer exceeds layer count")

    @property
    def segments(self) -> tuple[ExtrusionSegment, ...]:
        return self.toolpath.segments


_HINT_CLASS = {
    HintKind.WALL_OUTER: SemanticClass.SHELL,
    HintKind.WALL_INNER: SemanticClass.SHELL,
    HintKind.INFILL: SemanticClass.INFILL,
    HintKind.SKIN: SemanticClass.INFILL,
    HintKind.SUPPORT: SemanticClass.SUPPORT,
}

_JOIN_TOL = 1e-6


def _chains(segments: Sequence[tuple[int, ExtrusionSegment]]) -> list[list[int]]:
    """Split emission-ordered segments into end-to-start connected runs."""
    chains: list[list[int]] = []
    prev = None
    for idx, seg in segments:
        if prev is not None and math.dist(prev.end, seg.start) <= _JOIN_TOL and chains:
            chains[-1].append(idx)
        else:
            chains.append([idx])
        prev = seg
    return chains


def _point_in_polygon(x: float, y: float, poly: Sequence[tuple[float, float]]) -> bool:
    inside = False
    n = len(poly)
    for i in range(n):
        x1, y1 = poly[i]
        x2, y2 = poly[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xc > x:
                inside = not inside
    return inside


def _outer_loops(layer: Sequence[tuple[int, ExtrusionSegment]]) -> set[int]:
    """Indices of segments on closed chains not enclosed by another closed chain."""
    segs = dict(layer)
    loops = []
    for chain in _chains(layer):
        first, last = segs[chain[0]], segs[chain[-1]]
        if len(chain) >= 3 and math.dist(first.start, last.end) <= _JOIN_TOL:
            loops.append((chain, [segs[i].start[:2] for i in chain]))
    shell: set[int] = set()
    for i, (chain, poly) in enumerate(loops):
        px, py = poly[0]
        enclosed = any(
            j != i and _point_in_polygon(px, py, other) for j, (_, other) in enumerate(loops)
        )
        if not enclosed:
            shell.update(chain)
    return shell


def classify_segments(toolpath: Toolpath) -> ClassifiedToolpath:
    """Give every bead a structural class.

    Hinted beads map directly (both wall kinds collapse into Shell). Beads
    with unknown hints fall back to geometry, layer by layer: outermost
    closed loops are Shell, the rest Infill.
    """
    classes = [_HINT_CLASS.get(s.hint.value) for s in toolpath.segments]
    for layer in toolpath.layers:
        unknown = [
            (i, toolpath.segments[i]) for i in range(layer.start, layer.stop) if classes[i] is None
        ]
        if not unknown:
            continue
        shell = _outer_loops(unknown)
        for i, _ in unknown:
            classes[i] = SemanticClass.SHELL if i in shell else SemanticClass.INFILL
    return ClassifiedToolpath(toolpath, tuple(classes), toolpath.layer_count)


def from_classes(toolpath: Toolpath, names: Sequence[str]) -> ClassifiedToolpath:
    """Rebuild a classified toolpath from interchange class names."""
    classes = tuple(SemanticClass[n] for n in names)
    return ClassifiedToolpath(toolpath, classes, toolpath.layer_count)


def truncate_to_layer(ct: ClassifiedToolpath, k: int) -> ClassifiedToolpath:
    """Keep only layers ``0..k-1``."""
    tp = ct.toolpath
    if not 0 <= k <= tp.layer_count:
        raise ValueError(f"completion layer {k} outside [0, {tp.layer_count}]")
    stop = tp.layers[k - 1].stop if k else 0
    truncated = Toolpath(tp.segments[:stop], tp.layers[:k], tp.source_digest)
    return ClassifiedToolpath(truncated, ct.classes[:stop], k, ct.structural[:stop])


def label_top_layer(ct: ClassifiedToolpath) -> ClassifiedToolpath:
    """Mark every bead of the last included layer as TopLayer."""
    if ct.completion_layer < 1 or not ct.segments:
        raise ValueError("cannot label the top layer of an empty toolpath")
    top = ct.toolpath.layers[ct.completion_layer - 1]
    classes = list(ct.classes)
    classes[top.start:top.stop] = [SemanticClass.TOP_LAYER] * len(top)
    return replace(ct, classes=tuple(classes))


def relabel_for_dataset(ct: ClassifiedToolpath, kind: DatasetKind) -> np.ndarray:
    """Per-segment mask grey level for ``kind`` (uint8 array)."""
    kind = DatasetKind.parse(kind)
    n = len(ct.segments)
    if kind is DatasetKind.WHOLE_PART:
        return np.full(n, 255, dtype=np.uint8)
    if kind is DatasetKind.TOP_LAYER:
        return np.array([255 if c is SemanticClass.TOP_LAYER else 0 for c in ct.classes], dtype=np.uint8)
    levels = CLASS_LEVELS[kind]
    return np.array([levels[c] for c in ct.structural], dtype=np.uint8)
