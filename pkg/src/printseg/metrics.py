"""IoU / mIoU evaluation of predicted masks against ground truth."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .fileio import read_png
from .semantics import PALETTES, DatasetKind, SemanticClass


class MetricsError(ValueError):
    pass


@dataclass
class ConfusionMatrix:
    """Pixel tallies, rows = ground truth, columns = prediction."""

    classes: tuple[int, ...]
    counts: np.ndarray

    @classmethod
    def empty(cls, classes: Sequence[int]) -> "ConfusionMatrix":
        classes = tuple(int(c) for c in classes)
        return cls(classes, np.zeros((len(classes), len(classes)), dtype=np.int64))

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.classes != other.classes:
            raise MetricsError("cannot merge confusion matrices over different classes")
        return ConfusionMatrix(self.classes, self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def index(self, label: int) -> int:
        try:
            return self.classes.index(int(label))
        except ValueError:
            raise MetricsError(f"class {label} not in {self.classes}") from None


def confusion(pred: np.ndarray, gt: np.ndarray, palette: Sequence[int]) -> ConfusionMatrix:
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise MetricsError(f"mask shapes differ: pred {pred.shape} vs gt {gt.shape}")
    classes = tuple(int(c) for c in palette)
    lut = np.full(256, -1, dtype=np.int64)
    lut[list(classes)] = np.arange(len(classes))
    for name, m in (("prediction", pred), ("ground truth", gt)):
        bad = np.setdiff1d(np.unique(m), classes)
        if bad.size:
            raise MetricsError(f"{name} contains value {int(bad[0])} outside palette {list(classes)}")
    n = len(classes)
    idx = lut[gt.astype(np.int64).ravel()] * n + lut[pred.astype(np.int64).ravel()]
    counts = np.bincount(idx, minlength=n * n).reshape(n, n)
    return ConfusionMatrix(classes, counts.astype(np.int64))


def iou_from_confusion(cm: ConfusionMatrix, label: int) -> float | None:
    """TP / (TP + FP + FN) for ``label``; ``None`` when the class appears nowhere."""
    i = cm.index(label)
    tp = int(cm.counts[i, i])
    fp = int(cm.counts[:, i].sum()) - tp
    fn = int(cm.counts[i, :].sum()) - tp
    denom = tp + fp + fn
    if denom == 0:
        return None
    return tp / denom


# Table columns in display order; "Part" is only used by whole-part datasets.
TABLE_COLUMNS = (
    ("Background", SemanticClass.BACKGROUND),
    ("Part", SemanticClass.PART),
    ("Top layer", SemanticClass.TOP_LAYER),
    ("Shell", SemanticClass.SHELL),
    ("Support", SemanticClass.SUPPORT),
    ("Infill", SemanticClass.INFILL),
)


@dataclass
class IoUReport:
    kind: DatasetKind
    per_class: dict[int, float]
    miou: float | None
    pairs_evaluated: int
    confusion: ConfusionMatrix
    unmatched: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        names = PALETTES[self.kind]
        return {
            "kind": self.kind.value,
            "pairs_evaluated": self.pairs_evaluated,
            "miou": self.miou,
            "per_class": {names[lv].name.lower(): v for lv, v in sorted(self.per_class.items())},
            "classes": list(self.confusion.classes),
            "confusion": self.confusion.counts.tolist(),
            "unmatched": self.unmatched,
        }

    def table(self) -> str:
        """Percent table with one column per class, ``---`` where a class is not scored."""
        by_class = {PALETTES[self.kind][lv]: v for lv, v in self.per_class.items()}
        head = ["No. of images", "Test dataset"] + [name for name, _ in TABLE_COLUMNS] + ["mIoU"]
        row = [str(self.pairs_evaluated), self.kind.value]
        for _, cls in TABLE_COLUMNS:
            v = by_class.get(cls)
            row.append("---" if v is None else f"{100 * v:.2f}")
        row.append("---" if self.miou is None else f"{100 * self.miou:.2f}")
        widths = [max(len(h), len(r)) for h, r in zip(head, row)]
        fmt = " | ".join(f"{{:>{w}}}" for w in widths)
        rule = "-+-".join("-" * w for w in widths)
        return "\n".join([fmt.format(*head), rule, fmt.format(*row)])


def report_from_confusion(cm: ConfusionMatrix, kind: DatasetKind, pairs: int, unmatched=()) -> IoUReport:
    """Per-class IoU and mIoU over the classes present in gt or prediction."""
    per_class = {}
    for label in cm.classes:
        v = iou_from_confusion(cm, label)
        if v is not None:
            per_class[label] = v
    miou = float(np.mean(list(per_class.values()))) if per_class else None
    return IoUReport(kind, per_class, miou, pairs, cm, list(unmatched))


def _mask_key(path: Path) -> str:
    stem = path.stem
    return stem[: -len("_mask")] if stem.endswith("_mask") else stem


def _index(d: Path) -> dict[str, Path]:
    if not d.is_dir():
        raise FileNotFoundError(f"mask directory not found: {d}")
    return {_mask_key(p): p for p in sorted(d.iterdir()) if p.suffix.lower() == ".png"}


def evaluate_pairs(pairs: Iterable[tuple[np.ndarray, np.ndarray]], kind: DatasetKind) -> IoUReport:
    kind = DatasetKind.parse(kind)
    cm = ConfusionMatrix.empty(sorted(PALETTES[kind]))
    n = 0
    for pred, gt in pairs:
        cm = cm + confusion(pred, gt, cm.classes)
        n += 1
    return report_from_confusion(cm, kind, n)


def evaluate_dataset(pred_dir: str | Path, gt_dir: str | Path, kind: DatasetKind) -> IoUReport:
    """Accumulate one confusion matrix over all masks paired by filename stem.

    A trailing ``_mask`` is ignored when pairing. Files present on one side
    only are listed in ``unmatched`` and skipped.
    """
    kind = DatasetKind.parse(kind)
    pred = _index(Path(pred_dir))
    gt = _index(Path(gt_dir))
    common = sorted(pred.keys() & gt.keys())
    unmatched = sorted(pred.keys() ^ gt.keys())
    report = evaluate_pairs(((read_png(pred[k]), read_png(gt[k])) for k in common), kind)
    report.unmatched = unmatched
    return report


def write_report(report: IoUReport, path: str | Path) -> None:
    from .fileio import atomic_write_text

    atomic_write_text(path, json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n")
