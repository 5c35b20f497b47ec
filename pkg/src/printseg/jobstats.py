"""Print-job log analytics: failure rate, runtime histogram, filename words.

Input is CSV with the header ``filename,duration_s,canceled``.
"""

from __future__ import annotations

import bisect
import csv
import math
import os
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence

REQUIRED_COLUMNS = ("filename", "duration_s", "canceled")

_TRUE = {"1", "true", "yes", "y", "t"}
_FALSE = {"0", "false", "no", "n", "f", ""}


class JobStatsError(ValueError):
    pass


@dataclass(frozen=True)
class PrintJob:
    filename: str
    duration: float
    canceled: bool


@dataclass(frozen=True)
class RowError:
    row: int
    message: str


def _parse_bool(text: str) -> bool:
    v = text.strip().lower()
    if v in _TRUE:
        return True
    if v in _FALSE:
        return False
    raise ValueError(f"not a boolean: {text!r}")


def load_jobs(stream: IO[str]) -> tuple[list[PrintJob], list[RowError]]:
    """Parse jobs from CSV; bad rows go to the error list, keyed by data-row number."""
    reader = csv.DictReader(stream)
    missing = [c for c in REQUIRED_COLUMNS if c not in (reader.fieldnames or ())]
    if missing:
        raise JobStatsError(f"missing required column(s): {', '.join(missing)}")
    jobs, errors = [], []
    for n, row in enumerate(reader, 1):
        try:
            if None in row or any(row[c] is None for c in REQUIRED_COLUMNS):
                raise ValueError("wrong number of fields")
            duration = float(row["duration_s"])
            if not math.isfinite(duration):
                raise ValueError("duration is not finite")
            if duration < 0:
                raise ValueError("negative duration")
            jobs.append(PrintJob(row["filename"], duration, _parse_bool(row["canceled"])))
        except ValueError as exc:
            errors.append(RowError(n, str(exc)))
    return jobs, errors


@dataclass(frozen=True)
class FailureRate:
    canceled: int
    total: int
    excluded_canceled: int
    excluded_total: int

    @property
    def rate(self) -> float | None:
        """Canceled fraction, or ``None`` when no job passed the threshold."""
        return self.canceled / self.total if self.total else None


def failure_rate(jobs: Iterable[PrintJob], min_duration: float = 300.0) -> FailureRate:
    """Cancel rate among jobs longer than ``min_duration`` seconds.

    Shorter jobs are tallied separately (``excluded_*``) rather than dropped.
    """
    if min_duration < 0:
        raise JobStatsError("min_duration must be non-negative")
    canceled = total = ex_canceled = ex_total = 0
    for j in jobs:
        if j.duration > min_duration:
            total += 1
            canceled += j.canceled
        else:
            ex_total += 1
            ex_canceled += j.canceled
    return FailureRate(canceled, total, ex_canceled, ex_total)


@dataclass
class RuntimeHistogram:
    edges: tuple[float, ...]
    finished: list[int]
    canceled: list[int]
    underflow: tuple[int, int] = (0, 0)
    overflow: tuple[int, int] = (0, 0)

    @property
    def total(self) -> int:
        return sum(self.finished) + sum(self.canceled) + sum(self.underflow) + sum(self.overflow)


def runtime_histogram(jobs: Iterable[PrintJob], edges: Sequence[float]) -> RuntimeHistogram:
    """Bin jobs into ``[e_i, e_{i+1})`` by duration, split by outcome."""
    edges = tuple(float(e) for e in edges)
    if len(edges) < 2:
        raise JobStatsError("need at least two bin edges")
    if any(b <= a for a, b in zip(edges, edges[1:])):
        raise JobStatsError("bin edges must be strictly increasing")
    nb = len(edges) - 1
    finished, canceled = [0] * nb, [0] * nb
    under, over = [0, 0], [0, 0]
    for j in jobs:
        i = bisect.bisect_right(edges, j.duration) - 1
        col = 1 if j.canceled else 0
        if i < 0:
            under[col] += 1
        elif i >= nb:
            over[col] += 1
        elif j.canceled:
            canceled[i] += 1
        else:
            finished[i] += 1
    return RuntimeHistogram(edges, finished, canceled, tuple(under), tuple(over))


@dataclass(frozen=True, order=True)
class WordCount:
    token: str
    count: int


# acronym before a capitalized word, capitalized/lower word, bare acronym, digit run
_TOKEN_RE = re.compile(r"[A-Z]+(?=[A-Z][a-z])|[A-Z]?[a-z]+|[A-Z]+|[0-9]+")


def tokenize(filename: str) -> list[str]:
    """Lower-cased word tokens of a file name.

    The extension is stripped, then the name splits on non-alphanumerics,
    camelCase humps and letter/digit boundaries. Numeric tokens and tokens
    shorter than three characters are dropped.
    """
    stem = os.path.splitext(os.path.basename(filename.replace("\\", "/")))[0]
    return [t.lower() for t in _TOKEN_RE.findall(stem) if not t.isdigit() and len(t) >= 3]


def word_frequency(filenames: Iterable[str], top_k: int = 25) -> list[WordCount]:
    """Most frequent filename tokens, by count then alphabetically."""
    if top_k < 1:
        raise JobStatsError("top_k must be at least 1")
    counts = Counter(t for name in filenames for t in tokenize(name))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [WordCount(t, c) for t, c in ranked[:top_k]]


DEFAULT_EDGES = (0, 300, 1800, 3600, 3 * 3600, 6 * 3600, 12 * 3600, 24 * 3600)


@dataclass
class JobReport:
    jobs: int
    row_errors: list[RowError]
    failure: FailureRate
    histogram: RuntimeHistogram
    words: list[WordCount] = field(default_factory=list)

    def to_dict(self) -> dict:
        f = self.failure
        return {
            "jobs": self.jobs,
            "row_errors": [{"row": e.row, "message": e.message} for e in self.row_errors],
            "failure_rate": {
                "canceled": f.canceled,
                "total": f.total,
                "rate": f.rate,
                "excluded_canceled": f.excluded_canceled,
                "excluded_total": f.excluded_total,
            },
            "histogram": {
                "edges": list(self.histogram.edges),
                "finished": self.histogram.finished,
                "canceled": self.histogram.canceled,
                "underflow": list(self.histogram.underflow),
                "overflow": list(self.histogram.overflow),
            },
            "top_words": [{"token": w.token, "count": w.count} for w in self.words],
        }


def analyze(stream: IO[str], min_duration: float = 300.0, edges: Sequence[float] = DEFAULT_EDGES,
            top_k: int = 25) -> JobReport:
    jobs, errors = load_jobs(stream)
    return JobReport(
        len(jobs),
        errors,
        failure_rate(jobs, min_duration),
        runtime_histogram(jobs, edges),
        word_frequency((j.filename for j in jobs), top_k),
    )
