from __future__ import annotations

from pathlib import Path

import pytest

from printseg.gcode import ExtrusionSegment, FeatureHint, HintKind, split_layers

DATA = Path(__file__).resolve().parents[1] / "src" / "printseg" / "data"
CUBE = DATA / "calibration_cube.gcode"
OVERHANG = DATA / "overhang_post.gcode"


@pytest.fixture
def cube_path() -> Path:
    return CUBE


@pytest.fixture
def overhang_path() -> Path:
    return OVERHANG


@pytest.fixture
def model_dir(tmp_path) -> Path:
    d = tmp_path / "models"
    d.mkdir()
    for src in (CUBE, OVERHANG):
        (d / src.name).write_text(src.read_text())
    return d


def seg(x0, y0, x1, y1, z=0.3, hint=HintKind.UNKNOWN, width=0.4, height=0.3):
    return ExtrusionSegment((x0, y0, z), (x1, y1, z), width, height, FeatureHint(hint, 1))


def square(x0, y0, x1, y1, z=0.3, hint=HintKind.UNKNOWN):
    pts = [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
    return [seg(*a, *b, z=z, hint=hint) for a, b in zip(pts, pts[1:])]


def toolpath_of(segments):
    return split_layers(segments)


# -- acceptance summary -------------------------------------------------------

_ACCEPTANCE: list[tuple[str, str]] = []


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        label = getattr(report, "criterion", None) or report.nodeid.split("::")[-1]
        _ACCEPTANCE.append((label, report.outcome))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    doc = (item.function.__doc__ or "").strip().splitlines()
    if doc:
        callspec = getattr(item, "callspec", None)
        rep.criterion = doc[0] + (f" [{callspec.id}]" if callspec else "")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcome in _ACCEPTANCE:
        mark = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{mark}] {label}")
