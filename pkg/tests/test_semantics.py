import pytest
from hypothesis import given
from hypothesis import strategies as st

from printseg.gcode import HintKind, load_toolpath
from printseg.semantics import (
    PALETTES,
    DatasetKind,
    SemanticClass,
    classify_segments,
    from_classes,
    label_top_layer,
    palette,
    relabel_for_dataset,
    truncate_to_layer,
)

from conftest import seg, square, toolpath_of

S = SemanticClass


@pytest.mark.parametrize(
    "hint, expected",
    [
        (HintKind.WALL_OUTER, S.SHELL),
        (HintKind.WALL_INNER, S.SHELL),
        (HintKind.INFILL, S.INFILL),
        (HintKind.SKIN, S.INFILL),
        (HintKind.SUPPORT, S.SUPPORT),
    ],
)
def test_hint_mapping(hint, expected):
    ct = classify_segments(toolpath_of([seg(0, 0, 1, 0, hint=hint)]))
    assert ct.classes == (expected,)


def test_geometric_fallback_two_loops():
    outer = square(0, 0, 10, 10)
    inner = square(2, 2, 8, 8)
    ct = classify_segments(toolpath_of(outer + inner))
    assert ct.classes == (S.SHELL,) * 4 + (S.INFILL,) * 4


def test_fallback_open_lines_are_infill():
    segs = square(0, 0, 10, 10) + [seg(1, 1, 9, 1), seg(1, 3, 9, 3)]
    ct = classify_segments(toolpath_of(segs))
    assert ct.classes == (S.SHELL,) * 4 + (S.INFILL,) * 2


def test_fallback_disjoint_islands_are_both_shell():
    ct = classify_segments(toolpath_of(square(0, 0, 5, 5) + square(20, 0, 25, 5)))
    assert set(ct.classes) == {S.SHELL}


def test_fallback_only_touches_unknown_hints():
    segs = square(0, 0, 10, 10, hint=HintKind.SUPPORT) + square(2, 2, 8, 8)
    ct = classify_segments(toolpath_of(segs))
    # the hinted loop is not part of the fallback, so the inner loop is outermost there
    assert ct.classes == (S.SUPPORT,) * 4 + (S.SHELL,) * 4


def _stacked(layers=4):
    segs = []
    for k in range(layers):
        z = 0.3 * (k + 1)
        segs += square(0, 0, 10, 10, z=z, hint=HintKind.WALL_OUTER)
        segs.append(seg(1, 5, 9, 5, z=z, hint=HintKind.INFILL))
    return classify_segments(toolpath_of(segs))


def test_truncate_and_label():
    ct = _stacked(4)
    part = label_top_layer(truncate_to_layer(ct, 2))
    assert part.toolpath.layer_count == 2
    assert len(part.segments) == 10
    assert part.classes[:5] == ct.classes[:5]
    assert part.classes[5:] == (S.TOP_LAYER,) * 5
    assert part.structural == ct.classes[:10]


def test_truncate_bounds():
    ct = _stacked(3)
    assert truncate_to_layer(ct, 0).segments == ()
    with pytest.raises(ValueError):
        truncate_to_layer(ct, 4)
    with pytest.raises(ValueError):
        label_top_layer(truncate_to_layer(ct, 0))


@given(st.integers(1, 6), st.data())
def test_label_top_layer_properties(layers, data):
    ct = _stacked(layers)
    k = data.draw(st.integers(1, layers))
    part = label_top_layer(truncate_to_layer(ct, k))
    top = part.toolpath.layers[k - 1]
    tops = [i for i, c in enumerate(part.classes) if c is S.TOP_LAYER]
    # exactly the beads of layer k-1 and nothing above it survives
    assert tops == list(range(top.start, top.stop))
    assert max(s.layer_index for s in part.segments) == k - 1
    assert part.classes[: top.start] == ct.classes[: top.start]


def test_relabel_examples():
    ct = label_top_layer(truncate_to_layer(_stacked(3), 2))
    n = len(ct.segments)
    assert list(relabel_for_dataset(ct, DatasetKind.WHOLE_PART)) == [255] * n
    assert list(relabel_for_dataset(ct, DatasetKind.TOP_LAYER)) == [0] * 5 + [255] * 5
    assert list(relabel_for_dataset(ct, DatasetKind.INTERNAL_STRUCTURE)) == ([85] * 4 + [255]) * 2


def test_relabel_support():
    ct = classify_segments(toolpath_of([seg(0, 0, 1, 0, hint=HintKind.SUPPORT)]))
    assert list(relabel_for_dataset(ct, "internal")) == [170]


@pytest.mark.parametrize("kind", list(DatasetKind))
def test_relabel_stays_in_palette(kind, overhang_path):
    ct = classify_segments(load_toolpath(overhang_path))
    for k in (1, 6, ct.toolpath.layer_count):
        levels = relabel_for_dataset(label_top_layer(truncate_to_layer(ct, k)), kind)
        assert set(levels.tolist()) <= set(PALETTES[kind])


def test_palettes():
    assert palette("wholepart") == (0, 255)
    assert palette(DatasetKind.TOP_LAYER) == (0, 255)
    assert palette("internal") == (0, 85, 170, 255)


def test_dataset_kind_parse():
    assert DatasetKind.parse("whole-part") is DatasetKind.WHOLE_PART
    assert DatasetKind.parse("INTERNAL_STRUCTURE") is DatasetKind.INTERNAL_STRUCTURE
    with pytest.raises(ValueError):
        DatasetKind.parse("bogus")


def test_fixture_classes(overhang_path):
    ct = classify_segments(load_toolpath(overhang_path))
    assert {S.SHELL, S.INFILL, S.SUPPORT} == set(ct.classes)


def test_from_classes_round_trip(cube_path):
    ct = classify_segments(load_toolpath(cube_path))
    back = from_classes(ct.toolpath, [c.name for c in ct.classes])
    assert back.classes == ct.classes
