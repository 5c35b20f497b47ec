import json
import shutil

import numpy as np
import pytest

from printseg import fileio
from printseg.dataset import (
    DatasetConfig,
    DatasetError,
    completion_layer,
    config_from_mapping,
    generate_dataset,
    load_dataset_config,
    preset_path,
    read_manifest,
    regenerate_frame,
    validate_manifest,
)
from printseg.semantics import DatasetKind, palette

from conftest import CUBE, OVERHANG

SMALL = dict(frames_per_model=3, completion_levels=(0.5, 1.0), resolution=(64, 64), master_seed=7,
             keyframe_interval=2)


@pytest.fixture(scope="module")
def small_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("ds")
    models = root / "models"
    models.mkdir()
    for src in (CUBE, OVERHANG):
        shutil.copy(src, models / src.name)
    config = DatasetConfig(kind="internal", **SMALL)
    result = generate_dataset(models, root / "out", config)
    return models, root / "out", config, result


def test_cardinality(small_dataset):
    _, out, config, result = small_dataset
    assert len(result.entries) == 2 * 2 * 3
    header, pairs, errors = read_manifest(result.manifest_path)
    assert header["pairs"] == len(pairs) == 12
    assert errors == []
    assert result.manifest_path == out / "internal" / "manifest.jsonl"
    assert len(list((out / "internal" / "images").iterdir())) == 12
    assert len(list((out / "internal" / "masks").iterdir())) == 12


def test_entry_naming_and_layers(small_dataset):
    _, _, _, result = small_dataset
    e = result.entries[0]
    assert e["image"] == "images/calibration_cube_c0_00000.png"
    assert e["mask"] == "masks/calibration_cube_c0_00000_mask.png"
    assert e["completion_layer"] == 5
    assert {x["completion_layer"] for x in result.entries if x["source"].startswith("overhang")} == {8, 16}


def test_palette_and_histograms(small_dataset):
    _, out, _, result = small_dataset
    allowed = set(palette(DatasetKind.INTERNAL_STRUCTURE))
    for e in result.entries:
        mask = fileio.read_png(out / "internal" / e["mask"])
        assert set(np.unique(mask).tolist()) <= allowed
        levels, counts = np.unique(mask, return_counts=True)
        assert e["histogram"] == {str(lv): int(c) for lv, c in zip(levels, counts)}
        assert sum(e["histogram"].values()) == 64 * 64


def test_validate_untouched(small_dataset):
    _, _, _, result = small_dataset
    report = validate_manifest(result.manifest_path)
    assert report.ok, report.summary()
    assert len(report.checks) == 12


def _copy_dataset(result, tmp_path):
    dst = tmp_path / "copy"
    shutil.copytree(result.manifest_path.parent, dst)
    return dst


def test_validate_flipped_byte(small_dataset, tmp_path):
    _, _, _, result = small_dataset
    d = _copy_dataset(result, tmp_path)
    mask = d / result.entries[3]["mask"]
    data = bytearray(mask.read_bytes())
    data[-20] ^= 0xFF
    mask.write_bytes(bytes(data))
    report = validate_manifest(d / "manifest.jsonl")
    failed = [c for c in report.checks if not c.ok]
    assert [c.image for c in failed] == [result.entries[3]["image"]]
    assert any("hash" in f or "unreadable" in f for f in failed[0].failures)


def test_validate_out_of_palette(small_dataset, tmp_path):
    _, _, _, result = small_dataset
    d = _copy_dataset(result, tmp_path)
    path = d / result.entries[0]["mask"]
    mask = fileio.read_png(path).copy()
    mask[0, 0] = 42
    path.write_bytes(fileio.png_bytes(mask))
    report = validate_manifest(d / "manifest.jsonl")
    assert not report.ok
    [bad] = [c for c in report.checks if not c.ok]
    assert any("outside palette: [42]" in f for f in bad.failures)


def test_validate_missing_file(small_dataset, tmp_path):
    _, _, _, result = small_dataset
    d = _copy_dataset(result, tmp_path)
    (d / result.entries[1]["image"]).unlink()
    report = validate_manifest(d / "manifest.jsonl")
    [bad] = [c for c in report.checks if not c.ok]
    assert bad.failures == [f"missing file {result.entries[1]['image'].split('/')[-1]}"]


def test_regenerate_single_frame(small_dataset):
    models, out, _, result = small_dataset
    for e in (result.entries[2], result.entries[-1]):
        image_png, mask_png = regenerate_frame(result.manifest_path, e, models / e["source"])
        assert image_png == (out / "internal" / e["image"]).read_bytes()
        assert mask_png == (out / "internal" / e["mask"]).read_bytes()


def test_rerun_is_byte_identical(small_dataset, tmp_path):
    models, out, config, result = small_dataset
    again = generate_dataset(models, tmp_path / "again", config)
    assert again.manifest_path.read_bytes() == result.manifest_path.read_bytes()


def test_empty_directory(tmp_path):
    with pytest.raises(DatasetError, match="no G-code"):
        generate_dataset(tmp_path, tmp_path / "out", DatasetConfig(**SMALL))


def test_unparseable_file_is_recorded(tmp_path):
    models = tmp_path / "m"
    models.mkdir()
    shutil.copy(CUBE, models / CUBE.name)
    (models / "broken.gcode").write_text("G28\nG1 X1.2.3 E1\n")
    (models / "empty.gcode").write_text("G28\nG1 X10 Y10\n")
    cfg = DatasetConfig(**{**SMALL, "frames_per_model": 1, "completion_levels": (1.0,)})
    result = generate_dataset(models, tmp_path / "out", cfg)
    assert len(result.entries) == 1
    assert [e["source"] for e in result.errors] == ["broken.gcode", "empty.gcode"]
    assert "line 2" in result.errors[0]["message"]
    _, _, errors = read_manifest(result.manifest_path)
    assert errors == result.errors


def test_completion_layer():
    assert completion_layer(0.33, 10) == 4
    assert completion_layer(1.0, 10) == 10
    assert completion_layer(0.3, 10) == 3
    assert completion_layer(0.01, 10) == 1


def test_config_validation():
    with pytest.raises(DatasetError):
        DatasetConfig(frames_per_model=0)
    with pytest.raises(DatasetError):
        DatasetConfig(completion_levels=(1.0, 0.5))
    with pytest.raises(DatasetError):
        DatasetConfig(completion_levels=(0.0, 0.5))
    with pytest.raises(DatasetError):
        config_from_mapping({"bogus": 1})


def test_config_round_trip():
    cfg = DatasetConfig(kind="toplayer", **SMALL)
    back = config_from_mapping(json.loads(json.dumps(cfg.to_dict())))
    assert back == cfg


@pytest.mark.parametrize("name, pairs, kind", [
    ("reference_wholepart", 5763, "wholepart"),
    ("reference_toplayer", 3570, "toplayer"),
    ("reference_internal", 1140, "internal"),
])
def test_presets(name, pairs, kind):
    cfg = load_dataset_config(preset_path(name))
    assert cfg.resolution == (1024, 1024)
    assert cfg.frames_per_model == 100
    assert cfg.target_pairs == pairs
    assert cfg.kind.value == kind


def test_overrides_win(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"master_seed": 1, "frames_per_model": 9}))
    cfg = load_dataset_config(p, master_seed=5, frames_per_model=None)
    assert cfg.master_seed == 5 and cfg.frames_per_model == 9
