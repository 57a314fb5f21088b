import json

import numpy as np
import pytest
from PIL import Image

from depthfill import config
from depthfill.io import (
    ManifestEntry,
    ManifestError,
    manifest_from_cityscapes,
    read_disparity_png,
    read_manifest,
    read_rgb_png,
    write_disparity_png,
    write_manifest,
    write_rgb_png,
)
from depthfill.raster import DisparityRaster, RgbImage


def test_disparity_png_round_trip(tmp_path, rng):
    codes = rng.integers(0, 65536, size=(12, 17))
    codes[0, :3] = [0, 32768, 65535]
    r = DisparityRaster(codes)
    write_disparity_png(r, tmp_path / "d.png")
    with Image.open(tmp_path / "d.png") as im:
        assert im.mode.startswith("I;16")
        assert im.size == (17, 12)
    assert read_disparity_png(tmp_path / "d.png") == r


def test_png_bytes_are_reproducible(tmp_path, rng):
    r = DisparityRaster(rng.integers(0, 65536, size=(8, 8)))
    write_disparity_png(r, tmp_path / "a.png")
    write_disparity_png(r, tmp_path / "b.png")
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


def test_rgb_png_round_trip(tmp_path, rng):
    img = RgbImage(rng.integers(0, 256, size=(5, 7, 3)))
    write_rgb_png(img, tmp_path / "c.png")
    assert read_rgb_png(tmp_path / "c.png") == img


def test_read_disparity_rejects_rgb(tmp_path):
    write_rgb_png(RgbImage(np.zeros((2, 2, 3))), tmp_path / "c.png")
    with pytest.raises(ValueError):
        read_disparity_png(tmp_path / "c.png")


def _touch(p):
    p.parent.mkdir(parents=True, exist_ok=True)
    write_disparity_png(DisparityRaster(np.ones((2, 2), dtype=int)), p)
    return p


def test_manifest_round_trip_relative_paths(tmp_path):
    d = _touch(tmp_path / "data" / "d.png")
    entries = [ManifestEntry("a", None, str(d), "train"), ManifestEntry("b", None, str(d), "eval", truth_path=str(d))]
    write_manifest(entries, tmp_path / "m.jsonl")
    lines = [json.loads(l) for l in (tmp_path / "m.jsonl").read_text().splitlines()]
    assert lines[0]["disparity_path"] == "data/d.png"
    back = read_manifest(tmp_path / "m.jsonl")
    assert [e.id for e in back] == ["a", "b"]
    assert back[1].truth_path.endswith("data/d.png") and back[1].split == "eval"


@pytest.mark.parametrize(
    "lines, message",
    [
        (['{"id": "a", "disparity_path": "d.png"}', '{"id": "a", "disparity_path": "d.png"}'], "duplicate"),
        (['{"id": "a", "disparity_path": "missing.png"}'], "missing file"),
        (['{"id": "a"}'], "missing key"),
        (['{"id": "a", "disparity_path": "d.png", "colour": 1}'], "unknown keys"),
        (['{"id": "a", "disparity_path": "d.png", "split": "test"}'], "split"),
        (["{not json"], "m.jsonl:1"),
    ],
)
def test_manifest_errors(tmp_path, lines, message):
    _touch(tmp_path / "d.png")
    (tmp_path / "m.jsonl").write_text("\n".join(lines) + "\n")
    with pytest.raises(ManifestError, match=message):
        read_manifest(tmp_path / "m.jsonl")


def test_manifest_from_cityscapes_tree(tmp_path):
    for split in ("train", "val"):
        stem = f"lindau_000000_{split}"
        _touch(tmp_path / "leftImg8bit" / split / "lindau" / f"{stem}_leftImg8bit.png")
        _touch(tmp_path / "disparity" / split / "lindau" / f"{stem}_disparity.png")
    _touch(tmp_path / "leftImg8bit" / "train" / "lindau" / "orphan_leftImg8bit.png")
    entries = manifest_from_cityscapes(tmp_path)
    assert [(e.id, e.split) for e in entries] == [("lindau_000000_train", "train"), ("lindau_000000_val", "eval")]


def test_config_defaults_and_round_trip():
    cfg = config.loads(
        """
output_dir: runs/a
rig: {baseline_m: 0.22, focal_px: 1500.0}
network: {input_size: [32, 32], levels: 3, base_channels: 4, seed: 9}
training: {epochs: 2, learning_rate: 0.01, batch_size: 3, mask_invalid_targets: true, seed: 1, momentum: 0.0}
refine: {iterations: 5, eval_split_fraction: 0.25}
scene: {seed: 4, width: 32, height: 32, object_count: 2, hole_fraction: 0.4, depth_range_m: [2.0, 10.0]}
"""
    )
    assert cfg.network.input_size == (32, 32)
    assert cfg.scene.rig.focal_px == 1500.0
    assert config.loads(config.dumps(cfg)) == cfg
    assert config.loads(config.dumps(config.PipelineConfig())) == config.PipelineConfig()
    rc = cfg.refine_config()
    assert rc.iterations == 5 and rc.predictor_spec == cfg.network and rc.train_cfg == cfg.training


def test_config_overrides():
    cfg = config.loads("scene: {seed: 1}").with_seed(77).with_iterations(2)
    assert cfg.network.seed == cfg.training.seed == cfg.scene.seed == 77
    assert cfg.refine.iterations == 2
    assert config.loads("{}").scene_config().rig == cfg.rig


@pytest.mark.parametrize(
    "text",
    [
        "bogus: 1",
        "network: {depth: 3}",
        "scene: {rig: {baseline_m: 0.1}}",
        "network: {levels: 0}",
        "refine: {iterations: 0}",
        "training: [1, 2]",
        "- 1",
    ],
)
def test_config_rejects_bad_input(text):
    with pytest.raises(config.ConfigError):
        config.loads(text)


def test_config_file_io(tmp_path):
    cfg = config.PipelineConfig(output_dir="x")
    config.save(cfg, tmp_path / "c.yaml")
    assert config.load(tmp_path / "c.yaml") == cfg
