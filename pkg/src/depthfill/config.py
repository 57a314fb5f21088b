"""Pipeline configuration: a single YAML file with strict keys.

Example::

    output_dir: out
    rig: {baseline_m: 0.22, focal_px: 2000.0}
    network: {input_size: [64, 48], levels: 2, base_channels: 8, seed: 0}
    training: {epochs: 30, learning_rate: 0.05, batch_size: 4,
               mask_invalid_targets: false, seed: 0, momentum: 0.9}
    refine: {iterations: 5, eval_split_fraction: 0.2}
    scene: {seed: 0, width: 64, height: 48, object_count: 4,
            hole_fraction: 0.575, depth_range_m: [1.8, 20.0]}

Every section is optional and falls back to the defaults of the matching
dataclass.  The scene uses the top-level ``rig``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace
from typing import Optional

import yaml

from depthfill.predictor import NetworkSpec, TrainConfig
from depthfill.raster import CameraRig
from depthfill.refine import RefineConfig
from depthfill.synth import SceneConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RefineSection:
    iterations: int = 5
    eval_split_fraction: float = 0.2

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 < self.eval_split_fraction < 1:
            raise ValueError("eval_split_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class PipelineConfig:
    rig: CameraRig = field(default_factory=CameraRig)
    network: NetworkSpec = field(default_factory=NetworkSpec)
    training: TrainConfig = field(default_factory=TrainConfig)
    refine: RefineSection = field(default_factory=RefineSection)
    scene: Optional[SceneConfig] = None
    output_dir: str = "out"

    def refine_config(self) -> RefineConfig:
        return RefineConfig(
            iterations=self.refine.iterations,
            predictor_spec=self.network,
            train_cfg=self.training,
            eval_split_fraction=self.refine.eval_split_fraction,
        )

    def scene_config(self) -> SceneConfig:
        base = self.scene if self.scene is not None else SceneConfig()
        return replace(base, rig=self.rig)

    def with_seed(self, seed: int) -> "PipelineConfig":
        scene = replace(self.scene, seed=seed) if self.scene is not None else None
        return replace(
            self,
            network=replace(self.network, seed=seed),
            training=replace(self.training, seed=seed),
            scene=scene,
        )

    def with_iterations(self, iterations: int) -> "PipelineConfig":
        return replace(self, refine=replace(self.refine, iterations=iterations))

    def to_dict(self) -> dict:
        out = {
            "output_dir": self.output_dir,
            "rig": _section(self.rig),
            "network": _section(self.network),
            "training": _section(self.training),
            "refine": _section(self.refine),
        }
        if self.scene is not None:
            scene = _section(self.scene)
            del scene["rig"]
            out["scene"] = scene
        return out


def _section(obj) -> dict:
    d = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        d[f.name] = list(v) if isinstance(v, tuple) else v
    return d


def _build(cls, raw, name):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"section {name!r} must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    try:
        return cls(**raw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {name!r} section: {exc}") from None


def from_dict(raw: dict) -> PipelineConfig:
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    allowed = {"rig", "network", "training", "refine", "scene", "output_dir"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    rig = _build(CameraRig, raw.get("rig"), "rig")
    scene = None
    if raw.get("scene") is not None:
        scene_raw = dict(raw["scene"]) if isinstance(raw["scene"], dict) else raw["scene"]
        if isinstance(scene_raw, dict):
            if "rig" in scene_raw:
                raise ConfigError("scene uses the top-level rig; remove 'scene.rig'")
            scene_raw["rig"] = rig
        scene = _build(SceneConfig, scene_raw, "scene")
    return PipelineConfig(
        rig=rig,
        network=_build(NetworkSpec, raw.get("network"), "network"),
        training=_build(TrainConfig, raw.get("training"), "training"),
        refine=_build(RefineSection, raw.get("refine"), "refine"),
        scene=scene,
        output_dir=str(raw.get("output_dir", "out")),
    )


def loads(text: str) -> PipelineConfig:
    return from_dict(yaml.safe_load(text))


def dumps(cfg: PipelineConfig) -> str:
    return yaml.safe_dump(cfg.to_dict(), sort_keys=False)


def load(path) -> PipelineConfig:
    with open(path) as fh:
        return loads(fh.read())


def save(cfg: PipelineConfig, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps(cfg))
