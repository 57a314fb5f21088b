"""Seeded synthetic stereo scenes with exact disparity and modelled holes.

A scene is a ground plane whose depth grows toward the top of the frame,
overlaid with fronto-parallel rectangles painted far to near.  Pixel colour
is ``shade(disparity) * hue``: each hue has channel sum 1.5, so the channel
sum of a pixel is a linear function of its disparity and the mapping from
RGB to depth is learnable by a tiny network.

Holes imitate stereo failures: a band left of each occluding object's left
edge (the region the right camera cannot see), then uniform speckle until
the requested invalid fraction is met exactly (up to rounding).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from depthfill.raster import CODE_MAX, CameraRig, DisparityRaster, RgbImage, decode_codes, encode_codes

HUES = np.array(
    [
        [1.0, 0.5, 0.0],
        [0.0, 1.0, 0.5],
        [0.5, 0.0, 1.0],
        [1.0, 0.0, 0.5],
        [0.5, 1.0, 0.0],
        [0.0, 0.5, 1.0],
    ]
)
GROUND_HUE = np.array([0.5, 0.5, 0.5])
HOLE_TOLERANCE = 0.02


class InfeasibleSceneError(ValueError):
    pass


@dataclass(frozen=True)
class SceneConfig:
    seed: int = 0
    width: int = 64
    height: int = 48
    object_count: int = 4
    hole_fraction: float = 0.575
    depth_range_m: tuple[float, float] = (1.8, 20.0)
    rig: CameraRig = field(default_factory=CameraRig)

    def __post_init__(self):
        object.__setattr__(self, "depth_range_m", tuple(float(v) for v in self.depth_range_m))
        if isinstance(self.rig, dict):
            object.__setattr__(self, "rig", CameraRig(**self.rig))
        near, far = self.depth_range_m
        if self.width < 1 or self.height < 1:
            raise ValueError("scene size must be positive")
        if not 0 <= self.hole_fraction < 1:
            raise ValueError("hole_fraction must lie in [0, 1)")
        if not 0 < near < far:
            raise ValueError("depth range must satisfy 0 < near < far")
        if self.object_count < 0:
            raise ValueError("object_count must be >= 0")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.rig.bf / near * 256.0 + 1 > CODE_MAX:
            raise InfeasibleSceneError(
                f"near depth {near} m gives a disparity beyond the 16-bit code range for this rig"
            )


@dataclass(frozen=True)
class SyntheticSample:
    rgb: RgbImage
    truth: DisparityRaster
    holed: DisparityRaster

    def __post_init__(self):
        if np.any(self.truth.codes == 0):
            raise ValueError("ground truth must be hole-free")
        valid = self.holed.codes != 0
        if not np.array_equal(self.holed.codes[valid], self.truth.codes[valid]):
            raise ValueError("holed raster disagrees with truth at a valid pixel")


def _code_bounds(cfg: SceneConfig) -> tuple[int, int]:
    """Codes whose decoded depth lies inside the configured range."""
    near, far = cfg.depth_range_m
    lo = int(np.ceil(cfg.rig.bf / far * 256.0)) + 1
    hi = int(np.floor(cfg.rig.bf / near * 256.0)) + 1
    return lo, hi


def _layout(cfg: SceneConfig, rng: np.random.Generator):
    near, far = cfg.depth_range_m
    h, w = cfg.height, cfg.width
    rows = np.arange(h, dtype=np.float64)
    # ground disparity grows linearly down the frame, from the far limit to mid range
    d_far, d_near = cfg.rig.bf / far, cfg.rig.bf / near
    d_mid = d_far + 0.5 * (d_near - d_far)
    ground = d_far + (d_mid - d_far) * rows / max(h - 1, 1)
    disparity = np.repeat(ground[:, None], w, axis=1)
    hue = np.broadcast_to(GROUND_HUE, (h, w, 3)).copy()

    objects = []
    for _ in range(cfg.object_count):
        depth = rng.uniform(near, far)
        ow = int(rng.integers(max(1, w // 8), max(2, w // 2) + 1))
        oh = int(rng.integers(max(1, h // 8), max(2, h // 2) + 1))
        x0 = int(rng.integers(0, max(1, w - ow + 1)))
        y0 = int(rng.integers(0, max(1, h - oh + 1)))
        colour = HUES[int(rng.integers(len(HUES)))]
        objects.append((depth, x0, y0, ow, oh, colour))
    objects.sort(key=lambda o: -o[0])  # far to near
    for depth, x0, y0, ow, oh, colour in objects:
        disparity[y0:y0 + oh, x0:x0 + ow] = cfg.rig.bf / depth
        hue[y0:y0 + oh, x0:x0 + ow] = colour
    return disparity, hue, objects


def _occlusion_band(disparity: np.ndarray, obj, scale: float) -> list[tuple[int, int]]:
    """Pixels just left of an object that a right camera would not see."""
    depth_obj, x0, y0, ow, oh, _ = obj
    if x0 == 0:
        return []
    d_obj = disparity[y0:y0 + oh, x0]
    behind = disparity[y0:y0 + oh, x0 - 1]
    pixels = []
    for r, (dfg, dbg) in enumerate(zip(d_obj, behind)):
        gap = dfg - dbg
        if gap <= 0:
            continue
        width = 1 + int(round(3.0 * gap / scale))
        for c in range(max(0, x0 - width), x0):
            pixels.append((y0 + r, c))
    return pixels


def generate_scene(cfg: SceneConfig) -> SyntheticSample:
    rng = np.random.default_rng(cfg.seed)
    h, w = cfg.height, cfg.width
    disparity, hue, objects = _layout(cfg, rng)

    lo, hi = _code_bounds(cfg)
    truth = np.clip(encode_codes(disparity).astype(np.int64), lo, hi).astype(np.uint16)

    d = decode_codes(truth)
    d_far, d_near = cfg.rig.bf / cfg.depth_range_m[1], cfg.rig.bf / cfg.depth_range_m[0]
    shade = 0.15 + 0.85 * (d - d_far) / (d_near - d_far)
    rgb = np.clip(np.floor(255.0 * shade[..., None] * hue + 0.5), 0, 255).astype(np.uint8)

    n = h * w
    target = int(round(cfg.hole_fraction * n))
    if abs(target / n - cfg.hole_fraction) > HOLE_TOLERANCE:
        raise InfeasibleSceneError(
            f"a {w}x{h} raster cannot hold {cfg.hole_fraction:.1%} invalid pixels within "
            f"+-{HOLE_TOLERANCE:.0%}"
        )
    holes = np.zeros((h, w), dtype=bool)
    count = 0
    # nearest objects first: their occlusion bands are the widest
    for obj in reversed(objects):
        for r, c in _occlusion_band(disparity, obj, d_near - d_far):
            if count >= target:
                break
            if not holes[r, c]:
                holes[r, c] = True
                count += 1
    if count < target:
        free = np.flatnonzero(~holes.ravel())
        holes.ravel()[rng.permutation(free)[: target - count]] = True

    holed = np.where(holes, 0, truth).astype(np.uint16)
    return SyntheticSample(RgbImage(rgb), DisparityRaster(truth), DisparityRaster(holed))


def generate_dataset(cfg: SceneConfig, n: int) -> list[SyntheticSample]:
    """``n`` scenes; scene ``i`` uses seed ``cfg.seed + i``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return [generate_scene(replace(cfg, seed=cfg.seed + i)) for i in range(n)]
