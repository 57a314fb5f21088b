"""Disparity rasters, RGB images and metric depth maps.

Disparity rasters store 16-bit codes ``p`` following the Cityscapes
convention: ``p == 0`` marks an invalid measurement and any other code
decodes to a disparity of ``(p - 1) / 256`` pixels.  Depth follows from the
rectified-stereo relation ``Z = B * f / disparity``.

Scalar functions use ``None`` for an invalid value; the array variants
(``decode_codes`` and friends) use NaN.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

CODE_MAX = 65535
CODE_SCALE = 256.0
CITYSCAPES_BASELINE_M = 0.22


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class DisparityRaster:
    """Single-channel 16-bit disparity codes, shape ``(height, width)``."""

    codes: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.codes)
        if arr.ndim != 2:
            raise ValueError(f"disparity raster must be 2-D, got shape {arr.shape}")
        if arr.dtype != np.uint16:
            if arr.size and (arr.min() < 0 or arr.max() > CODE_MAX):
                raise ValueError("disparity codes must lie in [0, 65535]")
            if np.issubdtype(arr.dtype, np.floating) and not np.all(arr == np.round(arr)):
                raise ValueError("disparity codes must be integers")
        object.__setattr__(self, "codes", _frozen(arr.astype(np.uint16)))

    @classmethod
    def from_sequence(cls, width: int, height: int, codes: Sequence[int]) -> "DisparityRaster":
        """Build from a flat row-major sequence of codes."""
        flat = np.asarray(codes, dtype=np.int64)
        if flat.size != width * height:
            raise ValueError(f"expected {width * height} codes, got {flat.size}")
        return cls(flat.reshape(height, width))

    @property
    def width(self) -> int:
        return self.codes.shape[1]

    @property
    def height(self) -> int:
        return self.codes.shape[0]

    @property
    def shape(self) -> tuple[int, int]:
        return self.codes.shape

    def __eq__(self, other):
        if not isinstance(other, DisparityRaster):
            return NotImplemented
        return np.array_equal(self.codes, other.codes)

    def __repr__(self):
        return f"DisparityRaster({self.width}x{self.height}, invalid={int(np.count_nonzero(self.codes == 0))})"


@dataclass(frozen=True)
class CameraRig:
    baseline_m: float = CITYSCAPES_BASELINE_M
    focal_px: float = 2000.0

    def __post_init__(self):
        if not (self.baseline_m > 0 and np.isfinite(self.baseline_m)):
            raise ValueError(f"baseline_m must be positive, got {self.baseline_m}")
        if not (self.focal_px > 0 and np.isfinite(self.focal_px)):
            raise ValueError(f"focal_px must be positive, got {self.focal_px}")

    @property
    def bf(self) -> float:
        return float(self.baseline_m) * float(self.focal_px)


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Metric depth with an explicit validity mask; invalid entries hold NaN."""

    depth_m: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        depth = np.asarray(self.depth_m, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if depth.shape != valid.shape or depth.ndim != 2:
            raise ValueError("depth and mask must be 2-D arrays of equal shape")
        vals = depth[valid]
        if not np.all(np.isfinite(vals) & (vals > 0)):
            raise ValueError("valid depths must be finite and positive")
        depth = np.where(valid, depth, np.nan)
        object.__setattr__(self, "depth_m", _frozen(depth))
        object.__setattr__(self, "valid", _frozen(valid))

    @property
    def width(self) -> int:
        return self.depth_m.shape[1]

    @property
    def height(self) -> int:
        return self.depth_m.shape[0]


@dataclass(frozen=True, eq=False)
class RgbImage:
    """8-bit RGB pixels, shape ``(height, width, 3)``."""

    pixels: np.ndarray = field(repr=False)

    def __post_init__(self):
        arr = np.asarray(self.pixels)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"RGB image must have shape (H, W, 3), got {arr.shape}")
        if arr.dtype != np.uint8:
            if arr.size and (arr.min() < 0 or arr.max() > 255):
                raise ValueError("RGB channel values must lie in [0, 255]")
        object.__setattr__(self, "pixels", _frozen(arr.astype(np.uint8)))

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def __eq__(self, other):
        if not isinstance(other, RgbImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


def decode_disparity(p: int) -> Optional[float]:
    """Disparity in pixels for code ``p``, or None when ``p == 0``."""
    p = int(p)
    if not 0 <= p <= CODE_MAX:
        raise ValueError(f"code {p} outside [0, 65535]")
    if p == 0:
        return None
    return (p - 1) / CODE_SCALE


def encode_disparity(d: Optional[float]) -> int:
    if d is None:
        return 0
    if d < 0 or np.isnan(d):
        raise ValueError(f"disparity must be non-negative, got {d}")
    # round half away from zero; d >= 0 so floor(x + 0.5) is exact
    q = np.floor(d * CODE_SCALE + 0.5) + 1
    return int(min(q, CODE_MAX))


def disparity_to_depth(d: Optional[float], rig: CameraRig) -> Optional[float]:
    # zero disparity is the infinite-depth singularity; treated as invalid
    if d is None or d == 0:
        return None
    if d < 0:
        raise ValueError(f"disparity must be non-negative, got {d}")
    return rig.bf / d


def depth_to_disparity(z: Optional[float], rig: CameraRig) -> Optional[float]:
    if z is None:
        return None
    if not z > 0:
        raise ValueError(f"depth must be positive, got {z}")
    return rig.bf / z


def decode_codes(codes: np.ndarray) -> np.ndarray:
    """Vectorised ``decode_disparity``; invalid codes become NaN."""
    codes = np.asarray(codes)
    d = (codes.astype(np.float64) - 1.0) / CODE_SCALE
    return np.where(codes == 0, np.nan, d)


def encode_codes(disparity: np.ndarray) -> np.ndarray:
    """Vectorised ``encode_disparity``; NaN entries become code 0."""
    d = np.asarray(disparity, dtype=np.float64)
    invalid = np.isnan(d)
    if np.any(d[~invalid] < 0):
        raise ValueError("disparity must be non-negative")
    q = np.floor(np.where(invalid, 0.0, d) * CODE_SCALE + 0.5) + 1
    q = np.minimum(q, CODE_MAX)
    return np.where(invalid, 0, q).astype(np.uint16)


def disparities_to_depths(disparity: np.ndarray, rig: CameraRig) -> np.ndarray:
    d = np.asarray(disparity, dtype=np.float64)
    out = np.full(d.shape, np.nan)
    ok = np.isfinite(d) & (d > 0)
    out[ok] = rig.bf / d[ok]
    return out


def raster_to_depth_map(r: DisparityRaster, rig: CameraRig) -> DepthMap:
    depth = disparities_to_depths(decode_codes(r.codes), rig)
    return DepthMap(depth_m=depth, valid=np.isfinite(depth))


def resize_nearest(arr: np.ndarray, width: int, height: int) -> np.ndarray:
    """Nearest-neighbour resample of the leading two axes to ``(height, width)``."""
    h, w = arr.shape[:2]
    if (h, w) == (height, width):
        return arr
    # sample at pixel centres
    rows = ((2 * np.arange(height) + 1) * h) // (2 * height)
    cols = ((2 * np.arange(width) + 1) * w) // (2 * width)
    return arr[rows[:, None], cols[None, :]]
