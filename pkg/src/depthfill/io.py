"""PNG persistence for rasters and images, and JSON-lines manifests."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Optional

import numpy as np
from PIL import Image

from depthfill.raster import DisparityRaster, RgbImage

SPLITS = ("train", "eval")


def write_disparity_png(raster: DisparityRaster, path) -> None:
    """Single-channel 16-bit grayscale PNG."""
    Image.fromarray(np.ascontiguousarray(raster.codes, dtype=np.uint16)).save(path, format="PNG")


def read_disparity_png(path) -> DisparityRaster:
    with Image.open(path) as im:
        if im.mode not in ("I;16", "I;16B", "I;16L", "I", "L"):
            raise ValueError(f"{path}: expected a single-channel 16-bit PNG, got mode {im.mode}")
        arr = np.array(im)
    if arr.ndim != 2:
        raise ValueError(f"{path}: expected a single-channel image")
    return DisparityRaster(arr.astype(np.int64))


def write_rgb_png(image: RgbImage, path) -> None:
    Image.fromarray(np.ascontiguousarray(image.pixels), mode="RGB").save(path, format="PNG")


def read_rgb_png(path) -> RgbImage:
    with Image.open(path) as im:
        return RgbImage(np.array(im.convert("RGB")))


@dataclass(frozen=True)
class ManifestEntry:
    """One image of a dataset.

    ``disparity_path`` is the (possibly holed) raster used as the training
    target or model input.  ``truth_path`` optionally names an exact
    hole-free raster and ``target_path`` a refined raster; both are used by
    evaluation and corrector training.
    """

    id: str
    rgb_path: Optional[str]
    disparity_path: str
    split: str = "train"
    truth_path: Optional[str] = None
    target_path: Optional[str] = None

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"entry {self.id!r}: split must be one of {SPLITS}, got {self.split!r}")

    def to_json(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}


class ManifestError(ValueError):
    pass


def _resolve(base: Path, p: Optional[str]) -> Optional[str]:
    if p is None:
        return None
    return p if os.path.isabs(p) else str(base / p)


def read_manifest(path, check_files: bool = True) -> list[ManifestEntry]:
    """Load a JSON-lines manifest; relative paths resolve against its directory."""
    path = Path(path)
    base = path.parent
    entries = []
    seen = set()
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from None
            unknown = set(raw) - set(ManifestEntry.__dataclass_fields__)
            if unknown:
                raise ManifestError(f"{path}:{lineno}: unknown keys {sorted(unknown)}")
            try:
                entry = ManifestEntry(
                    id=str(raw["id"]),
                    rgb_path=_resolve(base, raw.get("rgb_path")),
                    disparity_path=_resolve(base, raw["disparity_path"]),
                    split=raw.get("split", "train"),
                    truth_path=_resolve(base, raw.get("truth_path")),
                    target_path=_resolve(base, raw.get("target_path")),
                )
            except KeyError as exc:
                raise ManifestError(f"{path}:{lineno}: missing key {exc}") from None
            except ValueError as exc:
                raise ManifestError(f"{path}:{lineno}: {exc}") from None
            if entry.id in seen:
                raise ManifestError(f"{path}:{lineno}: duplicate id {entry.id!r}")
            seen.add(entry.id)
            if check_files:
                for p in (entry.rgb_path, entry.disparity_path, entry.truth_path, entry.target_path):
                    if p is not None and not os.path.exists(p):
                        raise ManifestError(f"{path}:{lineno}: missing file {p}")
            entries.append(entry)
    return entries


def write_manifest(entries: Iterable[ManifestEntry], path) -> None:
    """Write entries with paths made relative to the manifest directory when possible."""
    path = Path(path)
    base = path.parent.resolve()

    def rel(p):
        if p is None:
            return None
        try:
            return os.path.relpath(Path(p).resolve(), base)
        except ValueError:
            return str(p)

    with open(path, "w") as fh:
        for e in entries:
            d = e.to_json()
            for key in ("rgb_path", "disparity_path", "truth_path", "target_path"):
                if key in d:
                    d[key] = rel(d[key])
            fh.write(json.dumps(d, sort_keys=True) + "\n")


def manifest_from_cityscapes(root, split_dirs=("train", "val", "test")) -> list[ManifestEntry]:
    """Entries for a Cityscapes-style tree (``leftImg8bit/<split>/<city>/*_leftImg8bit.png``
    paired with ``disparity/<split>/<city>/*_disparity.png``).  Cityscapes ``train``
    maps to our train split; every other split is used for evaluation."""
    root = Path(root)
    entries = []
    for split in split_dirs:
        rgb_dir = root / "leftImg8bit" / split
        if not rgb_dir.is_dir():
            continue
        for rgb in sorted(rgb_dir.glob("*/*_leftImg8bit.png")):
            stem = rgb.name[: -len("_leftImg8bit.png")]
            disp = root / "disparity" / split / rgb.parent.name / f"{stem}_disparity.png"
            if disp.exists():
                entries.append(
                    ManifestEntry(stem, str(rgb), str(disp), "train" if split == "train" else "eval")
                )
    return entries
