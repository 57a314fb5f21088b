"""Pixel-error accuracy, invalid-pixel statistics and corrected-pixel rates.

All metrics work on the stored disparity codes, not on metric depth.  Sums
are carried in int64 so results are exact.
"""

from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from depthfill.raster import DisparityRaster


class UndefinedMetricError(ValueError):
    """Raised when a ratio metric would divide by zero."""


def _check_same_shape(a: DisparityRaster, b: DisparityRaster) -> None:
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.width}x{a.height} vs {b.width}x{b.height}")


@dataclass(frozen=True)
class PixelErrorSummary:
    absolute_error_sum: int
    target_sum: int
    error_ratio_pct: float
    accuracy_pct: float

    @classmethod
    def from_sums(cls, error_sum: int, target_sum: int) -> "PixelErrorSummary":
        if target_sum <= 0:
            raise UndefinedMetricError("target codes sum to zero; accuracy is undefined")
        ratio = 100.0 * error_sum / target_sum
        return cls(int(error_sum), int(target_sum), ratio, 100.0 - ratio)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class InvalidStats:
    per_image_counts: tuple[int, ...]
    pixels_per_image: int
    average_invalid: float
    invalid_fraction_pct: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_image_counts"] = list(self.per_image_counts)
        return d


@dataclass(frozen=True)
class CorrectionStats:
    per_image_corrected: tuple[int, ...]
    average_corrected: float
    average_invalid: float
    corrected_pct: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_image_corrected"] = list(self.per_image_corrected)
        return d


def _error_and_target(pred: DisparityRaster, target: DisparityRaster, masked: bool) -> tuple[int, int]:
    _check_same_shape(pred, target)
    p = pred.codes.astype(np.int64)
    t = target.codes.astype(np.int64)
    if masked:
        keep = t != 0
        p, t = p[keep], t[keep]
    return int(np.abs(t - p).sum()), int(t.sum())


def absolute_error_sum(pred: DisparityRaster, target: DisparityRaster) -> int:
    """Sum of ``|P - P_hat|`` over every pixel, in code units."""
    return _error_and_target(pred, target, masked=False)[0]


def accuracy(pred: DisparityRaster, target: DisparityRaster, masked: bool = False) -> PixelErrorSummary:
    """Error ratio and accuracy (``100 - error ratio``) of ``pred`` against ``target``.

    With ``masked=True`` only pixels whose target code is nonzero take part,
    which is the right comparison when the target is a holed raster and the
    question is how well its valid pixels are reproduced.
    """
    return PixelErrorSummary.from_sums(*_error_and_target(pred, target, masked))


def pooled_accuracy(
    preds: Sequence[DisparityRaster], targets: Sequence[DisparityRaster], masked: bool = False
) -> PixelErrorSummary:
    """Accuracy over a dataset, pooling error and target sums across images."""
    if len(preds) != len(targets):
        raise ValueError("prediction and target sequences differ in length")
    err = tot = 0
    for p, t in zip(preds, targets):
        e, s = _error_and_target(p, t, masked)
        err += e
        tot += s
    return PixelErrorSummary.from_sums(err, tot)


def invalid_count(r: DisparityRaster) -> int:
    return int(np.count_nonzero(r.codes == 0))


def invalid_stats_from_counts(counts: Sequence[int], pixels_per_image: int) -> InvalidStats:
    if len(counts) == 0:
        raise ValueError("dataset is empty")
    avg = float(sum(counts)) / len(counts)
    return InvalidStats(tuple(int(c) for c in counts), int(pixels_per_image), avg, 100.0 * avg / pixels_per_image)


def average_invalid(dataset: Sequence[DisparityRaster]) -> InvalidStats:
    """Mean number of code-0 pixels per image and the matching image fraction."""
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    shape = dataset[0].shape
    for r in dataset:
        if r.shape != shape:
            raise ValueError("dataset rasters differ in size")
    return invalid_stats_from_counts([invalid_count(r) for r in dataset], shape[0] * shape[1])


def corrected_count(before: DisparityRaster, after: DisparityRaster) -> int:
    _check_same_shape(before, after)
    return int(np.count_nonzero((before.codes == 0) & (after.codes != 0)))


def corrected_pixels(before: Sequence[DisparityRaster], after: Sequence[DisparityRaster]) -> CorrectionStats:
    """Share of invalid pixels in ``before`` that hold a nonzero code in ``after``."""
    if len(before) != len(after):
        raise ValueError("before and after sequences differ in length")
    if len(before) == 0:
        raise ValueError("dataset is empty")
    fixed = [corrected_count(b, a) for b, a in zip(before, after)]
    holes = [invalid_count(b) for b in before]
    avg_holes = sum(holes) / len(holes)
    if avg_holes == 0:
        raise UndefinedMetricError("no invalid pixels before filling; corrected percentage is undefined")
    avg_fixed = sum(fixed) / len(fixed)
    return CorrectionStats(tuple(fixed), avg_fixed, avg_holes, 100.0 * avg_fixed / avg_holes)


def summary_json(summary, **extra) -> str:
    """Flat key/value JSON for a metric summary."""
    d = summary.to_dict() if hasattr(summary, "to_dict") else dict(summary)
    d.update(extra)
    flat = {k: v for k, v in d.items() if not isinstance(v, (list, tuple, dict))}
    return json.dumps(flat, sort_keys=True)


def write_per_image_csv(
    path, ids: Iterable[str], invalid: Sequence[int], corrected: Optional[Sequence[int]] = None
) -> None:
    """One row per image: id, invalid count, corrected count (blank when unknown)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["image_id", "invalid_count", "corrected_count"])
        for i, image_id in enumerate(ids):
            w.writerow([image_id, invalid[i], "" if corrected is None else corrected[i]])
