"""Hole filling from a dense prediction, plus a diffusion baseline predictor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from depthfill.raster import DisparityRaster, resize_nearest

MAX_SWEEPS = 10_000
TOLERANCE = 0.5


@dataclass(frozen=True)
class FillOutcome:
    filled: DisparityRaster
    replaced_count: int
    remaining_invalid: int


def fill_missing(target: DisparityRaster, predicted: DisparityRaster) -> FillOutcome:
    """Replace every code-0 pixel of ``target`` with the prediction at that position.

    A single prediction serves all holes.  Holes where the prediction is
    itself 0 stay invalid.
    """
    if target.shape != predicted.shape:
        raise ValueError(
            f"dimension mismatch: target {target.width}x{target.height}, "
            f"prediction {predicted.width}x{predicted.height}"
        )
    holes = target.codes == 0
    filled = np.where(holes, predicted.codes, target.codes)
    replaced = int(np.count_nonzero(holes & (predicted.codes != 0)))
    remaining = int(np.count_nonzero(filled == 0))
    return FillOutcome(DisparityRaster(filled), replaced, remaining)


def fit_prediction(predicted: DisparityRaster, like: DisparityRaster) -> DisparityRaster:
    """Resample a prediction to the size of ``like`` (nearest neighbour)."""
    if predicted.shape == like.shape:
        return predicted
    return DisparityRaster(resize_nearest(predicted.codes, like.width, like.height))


def baseline_predict(target: DisparityRaster, max_sweeps: int = MAX_SWEEPS, tol: float = TOLERANCE) -> DisparityRaster:
    """Dense raster obtained by Jacobi diffusion of valid codes into the holes.

    Valid pixels are fixed boundary values; each hole relaxes toward the mean
    of its in-bounds 4-neighbours until the largest update drops below
    ``tol`` codes or ``max_sweeps`` is reached.
    """
    codes = target.codes.astype(np.float64)
    holes = codes == 0
    if holes.all():
        raise ValueError("raster has no valid pixels to diffuse from")
    if not holes.any():
        return target

    h, w = codes.shape
    field = codes.copy()
    field[holes] = codes[~holes].mean()

    # neighbour counts are fixed by geometry
    ones = np.ones_like(field)
    counts = np.zeros_like(field)
    counts[1:, :] += ones[:-1, :]
    counts[:-1, :] += ones[1:, :]
    counts[:, 1:] += ones[:, :-1]
    counts[:, :-1] += ones[:, 1:]

    acc = np.empty_like(field)
    for _ in range(max_sweeps):
        acc.fill(0.0)
        acc[1:, :] += field[:-1, :]
        acc[:-1, :] += field[1:, :]
        acc[:, 1:] += field[:, :-1]
        acc[:, :-1] += field[:, 1:]
        update = acc[holes] / counts[holes]
        change = np.max(np.abs(update - field[holes]))
        field[holes] = update
        if change < tol:
            break

    out = np.floor(field + 0.5)
    out = np.clip(out, 1, 65535)
    out[~holes] = codes[~holes]
    return DisparityRaster(out.astype(np.uint16))
