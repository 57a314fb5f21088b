"""Iterative self-training refinement and the second-stage hole corrector.

Each refinement pass trains a freshly initialised predictor on the current
targets, predicts every image, fills the target holes with the prediction
and adopts the filled rasters as the next pass's targets.
"""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

from depthfill.inpaint import fill_missing, fit_prediction
from depthfill.metrics import UndefinedMetricError, corrected_pixels, invalid_count, pooled_accuracy
from depthfill.predictor import (
    NetworkSpec,
    PredictorModel,
    TrainConfig,
    TrainingDivergedError,
    init_model,
    predict,
    train,
)
from depthfill.raster import DisparityRaster, RgbImage

log = logging.getLogger(__name__)

REPORT_FIELDS = ("iteration", "accuracy_pct", "corrected_pct", "remaining_invalid_avg", "final_loss")


class RefinementDivergedError(RuntimeError):
    def __init__(self, iteration: int, cause: TrainingDivergedError):
        super().__init__(f"iteration {iteration}: {cause}")
        self.iteration = iteration


@dataclass(frozen=True)
class RefineConfig:
    iterations: int = 5
    predictor_spec: NetworkSpec = field(default_factory=NetworkSpec)
    train_cfg: TrainConfig = field(default_factory=TrainConfig)
    eval_split_fraction: float = 0.2

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0 < self.eval_split_fraction < 1:
            raise ValueError("eval_split_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class IterationReport:
    iteration: int
    accuracy_pct: Optional[float]
    corrected_pct: Optional[float]
    remaining_invalid_avg: float
    final_loss: float

    def to_dict(self) -> dict:
        return asdict(self)


def default_eval_indices(n: int, fraction: float) -> list[int]:
    """The last ``round(n * fraction)`` images, keeping at least one on each side."""
    if n < 2:
        return []
    k = min(max(int(round(n * fraction)), 1), n - 1)
    return list(range(n - k, n))


def iterative_refine(
    dataset: Sequence[tuple[RgbImage, DisparityRaster]],
    cfg: RefineConfig,
    eval_indices: Optional[Sequence[int]] = None,
    on_iteration: Optional[Callable[[int, PredictorModel, list[DisparityRaster], IterationReport], None]] = None,
) -> tuple[list[tuple[RgbImage, DisparityRaster]], list[IterationReport]]:
    """Run ``cfg.iterations`` passes of train -> predict -> fill -> retarget.

    Held-out images (``eval_indices``, by default the tail given by
    ``cfg.eval_split_fraction``) are filled like the others but never
    trained on; the reported accuracy compares the pass's predictions with
    their current targets.  ``corrected_pct`` counts training-split pixels
    that were invalid in the original rasters and are valid after the pass;
    it is None when the originals have no holes.  ``on_iteration`` is called
    after each pass with the trained model and the new targets.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    rgbs = [rgb for rgb, _ in dataset]
    original = [r for _, r in dataset]
    shape = original[0].shape
    if any(r.shape != shape for r in original):
        raise ValueError("dataset rasters differ in size")
    h, w = shape

    n = len(dataset)
    eval_set = set(default_eval_indices(n, cfg.eval_split_fraction) if eval_indices is None else eval_indices)
    train_idx = [i for i in range(n) if i not in eval_set]
    eval_idx = sorted(eval_set)
    if not train_idx:
        raise ValueError("no training images left after the evaluation split")

    targets = list(original)
    reports = []
    for it in range(1, cfg.iterations + 1):
        spec = replace(cfg.predictor_spec, seed=cfg.predictor_spec.seed + it - 1)
        tcfg = replace(cfg.train_cfg, seed=cfg.train_cfg.seed + it - 1)
        try:
            model, trace = train(init_model(spec), [(rgbs[i], targets[i]) for i in train_idx], tcfg)
        except TrainingDivergedError as exc:
            raise RefinementDivergedError(it, exc) from exc

        preds = [predict(model, rgb, (w, h)) for rgb in rgbs]
        acc = None
        if eval_idx:
            try:
                acc = pooled_accuracy([preds[i] for i in eval_idx], [targets[i] for i in eval_idx]).accuracy_pct
            except UndefinedMetricError:
                acc = None
        filled = [fill_missing(t, p).filled for t, p in zip(targets, preds)]
        try:
            corrected = corrected_pixels([original[i] for i in train_idx], [filled[i] for i in train_idx]).corrected_pct
        except UndefinedMetricError:
            corrected = None
        remaining = sum(invalid_count(filled[i]) for i in train_idx) / len(train_idx)
        report = IterationReport(it, acc, corrected, remaining, trace[-1])
        log.info("iteration %d: accuracy %s corrected %s remaining %.1f", it, acc, corrected, remaining)
        reports.append(report)
        targets = filled
        if on_iteration is not None:
            on_iteration(it, model, targets, report)
    return list(zip(rgbs, targets)), reports


def train_corrector(
    pairs: Sequence[tuple[DisparityRaster, DisparityRaster]], spec: NetworkSpec, cfg: TrainConfig
) -> PredictorModel:
    """Train the network to map a holed raster (one input channel) to its refined version."""
    if len(pairs) == 0:
        raise ValueError("no training pairs")
    for holed, refined in pairs:
        if holed.shape != refined.shape:
            raise ValueError("holed and refined rasters differ in size")
    model = init_model(replace(spec, in_channels=1))
    trained, _ = train(model, list(pairs), cfg)
    return trained


def correct(model: PredictorModel, holed: DisparityRaster) -> DisparityRaster:
    """One forward pass, then fill only the holes of ``holed`` with it."""
    pred = predict(model, holed, (holed.width, holed.height))
    return fill_missing(holed, fit_prediction(pred, holed)).filled


def timed_correct(model: PredictorModel, holed: DisparityRaster) -> tuple[DisparityRaster, float]:
    """``correct`` plus its wall-clock time in milliseconds."""
    t0 = time.perf_counter()
    out = correct(model, holed)
    return out, 1000.0 * (time.perf_counter() - t0)
