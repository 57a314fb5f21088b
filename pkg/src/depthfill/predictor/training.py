"""MSE loss, mini-batch gradient descent and raster prediction."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from depthfill.predictor.network import PredictorModel, backward_batch, forward_batch
from depthfill.raster import CODE_MAX, DisparityRaster, RgbImage, encode_codes, resize_nearest

log = logging.getLogger(__name__)

ModelInput = Union[RgbImage, DisparityRaster]


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int, loss: float):
        super().__init__(f"training diverged at epoch {epoch}: loss = {loss}")
        self.epoch = epoch
        self.loss = loss


class EmptyMaskError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 0.05
    batch_size: int = 4
    mask_invalid_targets: bool = False
    seed: int = 0
    momentum: float = 0.9

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must lie in [0, 1)")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")


def to_input(sample: ModelInput, spec) -> np.ndarray:
    """Network input tensor (in_channels, H, W) in [0, 1] at the network resolution."""
    if isinstance(sample, RgbImage):
        arr = resize_nearest(sample.pixels, spec.width, spec.height).astype(np.float64) / 255.0
        arr = arr.transpose(2, 0, 1)
    elif isinstance(sample, DisparityRaster):
        arr = resize_nearest(sample.codes, spec.width, spec.height).astype(np.float64)[None] / CODE_MAX
    else:
        raise TypeError(f"unsupported model input {type(sample).__name__}")
    if arr.shape[0] != spec.in_channels:
        raise ValueError(f"network expects {spec.in_channels} input channels, got {arr.shape[0]}")
    return arr


def normalized_target(target: DisparityRaster, spec) -> np.ndarray:
    return resize_nearest(target.codes, spec.width, spec.height).astype(np.float64) / CODE_MAX


def loss_mse(pred: np.ndarray, target, mask_invalid: bool = False) -> tuple[float, np.ndarray]:
    """Mean squared error against codes scaled to [0, 1], and its gradient.

    ``target`` is a DisparityRaster or an array of raw codes with the same
    shape as ``pred``.  With ``mask_invalid`` the code-0 pixels are left out
    of both the mean and the gradient.
    """
    codes = target.codes if isinstance(target, DisparityRaster) else np.asarray(target)
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != codes.shape:
        raise ValueError(f"prediction shape {pred.shape} does not match target {codes.shape}")
    t = codes.astype(np.float64) / CODE_MAX
    include = codes != 0 if mask_invalid else np.ones(codes.shape, dtype=bool)
    count = int(include.sum())
    if count == 0:
        raise EmptyMaskError("mask excludes every pixel")
    diff = np.where(include, pred - t, 0.0)
    return float(np.sum(diff * diff) / count), 2.0 * diff / count


def forward(model: PredictorModel, sample: ModelInput) -> np.ndarray:
    """Per-pixel output at the network resolution, shape (height, width)."""
    x = to_input(sample, model.spec)[None]
    return forward_batch(model.spec, model.parameters, x)[0]


def quantize_output(values: np.ndarray) -> np.ndarray:
    """Map network outputs (codes / 65535) back to 16-bit disparity codes.

    Real-valued codes below 0.5 round to the invalid code 0; everything else
    is decoded to a disparity and requantized with ``encode_codes``.
    """
    c = np.asarray(values, dtype=np.float64) * CODE_MAX
    invalid = ~np.isfinite(c) | (c < 0.5)
    d = np.where(invalid, np.nan, np.maximum((np.where(invalid, 1.0, c) - 1.0) / 256.0, 0.0))
    return encode_codes(d)


def predict(model: PredictorModel, sample: ModelInput, out_size: tuple[int, int]) -> DisparityRaster:
    codes = quantize_output(forward(model, sample))
    w, h = out_size
    return DisparityRaster(resize_nearest(codes, w, h))


def _stack(dataset, spec, mask_invalid):
    xs = np.stack([to_input(s, spec) for s, _ in dataset])
    codes = np.stack([resize_nearest(t.codes, spec.width, spec.height) for _, t in dataset])
    if mask_invalid and not np.any(codes != 0):
        raise EmptyMaskError("every target pixel is invalid")
    return xs, codes


def dataset_loss(model: PredictorModel, dataset: Sequence[tuple[ModelInput, DisparityRaster]], mask_invalid=False) -> float:
    xs, codes = _stack(dataset, model.spec, mask_invalid)
    out = forward_batch(model.spec, model.parameters, xs)
    return loss_mse(out, codes, mask_invalid)[0]


def train(
    model: PredictorModel, dataset: Sequence[tuple[ModelInput, DisparityRaster]], cfg: TrainConfig
) -> tuple[PredictorModel, list[float]]:
    """Mini-batch gradient descent (optional heavy-ball momentum) on ``loss_mse``.

    Returns a new model and the per-epoch mean batch loss.  The input model
    is not modified.  Batch order is drawn from ``cfg.seed``.
    """
    if len(dataset) == 0:
        raise ValueError("training set is empty")
    spec = model.spec
    xs, codes = _stack(dataset, spec, cfg.mask_invalid_targets)
    params = model.parameters.copy()
    velocity = np.zeros_like(params)
    rng = np.random.default_rng(cfg.seed)
    n = len(dataset)
    trace = []
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        batches = 0
        for start in range(0, n, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            batch_codes = codes[idx]
            if cfg.mask_invalid_targets and not np.any(batch_codes):
                continue
            out, cache = forward_batch(spec, params, xs[idx], keep_cache=True)
            loss, dout = loss_mse(out, batch_codes, cfg.mask_invalid_targets)
            if not np.isfinite(loss):
                raise TrainingDivergedError(epoch, loss)
            grad = backward_batch(spec, cache, dout)
            velocity = cfg.momentum * velocity - cfg.learning_rate * grad
            params = params + velocity
            total += loss
            batches += 1
        mean = total / max(batches, 1)
        if not np.all(np.isfinite(params)):
            raise TrainingDivergedError(epoch, float("nan"))
        trace.append(mean)
        log.debug("epoch %d loss %.6g", epoch, mean)
    return PredictorModel(spec, params), trace
