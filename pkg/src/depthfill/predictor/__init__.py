"""Trainable encoder-decoder that regresses disparity codes per pixel."""

from depthfill.predictor.checkpoint import CheckpointError, load, save
from depthfill.predictor.network import (
    NetworkSpec,
    PredictorModel,
    SpecError,
    init_model,
    layer_shapes,
    parameter_count,
)
from depthfill.predictor.training import (
    EmptyMaskError,
    TrainConfig,
    TrainingDivergedError,
    dataset_loss,
    forward,
    loss_mse,
    predict,
    quantize_output,
    train,
)

__all__ = [
    "CheckpointError",
    "EmptyMaskError",
    "NetworkSpec",
    "PredictorModel",
    "SpecError",
    "TrainConfig",
    "TrainingDivergedError",
    "dataset_loss",
    "forward",
    "init_model",
    "layer_shapes",
    "load",
    "loss_mse",
    "parameter_count",
    "predict",
    "quantize_output",
    "save",
    "train",
]
