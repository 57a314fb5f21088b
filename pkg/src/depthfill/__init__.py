"""Depth-map completion toolkit: disparity codec, hole metrics, prediction-based
fill-in, iterative self-training refinement and a learned second-stage corrector."""

from depthfill.raster import (
    CameraRig,
    DepthMap,
    DisparityRaster,
    RgbImage,
    decode_disparity,
    depth_to_disparity,
    disparity_to_depth,
    encode_disparity,
    raster_to_depth_map,
)

__version__ = "0.1.0"

__all__ = [
    "CameraRig",
    "DepthMap",
    "DisparityRaster",
    "RgbImage",
    "decode_disparity",
    "depth_to_disparity",
    "disparity_to_depth",
    "encode_disparity",
    "raster_to_depth_map",
]
