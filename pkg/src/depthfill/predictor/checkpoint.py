"""Portable model checkpoints.

Byte layout (all little-endian)::

    offset  size  field
    0       4     magic b"DFCK"
    4       2     format version (uint16, currently 1)
    6       2     in_channels (uint16)
    8       4     input width (uint32)
    12      4     input height (uint32)
    16      2     levels (uint16)
    18      2     base_channels (uint16)
    20      8     seed (uint64)
    28      8     parameter count (uint64)
    36      8*n   parameters, float64, in layer order

Layer order and per-layer (weight, bias) shapes follow ``layer_shapes``.
"""

import struct

import numpy as np

from depthfill.predictor.network import NetworkSpec, PredictorModel, parameter_count

MAGIC = b"DFCK"
VERSION = 1
_HEADER = struct.Struct("<4sHHIIHHQQ")


class CheckpointError(ValueError):
    pass


def to_bytes(model: PredictorModel) -> bytes:
    s = model.spec
    head = _HEADER.pack(
        MAGIC, VERSION, s.in_channels, s.width, s.height, s.levels, s.base_channels, s.seed, model.parameters.size
    )
    return head + model.parameters.astype("<f8").tobytes()


def from_bytes(blob: bytes) -> PredictorModel:
    if len(blob) < _HEADER.size:
        raise CheckpointError("checkpoint truncated before end of header")
    magic, version, cin, w, h, levels, base, seed, count = _HEADER.unpack_from(blob)
    if magic != MAGIC:
        raise CheckpointError(f"bad magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    spec = NetworkSpec(input_size=(w, h), levels=levels, base_channels=base, seed=seed, in_channels=cin)
    if count != parameter_count(spec):
        raise CheckpointError(f"parameter count {count} does not match spec ({parameter_count(spec)})")
    body = blob[_HEADER.size:]
    if len(body) != 8 * count:
        raise CheckpointError(f"expected {8 * count} parameter bytes, got {len(body)}")
    return PredictorModel(spec, np.frombuffer(body, dtype="<f8").astype(np.float64))


def save(model: PredictorModel, path) -> None:
    with open(path, "wb") as fh:
        fh.write(to_bytes(model))


def load(path) -> PredictorModel:
    with open(path, "rb") as fh:
        return from_bytes(fh.read())
