"""A small U-Net regressor with hand-written backpropagation.

Layout for ``levels = L`` and ``base_channels = c`` (channels ``c_l = c * 2**l``):

* encoder level ``l``: 3x3 conv -> ReLU, kept as a skip, then 2x2 max-pool
* bottleneck: 3x3 conv -> ReLU with ``c_L`` channels
* decoder level ``l`` (from ``L-1`` down to 0): 2x nearest upsample,
  concatenate the level-``l`` skip, 3x3 conv -> ReLU
* head: 1x1 conv to a single linear output channel

All parameters live in one flat float64 vector; per-layer weights and biases
are views into it, in the order given by :func:`layer_shapes`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from depthfill.predictor import layers as L


class SpecError(ValueError):
    pass


@dataclass(frozen=True)
class NetworkSpec:
    input_size: tuple[int, int] = (64, 48)  # (width, height)
    levels: int = 2
    base_channels: int = 8
    seed: int = 0
    in_channels: int = 3

    def __post_init__(self):
        object.__setattr__(self, "input_size", tuple(int(v) for v in self.input_size))
        if len(self.input_size) != 2:
            raise SpecError("input_size must be (width, height)")
        if self.levels < 1:
            raise SpecError("levels must be >= 1")
        if self.base_channels < 1:
            raise SpecError("base_channels must be >= 1")
        if self.in_channels < 1:
            raise SpecError("in_channels must be >= 1")
        if self.seed < 0:
            raise SpecError("seed must be non-negative")
        step = 2 ** self.levels
        w, h = self.input_size
        if w <= 0 or h <= 0 or w % step or h % step:
            raise SpecError(f"input size {w}x{h} is not divisible by 2**levels = {step}")

    @property
    def width(self) -> int:
        return self.input_size[0]

    @property
    def height(self) -> int:
        return self.input_size[1]


def layer_shapes(spec: NetworkSpec) -> list[tuple[str, tuple[int, ...], tuple[int]]]:
    c = [spec.base_channels * 2 ** l for l in range(spec.levels + 1)]
    shapes = []
    cin = spec.in_channels
    for l in range(spec.levels):
        shapes.append((f"enc{l}", (c[l], cin, 3, 3), (c[l],)))
        cin = c[l]
    shapes.append(("bottleneck", (c[-1], cin, 3, 3), (c[-1],)))
    for l in reversed(range(spec.levels)):
        shapes.append((f"dec{l}", (c[l], c[l + 1] + c[l], 3, 3), (c[l],)))
    shapes.append(("head", (1, c[0], 1, 1), (1,)))
    return shapes


def parameter_count(spec: NetworkSpec) -> int:
    return sum(int(np.prod(w)) + int(np.prod(b)) for _, w, b in layer_shapes(spec))


def unpack(spec: NetworkSpec, flat: np.ndarray) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Per-layer ``(weight, bias)`` views into a flat parameter vector."""
    views = {}
    pos = 0
    for name, wshape, bshape in layer_shapes(spec):
        nw, nb = int(np.prod(wshape)), int(np.prod(bshape))
        views[name] = (flat[pos:pos + nw].reshape(wshape), flat[pos + nw:pos + nw + nb].reshape(bshape))
        pos += nw + nb
    return views


@dataclass(eq=False)
class PredictorModel:
    spec: NetworkSpec
    parameters: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.parameters = np.ascontiguousarray(self.parameters, dtype=np.float64)
        if self.parameters.shape != (parameter_count(self.spec),):
            raise SpecError(
                f"expected {parameter_count(self.spec)} parameters, got {self.parameters.size}"
            )
        if not np.all(np.isfinite(self.parameters)):
            raise ValueError("model parameters must be finite")

    def copy(self) -> "PredictorModel":
        return PredictorModel(self.spec, self.parameters.copy())

    def layers(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        return unpack(self.spec, self.parameters)


def init_model(spec: NetworkSpec) -> PredictorModel:
    """Uniform ``+-sqrt(1/fan_in)`` weights and biases drawn from ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    chunks = []
    for _, wshape, bshape in layer_shapes(spec):
        bound = np.sqrt(1.0 / np.prod(wshape[1:]))
        chunks.append(rng.uniform(-bound, bound, size=int(np.prod(wshape))))
        chunks.append(rng.uniform(-bound, bound, size=int(np.prod(bshape))))
    return PredictorModel(spec, np.concatenate(chunks))


def forward_batch(spec: NetworkSpec, flat: np.ndarray, x: np.ndarray, keep_cache: bool = False):
    """Run the network on ``x`` of shape (N, in_channels, H, W); returns (N, H, W)."""
    if x.shape[1:] != (spec.in_channels, spec.height, spec.width):
        raise SpecError(
            f"input shape {x.shape[1:]} does not match network ({spec.in_channels}, {spec.height}, {spec.width})"
        )
    p = unpack(spec, flat)
    cache = []
    skips = []
    h = x
    for l in range(spec.levels):
        h, cc = L.conv_forward(h, *p[f"enc{l}"])
        h, rc = L.relu_forward(h)
        skips.append(h)
        h, pc = L.maxpool_forward(h)
        cache.append((cc, rc, pc))
    h, cc = L.conv_forward(h, *p["bottleneck"])
    h, rc = L.relu_forward(h)
    cache.append((cc, rc))
    for l in reversed(range(spec.levels)):
        up = L.upsample_forward(h)
        h = np.concatenate([up, skips[l]], axis=1)
        h, cc = L.conv_forward(h, *p[f"dec{l}"])
        h, rc = L.relu_forward(h)
        cache.append((cc, rc, up.shape[1]))
    out, hc = L.conv_forward(h, *p["head"])
    cache.append(hc)
    out = out[:, 0]
    return (out, cache) if keep_cache else out


def backward_batch(spec: NetworkSpec, cache, dout: np.ndarray) -> np.ndarray:
    """Gradient of the loss w.r.t. the flat parameters, given dL/d(output)."""
    grad = np.zeros(parameter_count(spec))
    g = unpack(spec, grad)

    def store(name, dw, db):
        gw, gb = g[name]
        gw += dw
        gb += db

    levels = spec.levels
    enc_cache = cache[:levels]
    bott_cache = cache[levels]
    dec_cache = cache[levels + 1:levels + 1 + levels]
    head_cache = cache[-1]

    dh, dw, db = L.conv_backward(dout[:, None], head_cache)
    store("head", dw, db)
    dskips = {}
    # decoder ran from level L-1 down to 0, so unwind from level 0 up
    for l in range(levels):
        cc, rc, n_up = dec_cache[levels - 1 - l]
        dh = L.relu_backward(dh, rc)
        dh, dw, db = L.conv_backward(dh, cc)
        store(f"dec{l}", dw, db)
        dskips[l] = dh[:, n_up:]
        dh = L.upsample_backward(dh[:, :n_up])
    cc, rc = bott_cache
    dh = L.relu_backward(dh, rc)
    dh, dw, db = L.conv_backward(dh, cc)
    store("bottleneck", dw, db)
    for l in reversed(range(levels)):
        cc, rc, pc = enc_cache[l]
        dh = L.maxpool_backward(dh, pc) + dskips[l]
        dh = L.relu_backward(dh, rc)
        dh, dw, db = L.conv_backward(dh, cc)
        store(f"enc{l}", dw, db)
    return grad
