"""Forward and backward passes for the few layer types the network needs.

Tensors are float64 in NCHW layout.  Each ``*_forward`` returns the output and
a cache consumed by the matching ``*_backward``.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv_forward(x, weight, bias):
    """Stride-1 'same' convolution with an odd square kernel (im2col + matmul)."""
    n, c, h, w = x.shape
    f, _, k, _ = weight.shape
    pad = k // 2
    if pad:
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
        win = sliding_window_view(xp, (k, k), axis=(2, 3))  # n, c, h, w, k, k
        cols = win.transpose(0, 1, 4, 5, 2, 3).reshape(n, c * k * k, h * w)
    else:
        cols = x.reshape(n, c, h * w)
    out = np.matmul(weight.reshape(f, -1), cols) + bias[None, :, None]
    return out.reshape(n, f, h, w), (x.shape, cols, weight)


def conv_backward(dout, cache):
    (n, c, h, w), cols, weight = cache
    f, _, k, _ = weight.shape
    d = dout.reshape(n, f, h * w)
    dweight = np.tensordot(d, cols, axes=([0, 2], [0, 2])).reshape(weight.shape)
    dbias = d.sum(axis=(0, 2))
    dcols = np.matmul(weight.reshape(f, -1).T, d)
    if k == 1:
        return dcols.reshape(n, c, h, w), dweight, dbias
    pad = k // 2
    dcols = dcols.reshape(n, c, k, k, h, w)
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad))
    for i in range(k):
        for j in range(k):
            dxp[:, :, i:i + h, j:j + w] += dcols[:, :, i, j]
    return dxp[:, :, pad:pad + h, pad:pad + w], dweight, dbias


def relu_forward(x):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout, mask):
    return dout * mask


def maxpool_forward(x):
    """2x2 max pooling, stride 2.  Ties route the gradient to the first maximum."""
    n, c, h, w = x.shape
    blocks = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = np.argmax(blocks, axis=-1)[..., None]
    out = np.take_along_axis(blocks, idx, axis=-1)[..., 0]
    return out, (x.shape, idx)


def maxpool_backward(dout, cache):
    (n, c, h, w), idx = cache
    d = np.zeros((n, c, h // 2, w // 2, 4))
    np.put_along_axis(d, idx, dout[..., None], axis=-1)
    return d.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w)


def upsample_forward(x):
    """Nearest-neighbour 2x upsampling."""
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample_backward(dout):
    n, c, h, w = dout.shape
    return dout.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))
