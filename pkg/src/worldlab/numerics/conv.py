"""2-D convolution via im2col + matmul, for the small evaluation networks."""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError
from .tensor import Tensor, _node, as_tensor


def conv2d(x, w, bias=None, stride=1, padding=0):
    """Cross-correlate x (N, Cin, H, W) with w (Cout, Cin, kh, kw).

    Returns (N, Cout, OH, OW). Padding is symmetric zeros; stride applies to
    both spatial axes.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.data.ndim != 4 or w.data.ndim != 4:
        raise ShapeError(f"conv2d: x {x.data.shape}, w {w.data.shape}")
    n, cin, h, width = x.data.shape
    cout, cin_w, kh, kw = w.data.shape
    if cin != cin_w:
        raise ShapeError(f"conv2d channels: x {x.data.shape}, w {w.data.shape}")
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (width + 2 * padding - kw) // stride + 1
    if oh < 1 or ow < 1:
        raise ShapeError(f"conv2d output would be empty: x {x.data.shape}, w {w.data.shape}, stride {stride}, padding {padding}")

    if padding:
        xp = np.zeros((n, cin, h + 2 * padding, width + 2 * padding), dtype=x.data.dtype)
        xp[:, :, padding : padding + h, padding : padding + width] = x.data
    else:
        xp = x.data

    # (N, Cin*kh*kw, OH*OW) patch matrix, kernel offsets in fixed (a, b) order
    cols = np.empty((n, cin * kh * kw, oh * ow), dtype=x.data.dtype)
    slot = 0
    for a in range(kh):
        for b in range(kw):
            block = xp[:, :, a : a + oh * stride : stride, b : b + ow * stride : stride]
            cols[:, slot * cin : (slot + 1) * cin, :] = block.reshape(n, cin, oh * ow)
            slot += 1

    w2 = w.data.transpose(2, 3, 1, 0).reshape(cin * kh * kw, cout)  # matches cols' (a, b, c) layout
    data = np.matmul(w2.T, cols).reshape(n, cout, oh, ow)

    def backward(g):
        gflat = g.reshape(n, cout, oh * ow)
        gw2 = np.matmul(cols, gflat.transpose(0, 2, 1)).sum(axis=0)  # (Cin*kh*kw, Cout)
        gw = gw2.reshape(kh, kw, cin, cout).transpose(3, 2, 0, 1)
        gcols = np.matmul(w2, gflat)  # (N, Cin*kh*kw, OH*OW)
        gxp = np.zeros_like(xp)
        slot2 = 0
        for a in range(kh):
            for b in range(kw):
                piece = gcols[:, slot2 * cin : (slot2 + 1) * cin, :].reshape(n, cin, oh, ow)
                gxp[:, :, a : a + oh * stride : stride, b : b + ow * stride : stride] += piece
                slot2 += 1
        gx = gxp[:, :, padding : padding + h, padding : padding + width] if padding else gxp
        return gx, gw

    out = _node(data, (x, w), backward)
    if bias is not None:
        bias = as_tensor(bias)
        if bias.data.shape != (cout,):
            raise ShapeError(f"conv2d bias: {bias.data.shape}, expected ({cout},)")
        out = out + bias.reshape((1, cout, 1, 1))
    return out
