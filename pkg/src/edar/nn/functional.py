"""Layer primitives on NCHW float arrays, each with an explicit backward.

Convolutions use zero "same" padding and stride 1. Backward functions take the
upstream gradient plus whatever the forward consumed and return gradients in
the order of the forward's array arguments.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LEAKY_SLOPE = 0.01


def _check_conv(x, w, b):
    if x.ndim != 4:
        raise ValueError(f"conv input must be NCHW, got shape {x.shape}")
    if w.ndim != 4 or w.shape[2] != w.shape[3] or w.shape[2] not in (1, 3):
        raise ValueError(f"conv weights must be (Cout, Cin, k, k) with k in {{1, 3}}, got {w.shape}")
    if w.shape[1] != x.shape[1]:
        raise ValueError(f"conv expects {w.shape[1]} input channels, got {x.shape[1]}")
    if b.shape != (w.shape[0],):
        raise ValueError(f"conv bias must have shape ({w.shape[0]},), got {b.shape}")


def conv2d(x, w, b):
    _check_conv(x, w, b)
    n, c, h, wd = x.shape
    cout = w.shape[0]
    if w.shape[2] == 1:
        y = np.matmul(w[:, :, 0, 0], x.reshape(n, c, h * wd))
        y = y.reshape(n, cout, h, wd)
    else:
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        win = sliding_window_view(xp, (3, 3), axis=(2, 3))  # n, c, h, w, 3, 3
        y = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
        y = np.ascontiguousarray(y)
    y += b[None, :, None, None]
    return y


def conv2d_backward(g, x, w):
    n, c, h, wd = x.shape
    cout = w.shape[0]
    db = g.sum(axis=(0, 2, 3))
    if w.shape[2] == 1:
        g2 = g.reshape(n, cout, h * wd)
        x2 = x.reshape(n, c, h * wd)
        dw = np.tensordot(g2, x2, axes=([0, 2], [0, 2]))[:, :, None, None]
        dx = np.matmul(w[:, :, 0, 0].T, g2).reshape(x.shape)
    else:
        xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        win = sliding_window_view(xp, (3, 3), axis=(2, 3))
        dw = np.tensordot(g, win, axes=([0, 2, 3], [0, 2, 3]))
        gp = np.pad(g, ((0, 0), (0, 0), (1, 1), (1, 1)))
        gwin = sliding_window_view(gp, (3, 3), axis=(2, 3))
        dx = np.tensordot(gwin, w[:, :, ::-1, ::-1], axes=([1, 4, 5], [0, 2, 3]))
        dx = np.ascontiguousarray(dx.transpose(0, 3, 1, 2))
    return dx, dw, db


def dwconv2d(x, w, b):
    """Depthwise 3x3: channel ``c`` of the output only sees channel ``c`` of the input."""
    if x.ndim != 4 or w.shape != (x.shape[1], 3, 3) or b.shape != (x.shape[1],):
        raise ValueError(f"depthwise conv shape mismatch: x {x.shape}, w {w.shape}, b {b.shape}")
    n, c, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    y = np.zeros_like(x, dtype=np.result_type(x, w))
    for i in range(3):
        for j in range(3):
            y += w[None, :, i, j, None, None] * xp[:, :, i:i + h, j:j + wd]
    y += b[None, :, None, None]
    return y


def dwconv2d_backward(g, x, w):
    n, c, h, wd = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    dxp = np.zeros_like(xp, dtype=g.dtype)
    dw = np.empty_like(w, dtype=g.dtype)
    for i in range(3):
        for j in range(3):
            dw[:, i, j] = np.einsum("nchw,nchw->c", g, xp[:, :, i:i + h, j:j + wd])
            dxp[:, :, i:i + h, j:j + wd] += w[None, :, i, j, None, None] * g
    return dxp[:, :, 1:-1, 1:-1], dw, g.sum(axis=(0, 2, 3))


def _pool_windows(x):
    n, c, h, w = x.shape
    h2, w2 = -(-h // 2), -(-w // 2)
    xp = np.full((n, c, 2 * h2, 2 * w2), -np.inf, dtype=x.dtype)
    xp[:, :, :h, :w] = x
    win = xp.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    return win


def maxpool2(x):
    """2x2 max pooling, stride 2, ceil mode (odd edges padded with -inf)."""
    win = _pool_windows(x)
    return win.max(axis=-1)


def maxpool2_backward(g, x):
    n, c, h, w = x.shape
    win = _pool_windows(x)
    idx = win.argmax(axis=-1)  # first maximum receives the gradient
    gw = np.zeros(win.shape, dtype=g.dtype)
    np.put_along_axis(gw, idx[..., None], g[..., None], axis=-1)
    h2, w2 = g.shape[2], g.shape[3]
    full = gw.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, 2 * h2, 2 * w2)
    return np.ascontiguousarray(full[:, :, :h, :w])


def upsample2(x):
    return x.repeat(2, axis=2).repeat(2, axis=3)


def upsample2_backward(g):
    n, c, h, w = g.shape
    return g.reshape(n, c, h // 2, 2, w // 2, 2).sum(axis=(3, 5))


def fully_connected(x, w, b):
    """``x`` (N, F_in), ``w`` (F_out, F_in), ``b`` (F_out,)."""
    if x.ndim != 2 or w.ndim != 2 or w.shape[1] != x.shape[1] or b.shape != (w.shape[0],):
        raise ValueError(f"fully connected shape mismatch: x {x.shape}, w {w.shape}, b {b.shape}")
    return x @ w.T + b


def fully_connected_backward(g, x, w):
    return g @ w, g.T @ x, g.sum(axis=0)


def relu(x):
    return np.maximum(x, 0.0)


def relu_backward(g, x):
    return g * (x > 0)


def leaky_relu(x, slope=LEAKY_SLOPE):
    return np.where(x > 0, x, slope * x)


def leaky_relu_backward(g, x, slope=LEAKY_SLOPE):
    return np.where(x > 0, g, slope * g)


def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid_backward(g, y):
    """Takes the forward *output* ``y``."""
    return g * y * (1.0 - y)


def softmax_channels(x):
    z = x - x.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_channels_backward(g, y):
    """Takes the forward *output* ``y``."""
    return y * (g - (g * y).sum(axis=1, keepdims=True))


def concat_channels(a, b):
    if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
        raise ValueError(f"cannot concatenate {a.shape} and {b.shape} along channels")
    return np.concatenate([a, b], axis=1)


def add_skip(a, b):
    if a.shape != b.shape:
        raise ValueError(f"skip addition needs identical shapes, got {a.shape} and {b.shape}")
    return a + b
