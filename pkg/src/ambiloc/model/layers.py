"""Network layers as forward/backward function pairs over numpy arrays.

Activations are laid out (batch, time, frequency, channels) for the
convolutional stack and (batch, time, width) afterwards. Each forward
returns (output, cache); the matching backward consumes the cache and the
upstream gradient. Convolutions run as one im2col matrix product; their
input gradient is accumulated as one shifted product per kernel tap, which
keeps every matrix operand contiguous.
"""

from __future__ import annotations

import numpy as np


def sigmoid(x: np.ndarray) -> np.ndarray:
    # evaluate on the side that keeps exp() bounded
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _im2col(xpad: np.ndarray, kernel: int) -> np.ndarray:
    """Extract all kernel x kernel patches as rows of a contiguous matrix."""
    b, tp, fp, c = xpad.shape
    t = tp - kernel + 1
    f = fp - kernel + 1
    s0, s1, s2, s3 = xpad.strides
    view = np.lib.stride_tricks.as_strided(
        xpad,
        shape=(b, t, f, kernel, kernel, c),
        strides=(s0, s1, s2, s1, s2, s3),
        writeable=False,
    )
    return view.reshape(b * t * f, kernel * kernel * c)


def conv2d_forward(
    x: np.ndarray, w: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, tuple]:
    """Same-padded 2D convolution; w is (k, k, in_channels, out_channels)."""
    kernel = w.shape[0]
    pad = kernel // 2
    xpad = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    cols = _im2col(xpad, kernel)
    y = cols @ w.reshape(-1, w.shape[-1])
    y += b
    bsz, t, f, _ = x.shape
    return y.reshape(bsz, t, f, w.shape[-1]), (cols, x.shape)


def conv2d_backward(
    dy: np.ndarray, w: np.ndarray, cache: tuple
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    cols, xshape = cache
    bsz, t, f, cin = xshape
    kernel = w.shape[0]
    pad = kernel // 2
    dymat = dy.reshape(-1, w.shape[-1])
    dw = (cols.T @ dymat).reshape(w.shape)
    db = dymat.sum(axis=0)
    dxpad = np.zeros((bsz, t + 2 * pad, f + 2 * pad, cin), dtype=dy.dtype)
    for ki in range(kernel):
        for kj in range(kernel):
            dxpad[:, ki : ki + t, kj : kj + f, :] += dy @ w[ki, kj].T
    dx = dxpad[:, pad : pad + t, pad : pad + f, :]
    return dx, dw, db


def relu_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # np.maximum keeps NaN so a diverged run surfaces in the loss
    mask = x > 0
    return np.maximum(x, 0), mask


def relu_backward(dy: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return np.where(mask, dy, 0)


def maxpool_freq_forward(x: np.ndarray, pool: int) -> tuple[np.ndarray, tuple]:
    """Max over non-overlapping frequency windows; remainder bins dropped."""
    bsz, t, f, c = x.shape
    fo = f // pool
    windows = x[:, :, : fo * pool, :].reshape(bsz, t, fo, pool, c)
    idx = windows.argmax(axis=3)
    y = np.take_along_axis(windows, idx[:, :, :, None, :], axis=3)[:, :, :, 0, :]
    return y, (idx, x.shape, pool)


def maxpool_freq_backward(dy: np.ndarray, cache: tuple) -> np.ndarray:
    idx, xshape, pool = cache
    bsz, t, f, c = xshape
    fo = f // pool
    scattered = np.zeros((bsz, t, fo, pool, c), dtype=dy.dtype)
    np.put_along_axis(scattered, idx[:, :, :, None, :], dy[:, :, :, None, :], axis=3)
    dx = np.zeros(xshape, dtype=dy.dtype)
    dx[:, :, : fo * pool, :] = scattered.reshape(bsz, t, fo * pool, c)
    return dx


def lstm_forward(
    x: np.ndarray,
    w: np.ndarray,
    u: np.ndarray,
    b: np.ndarray,
    reverse: bool = False,
) -> tuple[np.ndarray, tuple]:
    """One LSTM direction over the time axis of x (batch, time, width).

    Gate blocks in w, u, b are ordered input, forget, cell, output.
    """
    bsz, steps, width = x.shape
    hidden = u.shape[0]
    order = range(steps - 1, -1, -1) if reverse else range(steps)

    zx = (x.reshape(-1, width) @ w).reshape(bsz, steps, 4 * hidden) + b
    h = np.zeros((bsz, hidden), dtype=x.dtype)
    c = np.zeros((bsz, hidden), dtype=x.dtype)
    hs = np.empty((bsz, steps, hidden), dtype=x.dtype)
    gates = np.empty((bsz, steps, 4 * hidden), dtype=x.dtype)
    tanh_c = np.empty((bsz, steps, hidden), dtype=x.dtype)
    h_prev = np.empty((bsz, steps, hidden), dtype=x.dtype)
    c_prev = np.empty((bsz, steps, hidden), dtype=x.dtype)

    for step in order:
        h_prev[:, step] = h
        c_prev[:, step] = c
        z = zx[:, step] + h @ u
        gi = sigmoid(z[:, :hidden])
        gf = sigmoid(z[:, hidden : 2 * hidden])
        gg = np.tanh(z[:, 2 * hidden : 3 * hidden])
        go = sigmoid(z[:, 3 * hidden :])
        c = gf * c + gi * gg
        tc = np.tanh(c)
        h = go * tc
        gates[:, step, :hidden] = gi
        gates[:, step, hidden : 2 * hidden] = gf
        gates[:, step, 2 * hidden : 3 * hidden] = gg
        gates[:, step, 3 * hidden :] = go
        tanh_c[:, step] = tc
        hs[:, step] = h

    cache = (x, gates, tanh_c, h_prev, c_prev, tuple(order))
    return hs, cache


def lstm_backward(
    dh_out: np.ndarray, w: np.ndarray, u: np.ndarray, cache: tuple
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    x, gates, tanh_c, h_prev, c_prev, order = cache
    bsz, steps, width = x.shape
    hidden = u.shape[0]

    dz_all = np.empty((bsz, steps, 4 * hidden), dtype=dh_out.dtype)
    du = np.zeros_like(u)
    dh_carry = np.zeros((bsz, hidden), dtype=dh_out.dtype)
    dc_carry = np.zeros((bsz, hidden), dtype=dh_out.dtype)

    for step in reversed(order):
        gi = gates[:, step, :hidden]
        gf = gates[:, step, hidden : 2 * hidden]
        gg = gates[:, step, 2 * hidden : 3 * hidden]
        go = gates[:, step, 3 * hidden :]
        tc = tanh_c[:, step]

        dh = dh_out[:, step] + dh_carry
        dc = dc_carry + dh * go * (1.0 - tc * tc)
        dz = dz_all[:, step]
        dz[:, :hidden] = dc * gg * gi * (1.0 - gi)
        dz[:, hidden : 2 * hidden] = dc * c_prev[:, step] * gf * (1.0 - gf)
        dz[:, 2 * hidden : 3 * hidden] = dc * gi * (1.0 - gg * gg)
        dz[:, 3 * hidden :] = dh * tc * go * (1.0 - go)
        du += h_prev[:, step].T @ dz
        dh_carry = dz @ u.T
        dc_carry = dc * gf

    dzmat = dz_all.reshape(-1, 4 * hidden)
    dw = x.reshape(-1, width).T @ dzmat
    db = dzmat.sum(axis=0)
    dx = (dzmat @ w.T).reshape(bsz, steps, width)
    return dx, dw, du, db


def dense_forward(
    x: np.ndarray, w: np.ndarray, b: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    return x @ w + b, x


def dense_backward(
    dy: np.ndarray, w: np.ndarray, x: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    width = x.shape[-1]
    out = w.shape[-1]
    dw = x.reshape(-1, width).T @ dy.reshape(-1, out)
    db = dy.reshape(-1, out).sum(axis=0)
    dx = dy @ w.T
    return dx, dw, db


def bce_with_logits(
    logits: np.ndarray, targets: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean binary cross-entropy of logistic(logits) against {0,1} targets.

    Computed from logits directly so large magnitudes cannot overflow:
    loss = max(z, 0) - y*z + log(1 + exp(-|z|)).
    """
    z = logits
    elems = np.maximum(z, 0) - targets * z + np.log1p(np.exp(-np.abs(z)))
    loss = float(elems.mean())
    dz = (sigmoid(z) - targets) / z.size
    return loss, dz.astype(z.dtype, copy=False)
