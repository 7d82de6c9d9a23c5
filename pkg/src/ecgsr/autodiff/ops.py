"""Differentiable operators.

Signal tensors use the (channels, length) layout, optionally with a leading
batch axis: (batch, channels, length). Every operator accepts either form.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import Tensor, as_tensor, make_result


def _unbroadcast(g, shape):
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ----------------------------------------------------------------- elementwise

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return make_result(
        a.data + b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return make_result(
        a.data - b.data, (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    return make_result(
        a.data * b.data, (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def log(x):
    return make_result(np.log(x.data), (x,), lambda g: (g / x.data,))


def relu(x):
    mask = x.data > 0
    return make_result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def prelu(x, a):
    """Leaky rectifier whose negative-side slope ``a`` is a learnable scalar."""
    x, a = as_tensor(x), as_tensor(a)
    neg = x.data < 0
    out = np.where(neg, a.data * x.data, x.data)

    def back(g):
        gx = np.where(neg, a.data * g, g)
        ga = np.sum(g * x.data * neg).reshape(a.shape)
        return gx, ga

    return make_result(out, (x, a), back)


def tanh_(x):
    y = np.tanh(x.data)
    return make_result(y, (x,), lambda g: (g * (1.0 - y * y),))


def _sigmoid(v):
    # split by sign so neither branch overflows
    out = np.empty_like(v)
    pos = v >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-v[pos]))
    e = np.exp(v[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def sigmoid(x):
    y = _sigmoid(x.data)
    return make_result(y, (x,), lambda g: (g * y * (1.0 - y),))


# ------------------------------------------------------------------ structural

def sum_(x, axis=None):
    out = np.sum(x.data, axis=axis)

    def back(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return make_result(out, (x,), back)


def mean(x):
    n = x.data.size
    return make_result(np.mean(x.data), (x,), lambda g: (np.full(x.shape, g / n),))


def reshape(x, shape):
    return make_result(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),))


def transpose(x, axes):
    inverse = np.argsort(axes)
    return make_result(
        np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),)
    )


def flip(x, axis=-1):
    return make_result(np.flip(x.data, axis).copy(), (x,), lambda g: (np.flip(g, axis).copy(),))


def concat(xs, axis=0):
    xs = [as_tensor(x) for x in xs]
    sizes = [x.shape[axis] for x in xs]
    cuts = np.cumsum(sizes)[:-1]
    return make_result(
        np.concatenate([x.data for x in xs], axis=axis), xs,
        lambda g: tuple(np.split(g, cuts, axis=axis)),
    )


def getitem(x, index):
    def back(g):
        gx = np.zeros_like(x.data)
        gx[index] = g
        return (gx,)

    return make_result(x.data[index].copy(), (x,), back)


# ---------------------------------------------------------------- layer-level

def conv1d(x, w, b=None, padding="same_zero", stride=1):
    """Cross-correlate ``x`` (..., Cin, L) with ``w`` (Cout, Cin, k)."""
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 3:
        raise ValueError(f"conv1d weight must be (Cout, Cin, k), got {w.shape}")
    cout, cin, k = w.shape
    if x.ndim not in (2, 3) or x.shape[-2] != cin:
        raise ValueError(f"conv1d expects input (..., {cin}, L), got {x.shape}")
    if b is not None and as_tensor(b).shape != (cout,):
        raise ValueError(f"conv1d bias must have shape ({cout},)")
    if stride < 1:
        raise ValueError("stride must be a positive integer")
    length = x.shape[-1]
    if padding == "same_zero":
        if k % 2 == 0:
            raise ValueError("same_zero padding needs an odd kernel")
        if stride != 1:
            raise ValueError("same_zero padding needs stride 1")
        pad = k // 2
        xp = np.pad(x.data, [(0, 0)] * (x.ndim - 1) + [(pad, pad)])
    elif padding == "valid":
        if length < k:
            raise ValueError(f"input length {length} shorter than kernel {k}")
        pad = 0
        xp = x.data
    else:
        raise ValueError(f"unknown padding {padding!r}")

    win = sliding_window_view(xp, k, axis=-1)[..., ::stride, :]  # (..., Cin, L', k)
    lout = win.shape[-2]
    out = np.moveaxis(np.tensordot(win, w.data, axes=([-3, -1], [1, 2])), -1, -2)
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        out = out + b.data[:, None]
        parents.append(b)

    def back(g):
        # g: (..., Cout, L')
        lead = tuple(range(g.ndim - 2))
        gw = np.tensordot(g, win, axes=(lead + (g.ndim - 1,), lead + (win.ndim - 2,)))
        gwin = np.tensordot(g, w.data, axes=([-2], [0]))  # (..., L', Cin, k)
        gxp = np.zeros_like(xp)
        span = stride * (lout - 1) + 1
        for j in range(k):
            gxp[..., j:j + span:stride] += np.moveaxis(gwin[..., j], -1, -2)
        gx = gxp[..., pad:pad + length] if pad else gxp
        grads = [gx, gw]
        if b is not None:
            grads.append(g.sum(axis=lead + (g.ndim - 1,)))
        return tuple(grads)

    return make_result(out, parents, back)


def maxpool1d(x, size, stride=None):
    stride = size if stride is None else stride
    length = x.shape[-1]
    if length < size:
        raise ValueError(f"maxpool window {size} longer than input length {length}")
    win = sliding_window_view(x.data, size, axis=-1)[..., ::stride, :]
    arg = np.argmax(win, axis=-1)  # first maximal index on ties
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    lout = out.shape[-1]

    def back(g):
        gx = np.zeros_like(x.data)
        span = stride * (lout - 1) + 1
        for j in range(size):
            gx[..., j:j + span:stride] += np.where(arg == j, g, 0.0)
        return (gx,)

    return make_result(out, (x,), back)


def dense(x, w, b=None):
    """Affine map ``W x + b`` over the last axis of ``x``."""
    x, w = as_tensor(x), as_tensor(w)
    if w.ndim != 2 or x.shape[-1] != w.shape[1]:
        raise ValueError(f"dense: cannot apply weight {w.shape} to input {x.shape}")
    out = x.data @ w.data.T
    parents = [x, w]
    if b is not None:
        b = as_tensor(b)
        if b.shape != (w.shape[0],):
            raise ValueError(f"dense bias must have shape ({w.shape[0]},)")
        out = out + b.data
        parents.append(b)

    def back(g):
        g2 = g.reshape(-1, g.shape[-1])
        x2 = x.data.reshape(-1, x.shape[-1])
        grads = [g @ w.data, g2.T @ x2]
        if b is not None:
            grads.append(g2.sum(axis=0))
        return tuple(grads)

    return make_result(out, parents, back)


def softmax(logits, axis=-1):
    z = logits.data - np.max(logits.data, axis=axis, keepdims=True)
    e = np.exp(z)
    s = e / np.sum(e, axis=axis, keepdims=True)
    return make_result(
        s, (logits,),
        lambda g: (s * (g - np.sum(g * s, axis=axis, keepdims=True)),),
    )


def subpixel_shuffle(x, r):
    """Move groups of ``r`` channels into the length axis.

    ``out[c, r*i + j] = x[c*r + j, i]``; the map is a pure permutation.
    """
    c, length = x.shape[-2], x.shape[-1]
    if r < 1 or c % r:
        raise ValueError(f"channel count {c} is not divisible by factor {r}")
    lead = x.shape[:-2]
    out = x.data.reshape(lead + (c // r, r, length)).swapaxes(-1, -2).reshape(lead + (c // r, r * length))

    def back(g):
        return (unshuffle_array(g, r),)

    return make_result(out, (x,), back)


def unshuffle_array(y, r):
    """Inverse of :func:`subpixel_shuffle` on a plain array."""
    c, length = y.shape[-2], y.shape[-1] // r
    lead = y.shape[:-2]
    return y.reshape(lead + (c, length, r)).swapaxes(-1, -2).reshape(lead + (c * r, length))


# --------------------------------------------------------------------- losses

def mse_loss(y_hat, y):
    """Mean of squared differences over every element."""
    y_hat, y = as_tensor(y_hat), as_tensor(y)
    if y_hat.shape != y.shape:
        raise ValueError(f"mse_loss shape mismatch: {y_hat.shape} vs {y.shape}")
    if y_hat.size == 0:
        raise ValueError("mse_loss needs at least one element")
    diff = y_hat.data - y.data
    m = diff.size
    return make_result(
        np.mean(diff * diff), (y_hat, y),
        lambda g: (2.0 * g * diff / m, -2.0 * g * diff / m),
    )


def cce_loss(z_hat, z, tol=1e-6):
    """Categorical cross entropy ``-sum z log z_hat``, averaged over a leading batch."""
    z_hat, z = as_tensor(z_hat), as_tensor(z)
    if z_hat.shape != z.shape:
        raise ValueError(f"cce_loss shape mismatch: {z_hat.shape} vs {z.shape}")
    if np.any(z_hat.data <= 0) or np.any(z_hat.data > 1):
        raise ValueError("predicted probabilities must lie in (0, 1]")
    if np.any(z.data < 0) or np.any(np.abs(z.data.sum(axis=-1) - 1.0) > tol):
        raise ValueError("target must be a probability distribution")
    n = z.data.size // z.shape[-1]
    logp = np.log(z_hat.data)
    loss = -np.sum(z.data * logp) / n
    return make_result(
        loss, (z_hat, z),
        lambda g: (-g * z.data / z_hat.data / n, -g * logp / n),
    )
