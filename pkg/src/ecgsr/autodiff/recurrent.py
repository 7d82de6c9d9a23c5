"""Gated recurrent units and attention pooling.

Gate layout: rows of ``W`` (3H, F), ``U`` (3H, H) and ``b`` (3H,) are stacked
as [update z, reset r, candidate].

    z  = sigmoid(W_z x + U_z h + b_z)
    r  = sigmoid(W_r x + U_r h + b_r)
    h~ = tanh(W_h x + U_h (r * h) + b_h)
    h' = z * h + (1 - z) * h~

:func:`gru_cell` builds one step out of primitive operators. :func:`gru_layer`
runs a whole sequence as a single fused operator with hand-written
backpropagation through time; the two must agree.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .ops import _sigmoid
from .tensor import Tensor, as_tensor, make_result


@dataclass
class GruParams:
    W: Tensor
    U: Tensor
    b: Tensor

    @property
    def hidden(self):
        return self.U.shape[1]

    def check(self, features):
        h = self.hidden
        if self.W.shape != (3 * h, features) or self.U.shape != (3 * h, h) or self.b.shape != (3 * h,):
            raise ValueError(
                f"GRU parameter shapes W{self.W.shape} U{self.U.shape} b{self.b.shape} "
                f"do not fit {features} features"
            )


def gru_cell(x_t, h_prev, params):
    x_t, h_prev = as_tensor(x_t), as_tensor(h_prev)
    params.check(x_t.shape[-1])
    H = params.hidden
    W, U, b = params.W, params.U, params.b
    gates_x = ops.dense(x_t, W, b)
    z = ops.sigmoid(gates_x[..., :H] + ops.dense(h_prev, U[:H]))
    r = ops.sigmoid(gates_x[..., H:2 * H] + ops.dense(h_prev, U[H:2 * H]))
    cand = ops.tanh_(gates_x[..., 2 * H:] + ops.dense(r * h_prev, U[2 * H:]))
    return z * h_prev + (1.0 - z) * cand


def gru_layer(seq, params, reverse=False):
    """Run a GRU over ``seq`` (..., F, T) from a zero state; returns (..., H, T).

    With ``reverse`` the sequence is consumed from the last step to the first,
    and the output at step t is the state after reading step t.
    """
    seq = as_tensor(seq)
    if seq.ndim not in (2, 3):
        raise ValueError(f"GRU input must be (F, T) or (N, F, T), got {seq.shape}")
    F, T = seq.shape[-2], seq.shape[-1]
    if T < 1:
        raise ValueError("GRU needs at least one time step")
    params.check(F)
    H = params.hidden
    W, U, b = params.W.data, params.U.data, params.b.data
    Uzr, Uh = U[:2 * H], U[2 * H:]

    batched = seq.ndim == 3
    xs = seq.data if batched else seq.data[None]
    xs = np.transpose(xs, (2, 0, 1))  # (T, N, F)
    N = xs.shape[1]
    ax = xs @ W.T + b  # (T, N, 3H)
    order = range(T - 1, -1, -1) if reverse else range(T)

    hs = np.empty((T, N, H))
    cache = {}
    h = np.zeros((N, H))
    for t in order:
        hp = h
        hz_r = hp @ Uzr.T
        z = _sigmoid(ax[t, :, :H] + hz_r[:, :H])
        r = _sigmoid(ax[t, :, H:2 * H] + hz_r[:, H:])
        rh = r * hp
        cand = np.tanh(ax[t, :, 2 * H:] + rh @ Uh.T)
        h = z * hp + (1.0 - z) * cand
        hs[t] = h
        cache[t] = (hp, z, r, rh, cand)

    out = np.transpose(hs, (1, 2, 0))  # (N, H, T)
    if not batched:
        out = out[0]

    def back(g):
        g = g if batched else g[None]
        gs = np.transpose(g, (2, 0, 1))  # (T, N, H)
        dax = np.empty_like(ax)
        dU = np.zeros_like(U)
        dh_next = np.zeros((N, H))
        for t in reversed(list(order)):
            hp, z, r, rh, cand = cache[t]
            dh = gs[t] + dh_next
            dz = dh * (hp - cand)
            dcand = dh * (1.0 - z)
            dhp = dh * z
            dah = dcand * (1.0 - cand * cand)
            drh = dah @ Uh
            dU[2 * H:] += dah.T @ rh
            dr = drh * hp
            dhp += drh * r
            daz = dz * z * (1.0 - z)
            dar = dr * r * (1.0 - r)
            dU[:H] += daz.T @ hp
            dU[H:2 * H] += dar.T @ hp
            dhp += daz @ U[:H] + dar @ U[H:2 * H]
            dax[t, :, :H] = daz
            dax[t, :, H:2 * H] = dar
            dax[t, :, 2 * H:] = dah
            dh_next = dhp
        dW = np.einsum("tng,tnf->gf", dax, xs)
        db = dax.sum(axis=(0, 1))
        dx = np.transpose(dax @ W, (1, 2, 0))
        if not batched:
            dx = dx[0]
        return dx, dW, dU, db

    return make_result(out, (seq, params.W, params.U, params.b), back)


def bidirectional_gru(seq, forward, backward):
    """Concatenate per-step states of a forward and a reversed pass: (..., 2H, T)."""
    return ops.concat([gru_layer(seq, forward), gru_layer(seq, backward, reverse=True)], axis=-2)


def attention_pool(hseq, W, b, u):
    """Softmax-weighted sum over steps of ``hseq`` (..., D, T).

    Step scores are ``u . tanh(W h_t + b)``.
    """
    hseq = as_tensor(hseq)
    D = hseq.shape[-2]
    if W.shape[1] != D or b.shape != (W.shape[0],) or u.shape != (W.shape[0],):
        raise ValueError(
            f"attention parameters W{W.shape} b{b.shape} u{u.shape} do not fit {D} features"
        )
    axes = tuple(range(hseq.ndim - 2)) + (hseq.ndim - 1, hseq.ndim - 2)
    steps = ops.transpose(hseq, axes)  # (..., T, D)
    proj = ops.tanh_(ops.dense(steps, W, b))  # (..., T, A)
    scores = ops.dense(proj, ops.reshape(u, (1, -1)))  # (..., T, 1)
    alpha = ops.softmax(ops.reshape(scores, scores.shape[:-1]), axis=-1)  # (..., T)
    weighted = hseq * ops.reshape(alpha, alpha.shape[:-1] + (1, alpha.shape[-1]))
    return ops.sum_(weighted, axis=-1)
