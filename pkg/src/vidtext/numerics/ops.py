"""Differentiable building blocks used by the encoders and calculators."""

from __future__ import annotations

from typing import Mapping, Optional

import numpy as np

from ..errors import ConfigError, DegenerateInputError, DimensionError
from .tensor import (
    Tensor,
    as_tensor,
    concat,
    contiguous,
    matmul,
    pad_axis,
    sigmoid,
    stack,
    tanh,
    tsum,
)


def linear(x: Tensor, W: Tensor, b: Optional[Tensor] = None) -> Tensor:
    """``x @ W + b`` over the trailing axis of ``x``."""
    if W.ndim != 2:
        raise DimensionError(f"linear weight must be 2-D, got {W.shape}")
    if x.shape[-1] != W.shape[0]:
        raise DimensionError(f"linear: trailing dim {x.shape[-1]} != d_in {W.shape[0]}")
    y = matmul(x, W)
    if b is not None:
        if b.shape != (W.shape[1],):
            raise DimensionError(f"linear bias shape {b.shape} != ({W.shape[1]},)")
        y = y + b
    return y


def softmax(x: Tensor, axis: int = -1, mask: Optional[np.ndarray] = None) -> Tensor:
    """Max-shifted softmax. ``mask`` (True = keep) zeroes excluded positions."""
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise DimensionError("softmax over an empty axis")
    z = x.data
    if mask is not None:
        z = np.where(mask, z, -np.inf)
    zmax = z.max(axis=axis, keepdims=True)
    if not np.isfinite(zmax).all():
        raise DegenerateInputError("softmax: a slice is fully masked")
    e = np.exp(z - zmax)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._from_op(out, (x,), backward, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    x = as_tensor(x)
    if x.ndim == 0 or x.shape[axis] == 0:
        raise DimensionError("log_softmax over an empty axis")
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse

    def backward(g):
        p = np.exp(out)
        return (g - p * g.sum(axis=axis, keepdims=True),)

    return Tensor._from_op(out, (x,), backward, "log_softmax")


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1] if x.ndim else 0
    if d == 0:
        raise DimensionError("layer_norm over an empty axis")
    if gamma.shape != (d,) or beta.shape != (d,):
        raise DimensionError(f"layer_norm: gamma/beta must have shape ({d},)")
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    out = xhat * gamma.data + beta.data

    def backward(g):
        lead = tuple(range(xd.ndim - 1))
        gg = (g * xhat).sum(axis=lead) if gamma.requires_grad else None
        gb = g.sum(axis=lead) if beta.requires_grad else None
        gx = None
        if x.requires_grad:
            gh = g * gamma.data
            gx = rstd * (gh - gh.mean(axis=-1, keepdims=True)
                         - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        return gx, gg, gb

    return Tensor._from_op(out.astype(xd.dtype), (x, gamma, beta), backward, "layer_norm")


def split_heads(x: Tensor, n_heads: int) -> Tensor:
    *lead, L, d = x.shape
    return x.reshape(*lead, L, n_heads, d // n_heads).swapaxes(-2, -3)


def merge_heads(x: Tensor) -> Tensor:
    *lead, H, L, dh = x.shape
    return x.swapaxes(-2, -3).reshape(*lead, L, H * dh)


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, mask: Optional[np.ndarray] = None):
    """Heads already split: q, k, v are [..., L, d_head]. Returns (out, weights)."""
    scale = 1.0 / np.sqrt(q.shape[-1])
    scores = matmul(q, k.swapaxes(-1, -2)) * scale
    weights = softmax(scores, axis=-1, mask=mask)
    return matmul(weights, v), weights


def multi_head_attention(q: Tensor, k: Tensor, v: Tensor, weights: Mapping[str, Tensor], n_heads: int,
                         mask: Optional[np.ndarray] = None, return_weights: bool = False):
    """Project, split into heads, attend, merge, and output-project.

    ``weights`` holds ``q.weight``/``q.bias`` and the same for ``k``, ``v``
    and the output projection ``o``. ``mask`` is boolean ``[L_q, L_k]``
    with True marking allowed positions.
    """
    d = q.shape[-1]
    if n_heads < 1 or d % n_heads:
        raise ConfigError(f"d_model {d} is not divisible by n_heads {n_heads}")
    Q = linear(q, weights["q.weight"], weights["q.bias"])
    K = linear(k, weights["k.weight"], weights["k.bias"])
    V = linear(v, weights["v.weight"], weights["v.bias"])
    out, attn = scaled_dot_attention(split_heads(Q, n_heads), split_heads(K, n_heads),
                                     split_heads(V, n_heads), mask)
    y = linear(merge_heads(out), weights["o.weight"], weights["o.bias"])
    return (y, attn) if return_weights else y


def lstm_step(x: Tensor, h: Tensor, c: Tensor, params: Mapping[str, Tensor]):
    """One LSTM step; gate layout along the 4*d_h axis is (input, forget, cell, output)."""
    w_ih, w_hh, b = params["w_ih"], params["w_hh"], params["b"]
    d_h = h.shape[-1]
    if w_ih.shape != (x.shape[-1], 4 * d_h) or w_hh.shape != (d_h, 4 * d_h) or b.shape != (4 * d_h,):
        raise DimensionError(
            f"lstm_step: x {x.shape}, h {h.shape} incompatible with "
            f"w_ih {w_ih.shape}, w_hh {w_hh.shape}, b {b.shape}")
    if c.shape != h.shape:
        raise DimensionError(f"lstm_step: c {c.shape} != h {h.shape}")
    gates = matmul(x, w_ih) + matmul(h, w_hh) + b
    i = sigmoid(gates[..., 0:d_h])
    f = sigmoid(gates[..., d_h:2 * d_h])
    g = tanh(gates[..., 2 * d_h:3 * d_h])
    o = sigmoid(gates[..., 3 * d_h:])
    c_new = f * c + i * g
    h_new = o * tanh(c_new)
    return h_new, c_new


def lstm_sequence(Z: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    """Run an LSTM over the rows of ``Z`` from zero state; returns every hidden state."""
    d_h = params["w_hh"].shape[0]
    zeros = np.zeros(Z.shape[:-2] + (d_h,), dtype=Z.dtype)
    h, c = Tensor(zeros), Tensor(zeros)
    outs = []
    for t in range(Z.shape[-2]):
        h, c = lstm_step(Z[..., t, :], h, c, params)
        outs.append(h)
    return stack(outs, axis=-2)


def unfold_patches(frames: Tensor, patch: tuple) -> Tensor:
    """[..., C, H, W] -> [..., n_patches, C*h*w], patches in row-major grid order."""
    ph, pw = patch
    *lead, C, H, W = frames.shape
    if H % ph or W % pw:
        raise DimensionError(f"frame {H}x{W} not divisible by patch {ph}x{pw}")
    gh, gw = H // ph, W // pw
    n = len(lead)
    x = frames.reshape(*lead, C, gh, ph, gw, pw)
    # -> [..., gh, gw, C, ph, pw]
    axes = tuple(range(n)) + (n + 1, n + 3, n, n + 2, n + 4)
    x = x.transpose(axes)
    return x.reshape(*lead, gh * gw, C * ph * pw)


def conv3d(frames: Tensor, kernel: Tensor, temporal_stride: int = 1, temporal_padding: int = 1) -> Tensor:
    """Temporal-window patch convolution.

    ``frames`` is [..., T, C, H, W] and ``kernel`` is [d, C, t, h, w]. The
    spatial stride equals the spatial kernel so patches never overlap; the
    temporal axis slides with the given stride and zero padding. Returns
    [..., T_out, n_patches, d].
    """
    if kernel.ndim != 5:
        raise DimensionError(f"conv3d kernel must be [d, C, t, h, w], got {kernel.shape}")
    d, C, t, kh, kw = kernel.shape
    if frames.ndim < 4 or frames.shape[-3] != C:
        raise DimensionError(f"conv3d: frames {frames.shape} do not match kernel channels {C}")
    if temporal_stride < 1 or temporal_padding < 0:
        raise ConfigError("conv3d: stride must be >= 1 and padding >= 0")
    T = frames.shape[-4]
    t_out = (T + 2 * temporal_padding - t) // temporal_stride + 1
    if t_out < 1:
        raise DimensionError(f"conv3d: temporal length {T} too short for kernel {t}")
    patches = unfold_patches(frames, (kh, kw))  # [..., T, P, C*kh*kw]
    if temporal_padding:
        patches = pad_axis(patches, temporal_padding, temporal_padding, axis=-3)
    # kernel slice k as a [C*kh*kw, d] projection, matching the unfold layout
    kmat = contiguous(kernel.transpose(2, 1, 3, 4, 0).reshape(t, C * kh * kw, d))
    out = None
    span = (t_out - 1) * temporal_stride + 1
    for k in range(t):
        window = patches[..., k:k + span:temporal_stride, :, :]
        term = matmul(window, contiguous(kmat[k]))
        out = term if out is None else out + term
    return out


def mean_pool(Z: Tensor, axis: int = 0) -> Tensor:
    if Z.ndim == 0 or Z.shape[axis] == 0:
        raise DegenerateInputError("mean_pool over zero rows")
    return tsum(Z, axis=axis) / float(Z.shape[axis])


def l2_normalize(x: Tensor, axis: int = -1) -> Tensor:
    sq = tsum(x * x, axis=axis, keepdims=True)
    if (sq.data <= np.finfo(x.dtype).tiny).any():
        raise DegenerateInputError("cannot normalize a zero-norm vector")
    return x / sq.sqrt()


def cosine_sim(a: Tensor, b: Tensor) -> Tensor:
    """Cosine similarity of two vectors, as a 0-d tensor."""
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"cosine_sim needs equal 1-D shapes, got {a.shape} and {b.shape}")
    return tsum(l2_normalize(a) * l2_normalize(b))


def cosine_matrix(A: Tensor, B: Tensor) -> Tensor:
    """All-pairs cosine of the rows of A [n, d] and B [m, d] -> [n, m].

    Computed as an elementwise product then a last-axis sum so each entry
    goes through exactly the same reduction as :func:`cosine_sim`.
    """
    if A.ndim != 2 or B.ndim != 2 or A.shape[1] != B.shape[1]:
        raise DimensionError(f"cosine_matrix needs [n, d] and [m, d], got {A.shape} and {B.shape}")
    An = l2_normalize(A)[:, None, :]
    Bn = l2_normalize(B)[None, :, :]
    return tsum(An * Bn, axis=-1)


def concat_rows(*parts: Tensor) -> Tensor:
    return concat(list(parts), axis=0)
