"""Differentiable kernels on channel-last tensors.

Convolutions take ``(B, T, F, C)`` inputs, the spectrogram layout used
everywhere else. The arithmetic is torch's (fused kernels where they exist);
this layer fixes layouts, shape checks and the attention instrumentation.
"""

from __future__ import annotations

import contextlib

import torch
import torch.nn.functional as tF


class ShapeError(ValueError):
    pass


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """(B, T, F, Cin) -> (B, T', F', Cout) with T' = (T + 2p - k) // s + 1 per axis.

    weight is (Cout, Cin, kT, kF); `padding` is symmetric zero padding.
    """
    if x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"conv2d expects {weight.shape[1]} input channels, got {x.shape[-1]}")
    y = tF.conv2d(x.permute(0, 3, 1, 2), weight, bias, stride=stride, padding=padding)
    return y.permute(0, 2, 3, 1)


def conv2d_transposed(x, weight, bias=None, stride=1):
    """(B, T, F, Cin) -> (B, (T-1)s + kT, (F-1)s + kF, Cout); weight is (Cin, Cout, kT, kF)."""
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"conv2d_transposed expects {weight.shape[0]} input channels, got {x.shape[-1]}")
    y = tF.conv_transpose2d(x.permute(0, 3, 1, 2), weight, bias, stride=stride)
    return y.permute(0, 2, 3, 1)


def linear(x, weight, bias=None):
    y = x @ weight.T
    return y if bias is None else y + bias


def layer_norm(x, weight=None, bias=None, eps=1e-5):
    """Normalize over the last (feature) axis to zero mean, unit variance, then affine."""
    return tF.layer_norm(x, x.shape[-1:], weight, bias, eps)


def relu(x):
    return tF.relu(x)


def sigmoid(x):
    return torch.sigmoid(x)


def swish(x):
    return tF.silu(x)


def glu(x, dim=-1):
    """First half gated by the sigmoid of the second half."""
    return tF.glu(x, dim)


def global_avg_pool(x):
    """(B, T, F, E) -> (B, 1, 1, E)."""
    return x.mean(dim=(1, 2), keepdim=True)


def depthwise_conv1d(x, weight, bias=None):
    """(B, L, D) -> (B, L, D); weight (D, k) with odd k, zero 'same' padding."""
    d, k = weight.shape
    if x.shape[-1] != d:
        raise ShapeError(f"depthwise_conv1d expects {d} channels, got {x.shape[-1]}")
    if k % 2 == 0:
        raise ShapeError("depthwise kernel must be odd")
    y = tF.conv1d(x.transpose(1, 2), weight[:, None, :], bias, padding=k // 2, groups=d)
    return y.transpose(1, 2)


# ---------------------------------------------------------------- attention


_attention_log: list | None = None


@contextlib.contextmanager
def count_attention():
    """Record every attention call as a dict (tag, sequences, length, heads, scores)."""
    global _attention_log
    prev, _attention_log = _attention_log, []
    try:
        yield _attention_log
    finally:
        _attention_log = prev


def mhsa(x, wq, wk, wv, wo, bq=None, bk=None, bv=None, bo=None, heads=1, tag=None):
    """Scaled dot-product self-attention over (B, L, D) with `heads` heads."""
    b, length, d = x.shape
    if d % heads:
        raise ShapeError(f"model dim {d} not divisible by {heads} heads")
    hd = d // heads
    split = lambda t: t.reshape(b, length, heads, hd).transpose(1, 2)  # noqa: E731
    q, k, v = split(linear(x, wq, bq)), split(linear(x, wk, bk)), split(linear(x, wv, bv))
    if _attention_log is not None:
        _attention_log.append(
            {"tag": tag, "sequences": b, "length": length, "heads": heads, "scores": b * heads * length * length}
        )
    # softmax(q k^T / sqrt(hd)) v, via torch's fused kernel
    out = tF.scaled_dot_product_attention(q, k, v).transpose(1, 2).reshape(b, length, d)
    return linear(out, wo, bo)
