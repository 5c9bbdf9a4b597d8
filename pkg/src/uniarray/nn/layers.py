"""Parameter-holding modules built on `uniarray.nn.functional`."""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch
from torch import nn

from . import functional as Fn


def _uniform(shape, fan_in):
    bound = 1.0 / math.sqrt(fan_in)
    return nn.Parameter(torch.empty(shape).uniform_(-bound, bound))


class Linear(nn.Module):
    def __init__(self, d_in, d_out, bias=True):
        super().__init__()
        self.weight = _uniform((d_out, d_in), d_in)
        self.bias = _uniform((d_out,), d_in) if bias else None

    def forward(self, x):
        return Fn.linear(x, self.weight, self.bias)


class Conv2d(nn.Module):
    """Channel-last 2-D convolution; `padding='same'` keeps T, F for stride 1 and odd kernels."""

    def __init__(self, c_in, c_out, kernel, stride=1, padding=0):
        super().__init__()
        kt, kf = (kernel, kernel) if isinstance(kernel, int) else kernel
        if padding == "same":
            padding = (kt // 2, kf // 2)
        self.stride, self.padding = stride, padding
        fan_in = c_in * kt * kf
        self.weight = _uniform((c_out, c_in, kt, kf), fan_in)
        self.bias = _uniform((c_out,), fan_in)

    def forward(self, x):
        return Fn.conv2d(x, self.weight, self.bias, self.stride, self.padding)


class ConvTranspose2d(nn.Module):
    def __init__(self, c_in, c_out, kernel, stride):
        super().__init__()
        kt, kf = (kernel, kernel) if isinstance(kernel, int) else kernel
        self.stride = stride
        fan_in = c_in * kt * kf
        self.weight = _uniform((c_in, c_out, kt, kf), fan_in)
        self.bias = _uniform((c_out,), fan_in)

    def forward(self, x):
        return Fn.conv2d_transposed(x, self.weight, self.bias, self.stride)


class LayerNorm(nn.Module):
    def __init__(self, dim, eps=1e-5):
        super().__init__()
        self.weight = nn.Parameter(torch.ones(dim))
        self.bias = nn.Parameter(torch.zeros(dim))
        self.eps = eps

    def forward(self, x):
        return Fn.layer_norm(x, self.weight, self.bias, self.eps)


class MultiHeadSelfAttention(nn.Module):
    def __init__(self, dim, heads):
        super().__init__()
        if dim % heads:
            raise Fn.ShapeError(f"model dim {dim} not divisible by {heads} heads")
        self.heads = heads
        self.q, self.v, self.out = (Linear(dim, dim) for _ in range(3))
        # a key bias only shifts each query's scores by a constant, which softmax ignores
        self.k = Linear(dim, dim, bias=False)
        self.tag = None

    def forward(self, x):
        return Fn.mhsa(
            x, self.q.weight, self.k.weight, self.v.weight, self.out.weight,
            self.q.bias, self.k.bias, self.v.bias, self.out.bias, heads=self.heads, tag=self.tag,
        )


@dataclass
class ConformerConfig:
    model_dim: int = 64
    num_heads: int = 4
    ff_expansion: int = 4
    conv_kernel: int = 15
    num_layers_per_path: int = 1
    dropout: float = 0.0

    def __post_init__(self):
        if self.model_dim % self.num_heads:
            raise Fn.ShapeError("model_dim must be divisible by num_heads")
        if self.conv_kernel % 2 == 0:
            raise Fn.ShapeError("conv_kernel must be odd")


class FeedForward(nn.Module):
    def __init__(self, dim, expansion, dropout=0.0):
        super().__init__()
        self.norm = LayerNorm(dim)
        self.up = Linear(dim, dim * expansion)
        self.down = Linear(dim * expansion, dim)
        self.drop = nn.Dropout(dropout)

    def forward(self, x):
        return self.drop(self.down(self.drop(Fn.swish(self.up(self.norm(x))))))


class ConvModule(nn.Module):
    """Pointwise -> GLU -> depthwise -> swish -> pointwise."""

    def __init__(self, dim, kernel, dropout=0.0):
        super().__init__()
        self.norm = LayerNorm(dim)
        self.pw_in = Linear(dim, 2 * dim)
        self.dw_weight = _uniform((dim, kernel), kernel)
        self.dw_bias = _uniform((dim,), kernel)
        self.pw_out = Linear(dim, dim)
        self.drop = nn.Dropout(dropout)

    def forward(self, x):
        y = Fn.glu(self.pw_in(self.norm(x)))
        y = Fn.swish(Fn.depthwise_conv1d(y, self.dw_weight, self.dw_bias))
        return self.drop(self.pw_out(y))


class ConformerBlock(nn.Module):
    """Pre-norm Conformer layer on (B, L, D): macaron FF, MHSA, conv module, FF, final norm."""

    def __init__(self, cfg: ConformerConfig):
        super().__init__()
        d = cfg.model_dim
        self.ff1 = FeedForward(d, cfg.ff_expansion, cfg.dropout)
        self.attn_norm = LayerNorm(d)
        self.attn = MultiHeadSelfAttention(d, cfg.num_heads)
        self.conv = ConvModule(d, cfg.conv_kernel, cfg.dropout)
        self.ff2 = FeedForward(d, cfg.ff_expansion, cfg.dropout)
        self.final_norm = LayerNorm(d)
        self.drop = nn.Dropout(cfg.dropout)

    def zero_output_projections(self):
        for lin in (self.ff1.down, self.attn.out, self.conv.pw_out, self.ff2.down):
            nn.init.zeros_(lin.weight)
            nn.init.zeros_(lin.bias)

    def forward(self, x):
        if x.shape[-1] != self.final_norm.weight.shape[0]:
            raise Fn.ShapeError(f"expected model dim {self.final_norm.weight.shape[0]}, got {x.shape[-1]}")
        x = x + 0.5 * self.ff1(x)
        x = x + self.drop(self.attn(self.attn_norm(x)))
        x = x + self.conv(x)
        x = x + 0.5 * self.ff2(x)
        return self.final_norm(x)
