"""Hierarchical dual-path separator.

Encoder levels merge P x P time-frequency patches and run a dual-path
Conformer (time axis per frequency, then frequency axis per frame); a
bottleneck block follows the coarsest level; the decoder mirrors the encoder
with transposed-convolution patch expansion and additive skips (dual-path
blocks after each expansion are optional), and a
pointwise head emits K complex spectra packed as 2K real maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import torch
import torch.nn.functional as tF
from torch import nn

from .nn import ConformerBlock, ConformerConfig, Conv2d, ConvTranspose2d, LayerNorm, Linear, ShapeError


@dataclass
class SeparatorConfig:
    in_dim: int = 64
    merge_windows: tuple[int, ...] = (1, 2, 2)
    level_dims: tuple[int, ...] = (64, 128, 256)
    K: int = 2
    conformer: ConformerConfig = field(default_factory=ConformerConfig)
    skip_connections: bool = True
    bottleneck: bool = True
    decoder_blocks: bool = False

    def __post_init__(self):
        self.merge_windows = tuple(self.merge_windows)
        self.level_dims = tuple(self.level_dims)
        if len(self.merge_windows) != len(self.level_dims):
            raise ShapeError("one level dim per merge window")

    @property
    def total_factor(self) -> int:
        return math.prod(self.merge_windows)

    def conformer_for(self, dim: int) -> ConformerConfig:
        return replace(self.conformer, model_dim=dim)


def pad_to_multiple(x: torch.Tensor, p: int) -> tuple[torch.Tensor, tuple[int, int]]:
    """Zero-pad (B, T, F, D) at the end of T and F up to multiples of p."""
    pt, pf = -x.shape[1] % p, -x.shape[2] % p
    if pt or pf:
        x = tF.pad(x, (0, 0, 0, pf, 0, pt))
    return x, (pt, pf)


class PatchMerge(nn.Module):
    """Conv with kernel = stride = P, then layer norm over features."""

    def __init__(self, d_in: int, d_out: int, P: int):
        super().__init__()
        self.P = P
        self.conv = Conv2d(d_in, d_out, P, stride=P)
        self.norm = LayerNorm(d_out)

    def forward(self, x):
        x, pad = pad_to_multiple(x, self.P)
        return self.norm(self.conv(x)), pad


class PatchExpand(nn.Module):
    """Transposed conv with kernel = stride = P, crop, layer norm, optional additive skip."""

    def __init__(self, d_in: int, d_out: int, P: int):
        super().__init__()
        self.P = P
        self.deconv = ConvTranspose2d(d_in, d_out, P, stride=P)
        self.norm = LayerNorm(d_out)

    def forward(self, x, skip=None, size=None):
        y = self.deconv(x)
        if size is not None:
            y = y[:, : size[0], : size[1]]
        y = self.norm(y)
        if skip is not None:
            if skip.shape != y.shape:
                raise ShapeError(f"skip shape {tuple(skip.shape)} does not match {tuple(y.shape)}")
            y = y + skip
        return y


def patch_merge(x, merge: PatchMerge):
    return merge(x)


def patch_expand(x, expand: PatchExpand, skip=None, size=None):
    return expand(x, skip, size)


class DualPathBlock(nn.Module):
    def __init__(self, cfg: ConformerConfig, tag=None):
        super().__init__()
        n = cfg.num_layers_per_path
        self.time_layers = nn.ModuleList(ConformerBlock(cfg) for _ in range(n))
        self.freq_layers = nn.ModuleList(ConformerBlock(cfg) for _ in range(n))
        for layer in self.time_layers:
            layer.attn.tag = (tag, "time")
        for layer in self.freq_layers:
            layer.attn.tag = (tag, "freq")

    def forward(self, x):
        b, t, f, d = x.shape
        y = x.transpose(1, 2).reshape(b * f, t, d)  # one sequence per frequency
        for layer in self.time_layers:
            y = layer(y)
        y = y.reshape(b, f, t, d).transpose(1, 2).reshape(b * t, f, d)  # one per frame
        for layer in self.freq_layers:
            y = layer(y)
        return y.reshape(b, t, f, d)


def dual_path_block(x, block: DualPathBlock):
    return block(x)


class HierarchicalSeparator(nn.Module):
    def __init__(self, cfg: SeparatorConfig):
        super().__init__()
        self.cfg = cfg
        dims = cfg.level_dims
        ins = (cfg.in_dim,) + dims[:-1]
        self.merges = nn.ModuleList(PatchMerge(i, o, p) for i, o, p in zip(ins, dims, cfg.merge_windows))
        self.encoders = nn.ModuleList(
            DualPathBlock(cfg.conformer_for(d), tag=f"enc{lvl}") for lvl, d in enumerate(dims)
        )
        self.bottleneck = DualPathBlock(cfg.conformer_for(dims[-1]), tag="bottleneck") if cfg.bottleneck else None
        self.expands = nn.ModuleList(PatchExpand(o, i, p) for i, o, p in zip(ins, dims, cfg.merge_windows))
        # optional decoder blocks at the resolution of levels 0 .. L-2, after each expand
        self.decoders = nn.ModuleList(
            DualPathBlock(cfg.conformer_for(d), tag=f"dec{lvl}") for lvl, d in enumerate(dims[:-1])
        ) if cfg.decoder_blocks else None
        self.head = Linear(cfg.in_dim, 2 * cfg.K)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        """(B, T, F, in_dim) -> (B, T, F, 2K); channels 2k, 2k+1 hold speaker k's real, imag."""
        if x.shape[-1] != self.cfg.in_dim:
            raise ShapeError(f"separator expects {self.cfg.in_dim} features, got {x.shape[-1]}")
        t, f = x.shape[1:3]
        x, _ = pad_to_multiple(x, self.cfg.total_factor)
        skips, sizes = [], []
        for merge, enc in zip(self.merges, self.encoders):
            skips.append(x)
            sizes.append(x.shape[1:3])
            x, _ = merge(x)
            x = enc(x)
        if self.bottleneck is not None:
            x = self.bottleneck(x)
        for lvl in reversed(range(len(self.merges))):
            skip = skips[lvl] if self.cfg.skip_connections else None
            x = self.expands[lvl](x, skip, sizes[lvl])
            if lvl > 0 and self.decoders is not None:
                x = self.decoders[lvl - 1](x)
        return self.head(x)[:, :t, :f]


def unpack_complex(packed: torch.Tensor) -> torch.Tensor:
    """(..., 2K) real -> (..., K) complex."""
    return torch.complex(packed[..., 0::2], packed[..., 1::2])


def separate(fused: torch.Tensor, separator: HierarchicalSeparator) -> torch.Tensor:
    return separator(fused)
