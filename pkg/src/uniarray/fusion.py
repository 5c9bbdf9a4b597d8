"""Spectral front end and iterative attentional fusion with the spatial embedding."""

from __future__ import annotations

from dataclasses import dataclass

import torch
from torch import nn

from .nn import Conv2d, Linear, ShapeError
from .nn import functional as Fn


@dataclass
class FusionConfig:
    E: int = 64
    reference_channel: int = 0
    extractor_kernel: int = 5
    extractor_stride: int = 1
    aff_bottleneck_ratio: int = 4
    aff_iterations: int = 2

    def __post_init__(self):
        if self.extractor_kernel % 2 == 0:
            raise ShapeError("extractor kernel must be odd")


class LocalPatternExtractor(nn.Module):
    """Two same-padded convolutions over the reference channel's real/imag planes."""

    def __init__(self, cfg: FusionConfig):
        super().__init__()
        k, s = cfg.extractor_kernel, cfg.extractor_stride
        self.reference_channel = cfg.reference_channel
        self.conv1 = Conv2d(2, cfg.E, k, s, "same")
        self.conv2 = Conv2d(cfg.E, cfg.E, k, 1, "same")

    def forward(self, spec: torch.Tensor) -> torch.Tensor:
        """(B, T, F, M) complex -> (B, T, F, E)."""
        ref = spec[..., self.reference_channel]
        planes = torch.stack([ref.real, ref.imag], dim=-1)
        return self.conv2(Fn.relu(self.conv1(planes)))


class ChannelAttention(nn.Module):
    """Local (per-bin) plus global (pooled) bottleneck branches; returns logits."""

    def __init__(self, dim: int, ratio: int):
        super().__init__()
        hidden = max(1, dim // ratio)
        self.local_in, self.local_out = Linear(dim, hidden), Linear(hidden, dim)
        self.global_in, self.global_out = Linear(dim, hidden), Linear(hidden, dim)

    def forward(self, u):
        local = self.local_out(Fn.relu(self.local_in(u)))
        pooled = self.global_out(Fn.relu(self.global_in(Fn.global_avg_pool(u))))
        return local + pooled

    def negate(self):
        """Flip the logits' sign (swaps the roles of the two fused branches)."""
        with torch.no_grad():
            for lin in (self.local_out, self.global_out):
                lin.weight.neg_()
                lin.bias.neg_()


class AttentionalFusion(nn.Module):
    """out = m * spectral + (1 - m) * spatial, with the gate re-estimated from the previous fusion."""

    def __init__(self, cfg: FusionConfig):
        super().__init__()
        self.stages = nn.ModuleList(
            ChannelAttention(cfg.E, cfg.aff_bottleneck_ratio) for _ in range(cfg.aff_iterations)
        )
        self.last_masks: list[torch.Tensor] = []

    def forward(self, spectral: torch.Tensor, spatial: torch.Tensor) -> torch.Tensor:
        if spectral.shape != spatial.shape:
            raise ShapeError(f"fusion branches differ in shape: {tuple(spectral.shape)} vs {tuple(spatial.shape)}")
        u = spectral + spatial
        self.last_masks = []
        for stage in self.stages:
            m = Fn.sigmoid(stage(u))
            self.last_masks.append(m)
            u = m * spectral + (1 - m) * spatial
        return u


def aff_fuse(spectral, spatial, params: AttentionalFusion):
    return params(spectral, spatial)
