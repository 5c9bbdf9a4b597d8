"""The full pipeline: channel augmentation, spectral/spatial features, fusion, separator."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import torch
from torch import nn

from .dsp import StftConfig, istft_tensor, stft_tensor
from .fusion import AttentionalFusion, FusionConfig, LocalPatternExtractor
from .nn import ConformerConfig, Linear, ShapeError
from .sdl import SpatialDictionary
from .separator import HierarchicalSeparator, SeparatorConfig, unpack_complex
from .vme import augment_channels

MODES = ("vme", "zero_pad")
SPATIAL = ("sdl", "fsdl", "off")


@dataclass
class ModelConfig:
    M: int = 8
    K: int = 2
    E: int = 64
    N: int = 64
    mode: str = "vme"
    spatial: str = "sdl"
    hermitian: bool = True
    n_freqs: int = 257
    reference_channel: int = 0
    level_dims: tuple = (64, 128, 256)
    merge_windows: tuple = (1, 2, 2)
    heads: int = 4
    ff_expansion: int = 4
    conv_kernel: int = 15
    layers_per_path: int = 1
    skip_connections: bool = True
    decoder_blocks: bool = False
    aff_iterations: int = 2
    aff_bottleneck_ratio: int = 4
    extractor_kernel: int = 5
    dropout: float = 0.0
    seed: int = 0
    stft: StftConfig = field(default_factory=StftConfig)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.spatial not in SPATIAL:
            raise ValueError(f"spatial must be one of {SPATIAL}")
        if self.spatial != "off" and self.N != self.E:
            raise ShapeError(f"spatial embedding size N={self.N} must equal E={self.E} for fusion")
        self.level_dims = tuple(self.level_dims)
        self.merge_windows = tuple(self.merge_windows)

    @classmethod
    def toy(cls, **kw) -> "ModelConfig":
        base = dict(E=8, N=8, level_dims=(8, 16, 32), conv_kernel=7)
        base.update(kw)
        return cls(**base)

    @classmethod
    def full(cls, **kw) -> "ModelConfig":
        return cls(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["level_dims"] = list(self.level_dims)
        d["merge_windows"] = list(self.merge_windows)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        d["stft"] = StftConfig(**d["stft"])
        return cls(**d)

    def fingerprint(self) -> str:
        arch = self.to_dict()
        arch.pop("seed")
        return hashlib.sha256(json.dumps(arch, sort_keys=True).encode()).hexdigest()[:16]

    def separator_config(self) -> SeparatorConfig:
        conformer = ConformerConfig(
            model_dim=self.level_dims[0], num_heads=self.heads, ff_expansion=self.ff_expansion,
            conv_kernel=self.conv_kernel, num_layers_per_path=self.layers_per_path, dropout=self.dropout,
        )
        return SeparatorConfig(
            in_dim=self.E, merge_windows=self.merge_windows, level_dims=self.level_dims, K=self.K,
            conformer=conformer, skip_connections=self.skip_connections,
            decoder_blocks=self.decoder_blocks,
        )

    def fusion_config(self) -> FusionConfig:
        return FusionConfig(
            E=self.E, reference_channel=self.reference_channel, extractor_kernel=self.extractor_kernel,
            aff_bottleneck_ratio=self.aff_bottleneck_ratio, aff_iterations=self.aff_iterations,
        )


class UniArray(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        torch.manual_seed(cfg.seed)
        if cfg.spatial == "off":
            self.concat_proj = Linear(2 * cfg.M, cfg.E)
        else:
            fcfg = cfg.fusion_config()
            self.extractor = LocalPatternExtractor(fcfg)
            self.dictionary = SpatialDictionary(cfg.M, cfg.N, cfg.spatial, cfg.n_freqs, cfg.hermitian, cfg.seed)
            self.fusion = AttentionalFusion(fcfg)
        self.separator = HierarchicalSeparator(cfg.separator_config())

    def features(self, spec: torch.Tensor) -> torch.Tensor:
        """(B, T, F, C) complex with C <= M -> fused (B, T, F, E)."""
        if spec.shape[-1] > self.cfg.M:
            raise ShapeError(f"{spec.shape[-1]} channels exceed M={self.cfg.M}")
        if self.cfg.reference_channel != 0:
            ref = self.cfg.reference_channel
            order = [ref] + [c for c in range(spec.shape[-1]) if c != ref]
            spec = spec[..., order]
        x = augment_channels(spec, self.cfg.M, self.cfg.mode)
        if self.cfg.spatial == "off":
            return self.concat_proj(torch.cat([x.real, x.imag], dim=-1))
        spectral = self.extractor(x)
        spatial = self.dictionary(x).values
        return self.fusion(spectral, spatial)

    def forward(self, spec: torch.Tensor) -> torch.Tensor:
        """(B, T, F, C) complex -> (B, T, F, 2K) real."""
        return self.separator(self.features(spec))

    def separate_waveforms(self, mixture: torch.Tensor) -> torch.Tensor:
        """(B, C, L) waveforms -> (B, K, L) estimates at the reference channel.

        The input is normalized by the reference channel's RMS and the
        estimates are scaled back, so the network sees unit-level spectra.
        """
        length = mixture.shape[-1]
        ref = mixture[:, self.cfg.reference_channel]
        scale = ref.pow(2).mean(dim=-1).sqrt().clamp(min=1e-8)[:, None, None]
        spec = stft_tensor(mixture / scale, self.cfg.stft).permute(0, 2, 3, 1)  # (B, T, F, C)
        est = unpack_complex(self.forward(spec))  # (B, T, F, K)
        wav = istft_tensor(est.permute(0, 3, 1, 2), length, self.cfg.stft)
        return wav * scale
