"""Spatial dictionary learning.

Each time-frequency bin's M-channel complex vector is compared with N learnable
dictionary directions through a normalized squared inner product (a value in
[0, 1]), and the resulting N similarities are weighted by the bin's mean
channel magnitude so loud bins dominate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

VARIANTS = ("sdl", "fsdl")


@dataclass
class SpatialEmbedding:
    values: torch.Tensor  # (..., T, F, N) real, scaled by x_avg
    similarity: torch.Tensor  # (..., T, F, N) in [0, 1]
    x_avg: torch.Tensor  # (..., T, F)


def init_dictionary(M: int, N: int, variant: str = "sdl", rng=None, n_freqs: int = 257, dtype=torch.float64):
    """Complex Gaussian entries with unit-norm columns, as (real, imag) tensors.

    Shapes are (M, N) for the shared dictionary and (F, M, N) per frequency.
    """
    if M < 1 or N < 1:
        raise ValueError("M and N must be positive")
    if variant not in VARIANTS:
        raise ValueError(f"variant must be one of {VARIANTS}")
    rng = np.random.default_rng(rng)
    shape = (M, N) if variant == "sdl" else (n_freqs, M, N)
    d = rng.normal(size=shape) + 1j * rng.normal(size=shape)
    d /= np.linalg.norm(d, axis=-2, keepdims=True)
    return torch.tensor(d.real, dtype=dtype), torch.tensor(d.imag, dtype=dtype)


def _power(z):
    return z.real**2 + z.imag**2


def spatial_embed(spec: torch.Tensor, dictionary: torch.Tensor, hermitian: bool = True) -> SpatialEmbedding:
    """Project (..., T, F, M) complex bins onto a complex dictionary.

    `dictionary` is (M, N) (shared across frequencies) or (F, M, N). With
    ``hermitian=False`` the literal transpose d^T x is used instead of d^H x.
    """
    M = spec.shape[-1]
    if dictionary.shape[-2] != M:
        raise ValueError(f"dictionary has {dictionary.shape[-2]} rows, input has {M} channels")
    d = dictionary.conj() if hermitian else dictionary
    if dictionary.dim() == 2:
        proj = torch.einsum("...tfm,mn->...tfn", spec, d)
    else:
        if dictionary.shape[0] != spec.shape[-2]:
            raise ValueError(f"{dictionary.shape[0]} per-frequency dictionaries for {spec.shape[-2]} bins")
        proj = torch.einsum("...tfm,fmn->...tfn", spec, d)
    col_energy = _power(dictionary).sum(dim=-2)  # (N,) or (F, N)
    x_energy = _power(spec).sum(dim=-1, keepdim=True)  # (..., T, F, 1)
    denom = x_energy * col_energy  # (F, N) also broadcasts against (..., T, F, 1)
    silent = x_energy == 0
    sim = _power(proj) / torch.where(silent, torch.ones_like(denom), denom)
    sim = torch.where(silent, torch.zeros_like(sim), sim).clamp(0.0, 1.0)
    x_avg = spec.abs().mean(dim=-1)
    return SpatialEmbedding(sim * x_avg[..., None], sim, x_avg)


class SpatialDictionary(nn.Module):
    """Learnable dictionary stored as real and imaginary parameter tensors."""

    def __init__(self, M: int, N: int = 64, variant: str = "sdl", n_freqs: int = 257, hermitian: bool = True, seed=0):
        super().__init__()
        re, im = init_dictionary(M, N, variant, seed, n_freqs, dtype=torch.get_default_dtype())
        self.real = nn.Parameter(re)
        self.imag = nn.Parameter(im)
        self.variant = variant
        self.hermitian = hermitian

    @property
    def entries(self) -> torch.Tensor:
        return torch.complex(self.real, self.imag)

    def forward(self, spec: torch.Tensor) -> SpatialEmbedding:
        return spatial_embed(spec, self.entries, self.hermitian)
