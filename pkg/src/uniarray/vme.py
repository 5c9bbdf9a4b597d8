"""Virtual microphone estimation: lift a C-channel spectrogram to exactly M channels.

Adjacent real mics are paired with wraparound (C pairs for C real mics), the
M - C virtual mics are spread over the pairs as evenly as possible, and each
virtual signal is interpolated between its two real mics: log-linear in
magnitude, shortest-arc linear in phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import torch


class VmeError(ValueError):
    pass


@dataclass(frozen=True)
class VmePlan:
    C: int
    M: int
    pair_list: tuple[tuple[int, int], ...]
    counts: tuple[int, ...]
    # one (pair index, alpha) per virtual mic, in output channel order
    virtual: tuple[tuple[int, float], ...]

    @property
    def n_virtual(self) -> int:
        return self.M - self.C

    @property
    def n_pairs(self) -> int:
        return len(self.pair_list)

    @property
    def fractions(self) -> tuple[float, ...]:
        return tuple(a for _, a in self.virtual)


def plan_virtual_mics(C: int, M: int) -> VmePlan:
    if C < 1 or C > M:
        raise VmeError(f"need 1 <= C <= M, got C={C}, M={M}")
    n_v, n_p = M - C, C
    pairs = tuple((i, (i + 1) % C) for i in range(C))
    base, extra = divmod(n_v, n_p)
    counts = tuple(base + (1 if i < extra else 0) for i in range(n_p))
    virtual = tuple((p, k / (n + 1)) for p, n in enumerate(counts) for k in range(1, n + 1))
    return VmePlan(C, M, pairs, counts, virtual)


def _wrap(phase: torch.Tensor) -> torch.Tensor:
    """Wrap to (-pi, pi]."""
    return phase - 2 * math.pi * torch.ceil((phase - math.pi) / (2 * math.pi))


def interpolate_virtual(x_i: torch.Tensor, x_j: torch.Tensor, alpha: float) -> torch.Tensor:
    """Complex interpolation between two real-mic spectrograms at fraction `alpha`."""
    if not 0.0 <= alpha <= 1.0:
        raise VmeError(f"alpha must lie in [0, 1], got {alpha}")
    if alpha == 0.0:
        return x_i.clone()
    if alpha == 1.0:
        return x_j.clone()
    mag_i, mag_j = x_i.abs(), x_j.abs()
    ph_i, ph_j = torch.angle(x_i), torch.angle(x_j)
    zero_i, zero_j = mag_i == 0, mag_j == 0
    mag = mag_i ** (1 - alpha) * mag_j**alpha
    phase = ph_i + alpha * _wrap(ph_j - ph_i)
    phase = torch.where(zero_i, ph_j, torch.where(zero_j, ph_i, phase))
    mag = torch.where(zero_i | zero_j, torch.zeros_like(mag), mag)
    v = torch.polar(mag, phase)
    return torch.where(x_i == x_j, x_i, v)


def augment_channels(spec: torch.Tensor, M: int, mode: str = "vme") -> torch.Tensor:
    """(..., C) complex -> (..., M); real channels first, then virtual or zero channels."""
    C = spec.shape[-1]
    if C > M:
        raise VmeError(f"input has {C} channels, more than M={M}")
    if mode == "zero_pad":
        pad = torch.zeros(*spec.shape[:-1], M - C, dtype=spec.dtype)
        return torch.cat([spec, pad], dim=-1)
    if mode != "vme":
        raise VmeError(f"unknown augmentation mode {mode!r}")
    plan = plan_virtual_mics(C, M)
    chans = [spec[..., c] for c in range(C)]
    for p, alpha in plan.virtual:
        i, j = plan.pair_list[p]
        chans.append(interpolate_virtual(spec[..., i], spec[..., j], alpha))
    return torch.stack(chans, dim=-1)
