"""Microphone array geometries and channel permutation."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np


class GeometryError(ValueError):
    pass


def _cm(x: float) -> str:
    return f"{x * 100:g}"


@dataclass(frozen=True)
class ArrayGeometry:
    mic_positions: np.ndarray  # (C, 3) meters
    label: str = ""

    def __post_init__(self):
        pos = np.atleast_2d(np.asarray(self.mic_positions, dtype=float))
        if pos.shape[0] < 1 or pos.shape[1] != 3:
            raise GeometryError(f"mic_positions must be (C>=1, 3), got {pos.shape}")
        if len(pos) > 1:
            d = np.linalg.norm(pos[:, None] - pos[None], axis=-1)
            if np.any(d[np.triu_indices(len(pos), 1)] <= 0):
                raise GeometryError("microphone positions must be pairwise distinct")
        object.__setattr__(self, "mic_positions", pos)

    @property
    def n_mics(self) -> int:
        return len(self.mic_positions)

    def distances(self) -> np.ndarray:
        p = self.mic_positions
        return np.linalg.norm(p[:, None] - p[None], axis=-1)

    def placed(self, center, yaw: float = 0.0) -> np.ndarray:
        """Absolute mic positions after rotating by `yaw` about z and translating to `center`."""
        c, s = np.cos(yaw), np.sin(yaw)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return self.mic_positions @ rot.T + np.asarray(center, dtype=float)


def circular_array(n: int, radius_m: float) -> ArrayGeometry:
    if n < 1 or radius_m <= 0:
        raise GeometryError("need n >= 1 and radius > 0")
    ang = 2 * np.pi * np.arange(n) / n
    pos = np.stack([radius_m * np.cos(ang), radius_m * np.sin(ang), np.zeros(n)], axis=1)
    return ArrayGeometry(pos, f"C-{n}-{_cm(radius_m)}")


def linear_array(n: int, spacing_m: float) -> ArrayGeometry:
    if n < 1 or spacing_m <= 0:
        raise GeometryError("need n >= 1 and spacing > 0")
    x = (np.arange(n) - (n - 1) / 2) * spacing_m
    pos = np.stack([x, np.zeros(n), np.zeros(n)], axis=1)
    return ArrayGeometry(pos, f"L-{n}-{_cm(spacing_m)}")


def from_label(label: str) -> ArrayGeometry:
    """Parse tags such as ``C-8-5`` (circular, radius in cm) or ``L-2-10`` (linear, spacing in cm)."""
    try:
        kind, n, size = label.split("-")
        n, size = int(n), float(size) / 100
    except ValueError as exc:
        raise GeometryError(f"bad geometry label {label!r}") from exc
    if kind.upper() == "C":
        return circular_array(n, size)
    if kind.upper() == "L":
        return linear_array(n, size)
    raise GeometryError(f"bad geometry label {label!r}")


def subset(geometry: ArrayGeometry, indices: Sequence[int]) -> ArrayGeometry:
    idx = list(indices)
    if len(set(idx)) != len(idx):
        raise GeometryError(f"duplicate indices in {idx}")
    bad = [i for i in idx if not 0 <= i < geometry.n_mics]
    if bad:
        raise GeometryError(f"indices {bad} out of range for {geometry.n_mics} mics")
    label = f"{geometry.label}{{{','.join(map(str, idx))}}}"
    return ArrayGeometry(geometry.mic_positions[idx], label)


# subsets of the 8-mic circle used for training geometries
TRAIN_SUBSETS = ((0, 4), (0, 3, 5), (0, 2, 4, 6), (1, 2, 3, 5, 6, 7))


def _check_perm(perm, c):
    perm = list(perm)
    if sorted(perm) != list(range(c)):
        raise GeometryError(f"{perm} is not a permutation of 0..{c - 1}")
    return perm


def permute_channels(obj, permutation):
    """Reorder the channel axis of a geometry, array, Waveform or MixtureScene.

    numpy/torch arrays are taken to be channel-last (``T x F x C``); whatever
    lands at index 0 becomes the reference channel.
    """
    from .dsp import Waveform
    from .scene import MixtureScene

    if isinstance(obj, ArrayGeometry):
        perm = _check_perm(permutation, obj.n_mics)
        return ArrayGeometry(obj.mic_positions[perm], obj.label)
    if isinstance(obj, Waveform):
        perm = _check_perm(permutation, obj.channels)
        return Waveform(obj.samples[perm], obj.sample_rate)
    if isinstance(obj, MixtureScene):
        perm = _check_perm(permutation, obj.mixture.channels)
        images = obj.images[:, perm]
        return replace(
            obj,
            mixture=Waveform(obj.mixture.samples[perm], obj.mixture.sample_rate),
            images=images,
            noise=None if obj.noise is None else obj.noise[perm],
            targets=images[:, 0].copy(),
            geometry=None if obj.geometry is None else permute_channels(obj.geometry, perm),
        )
    perm = _check_perm(permutation, obj.shape[-1])
    return obj[..., perm]
