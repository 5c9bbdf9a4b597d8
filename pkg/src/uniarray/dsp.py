"""WAV I/O and the STFT/iSTFT analysis-synthesis pair.

The transforms operate on torch tensors so they can sit inside the training
graph; `Waveform` and `ComplexSpectrogram` are thin numpy-facing containers.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from scipy.io import wavfile

SAMPLE_RATE = 16000


class WavFormatError(ValueError):
    """Raised for malformed, truncated or unsupported WAV files."""


class StftError(ValueError):
    pass


@dataclass
class Waveform:
    samples: np.ndarray  # (C, L)
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        s = np.asarray(self.samples)
        if s.ndim == 1:
            s = s[None, :]
        if s.ndim != 2:
            raise ValueError(f"samples must be (channels, length), got shape {s.shape}")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        self.samples = s

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    def __len__(self) -> int:
        return self.samples.shape[1]


@dataclass(frozen=True)
class StftConfig:
    window_len_s: float = 0.032
    shift_s: float = 0.016
    sample_rate: int = SAMPLE_RATE

    @property
    def win_length(self) -> int:
        return int(round(self.window_len_s * self.sample_rate))

    @property
    def hop_length(self) -> int:
        return int(round(self.shift_s * self.sample_rate))

    @property
    def fft_size(self) -> int:
        return self.win_length

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1

    def __post_init__(self):
        if self.win_length % self.hop_length:
            raise StftError("shift must divide the window length")

    def window(self, dtype=torch.float64) -> torch.Tensor:
        # periodic Hann: exact constant overlap-add at 50% overlap
        return torch.hann_window(self.win_length, periodic=True, dtype=dtype)

    def num_frames(self, length: int) -> int:
        return 1 + length // self.hop_length


@dataclass
class ComplexSpectrogram:
    data: np.ndarray  # (T, F, C) complex
    config: StftConfig = field(default_factory=StftConfig)
    length: int | None = None  # waveform length the frames were computed from

    @property
    def frame_shift_s(self) -> float:
        return self.config.shift_s

    @property
    def window_len_s(self) -> float:
        return self.config.window_len_s


# --------------------------------------------------------------------------- wav


def read_wav(path) -> Waveform:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 44 or raw[:4] != b"RIFF" or raw[8:12] != b"WAVE":
        raise WavFormatError(f"{path}: malformed file (missing RIFF/WAVE header)")
    try:
        rate, data = wavfile.read(path)
    except (ValueError, struct.error, EOFError) as exc:
        raise WavFormatError(f"{path}: malformed file ({exc})") from exc
    if data.dtype == np.int16:
        samples = data.astype(np.float64) / 32768.0
    elif data.dtype == np.float32:
        samples = data.astype(np.float64)
    else:
        raise WavFormatError(f"{path}: unsupported codec {data.dtype} (need PCM-16 or float32)")
    samples = samples.T if samples.ndim == 2 else samples[None, :]
    return Waveform(np.ascontiguousarray(samples), int(rate))


def write_wav(path, wav: Waveform, channels: int | None = None, pcm16: bool = False) -> None:
    """Write float32 (default) or PCM-16 WAV; `channels` guards against layout mix-ups."""
    if channels is not None and channels != wav.channels:
        raise WavFormatError(f"channel-count mismatch: expected {channels}, got {wav.channels}")
    if not 1 <= wav.channels <= 8:
        raise WavFormatError(f"unsupported channel count {wav.channels}")
    data = wav.samples.T
    if pcm16:
        data = np.clip(np.round(data * 32768.0), -32768, 32767).astype(np.int16)
    else:
        data = data.astype(np.float32)
    wavfile.write(Path(path), wav.sample_rate, data)


# -------------------------------------------------------------------- transforms


def stft_tensor(x: torch.Tensor, config: StftConfig = StftConfig()) -> torch.Tensor:
    """(..., L) real -> (..., T, F) complex, reflect-padded by half a window."""
    n, hop = config.win_length, config.hop_length
    if x.shape[-1] < n:
        raise StftError(f"signal of {x.shape[-1]} samples is shorter than the {n}-sample window")
    lead = x.shape[:-1]
    flat = x.reshape(-1, 1, x.shape[-1])
    flat = torch.nn.functional.pad(flat, (n // 2, n // 2), mode="reflect")[:, 0]
    frames = flat.unfold(-1, n, hop)  # (B, T, n)
    spec = torch.fft.rfft(frames * config.window(x.dtype), n=config.fft_size)
    return spec.reshape(*lead, *spec.shape[-2:])


def istft_tensor(spec: torch.Tensor, length: int, config: StftConfig = StftConfig()) -> torch.Tensor:
    """(..., T, F) complex -> (..., length) real by windowed overlap-add."""
    n, hop = config.win_length, config.hop_length
    if spec.shape[-1] != config.n_bins:
        raise StftError(f"spectrogram has {spec.shape[-1]} bins, config expects {config.n_bins}")
    n_frames = spec.shape[-2]
    if n_frames != config.num_frames(length):
        raise StftError(f"{n_frames} frames do not match a {length}-sample signal")
    lead = spec.shape[:-2]
    real_dtype = spec.real.dtype
    window = config.window(real_dtype)
    frames = torch.fft.irfft(spec.reshape(-1, n_frames, spec.shape[-1]), n=config.fft_size)
    frames = frames * window
    padded_len = (n_frames - 1) * hop + n
    out = torch.nn.functional.fold(
        frames.transpose(1, 2), output_size=(1, padded_len), kernel_size=(1, n), stride=(1, hop)
    )[:, 0, 0]
    wsum = torch.nn.functional.fold(
        (window**2).expand(n_frames, n).T[None], output_size=(1, padded_len), kernel_size=(1, n), stride=(1, hop)
    )[0, 0, 0]
    out = out / torch.clamp(wsum, min=1e-8)
    out = out[:, n // 2 : n // 2 + length]
    return out.reshape(*lead, length)


def stft(wav: Waveform, config: StftConfig = StftConfig()) -> ComplexSpectrogram:
    x = torch.as_tensor(wav.samples, dtype=torch.float64)
    spec = stft_tensor(x, config)  # (C, T, F)
    return ComplexSpectrogram(spec.permute(1, 2, 0).numpy(), config, len(wav))


def istft(spec: ComplexSpectrogram, config: StftConfig | None = None, length: int | None = None) -> Waveform:
    config = config or spec.config
    if config != spec.config:
        raise StftError("config mismatch between spectrogram and synthesis")
    if length is None:
        length = spec.length if spec.length is not None else (spec.data.shape[0] - 1) * config.hop_length
    data = torch.as_tensor(spec.data).permute(2, 0, 1)
    wav = istft_tensor(data, length, config)
    return Waveform(wav.numpy(), config.sample_rate)

