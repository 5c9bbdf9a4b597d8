import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from uniarray.dsp import (
    ComplexSpectrogram,
    StftConfig,
    StftError,
    Waveform,
    WavFormatError,
    istft,
    istft_tensor,
    read_wav,
    stft,
    stft_tensor,
    write_wav,
)

CFG = StftConfig()


def enumerate_frames(length, n=512, hop=256):
    # frame starts on the reflect-padded signal until a window no longer fits
    padded = length + 2 * (n // 2)
    return sum(1 for s in range(0, padded, hop) if s + n <= padded)


def direct_frame(x, t, k, n=512, hop=256):
    """Windowed DFT of frame t at bin k, evaluated term by term."""
    padded = np.pad(x, n // 2, mode="reflect")
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(n) / n)
    seg = padded[t * hop : t * hop + n]
    return np.sum(w * seg * np.exp(-2j * np.pi * k * np.arange(n) / n))


def test_default_front_end():
    # 32 ms Hann window, 16 ms shift at 16 kHz
    assert (CFG.win_length, CFG.hop_length, CFG.n_bins) == (512, 256, 257)


def test_four_seconds_frame_count_by_enumeration():
    x = np.zeros((1, 64000))
    spec = stft(Waveform(x))
    assert spec.data.shape == (enumerate_frames(64000), 257, 1)
    assert spec.data.shape[0] == 251


@given(st.integers(512, 6000))
def test_frame_count_rule(length):
    assert CFG.num_frames(length) == enumerate_frames(length)


def test_zero_in_zero_out():
    spec = stft(Waveform(np.zeros((2, 2000))))
    assert not np.any(spec.data)
    assert not np.any(istft(spec).samples)


def test_matches_direct_windowed_dft(rng):
    x = rng.normal(size=3000)
    spec = stft(Waveform(x)).data[..., 0]
    for t, k in [(0, 0), (3, 17), (5, 256), (11, 100)]:
        assert abs(spec[t, k] - direct_frame(x, t, k)) < 1e-9


def test_bin_centred_sine_energy():
    k = 32
    x = np.sin(2 * np.pi * k * np.arange(16000) / 512)
    spec = stft(Waveform(x)).data[2:-2, :, 0]
    energy = np.abs(spec) ** 2
    # the Hann kernel is (-1/4, 1/2, -1/4): bin k holds 2/3, bins k-1..k+1 all of it
    assert np.all(energy.argmax(axis=1) == k)
    np.testing.assert_allclose(energy[:, k] / energy.sum(axis=1), 2 / 3, atol=1e-6)
    assert np.all(energy[:, k - 1 : k + 2].sum(axis=1) / energy.sum(axis=1) > 0.9999)
    t = 7
    assert abs(spec[t, k] - direct_frame(x, t + 2, k)) < 1e-8


@given(st.integers(0, 2**31 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_linearity(seed, a, b):
    r = np.random.default_rng(seed)
    x, y = r.normal(size=(1, 1500)), r.normal(size=(1, 1500))
    lhs = stft(Waveform(a * x + b * y)).data
    rhs = a * stft(Waveform(x)).data + b * stft(Waveform(y)).data
    assert np.max(np.abs(lhs - rhs)) < 1e-9 * (1 + np.max(np.abs(rhs)))


@given(st.integers(0, 2**31 - 1), st.integers(512, 8000), st.integers(1, 3))
def test_round_trip(seed, length, channels):
    x = np.random.default_rng(seed).normal(size=(channels, length))
    y = istft(stft(Waveform(x))).samples
    assert y.shape == x.shape
    err_db = 20 * np.log10(np.linalg.norm(y - x) / np.linalg.norm(x))
    assert err_db < -60


def test_parseval_on_long_noise(rng):
    x = rng.normal(size=16000 * 8)
    X = stft(Waveform(x)).data[..., 0]
    full = np.abs(X[:, 0]) ** 2 + np.abs(X[:, -1]) ** 2 + 2 * np.sum(np.abs(X[:, 1:-1]) ** 2, axis=1)
    frame_energy = full.sum() / 512
    # Hann^2 averages 3/8 per frame; two frames overlap every sample
    assert frame_energy / np.sum(x**2) == pytest.approx(0.75, rel=0.01)


def test_single_frame_locality():
    length = 4000
    T = CFG.num_frames(length)
    spec = torch.zeros(T, CFG.n_bins, dtype=torch.complex128)
    t = 6
    spec[t] = torch.randn(CFG.n_bins, dtype=torch.complex128)
    y = istft_tensor(spec, length).numpy()
    start = t * 256 - 256  # frame start in unpadded coordinates
    outside = np.ones(length, bool)
    outside[max(start, 0) : start + 512] = False
    assert np.any(y[~outside])
    assert not np.any(y[outside])


def test_short_signal_rejected():
    with pytest.raises(StftError):
        stft(Waveform(np.zeros(100)))


def test_istft_config_mismatch():
    spec = stft(Waveform(np.zeros(2000)))
    with pytest.raises(StftError):
        istft(spec, StftConfig(window_len_s=0.064, shift_s=0.032))
    with pytest.raises(StftError):
        istft_tensor(torch.zeros(5, 100, dtype=torch.complex128), 2000)


def test_tensor_stft_batches_leading_axes(rng):
    x = torch.tensor(rng.normal(size=(2, 3, 1200)))
    spec = stft_tensor(x)
    assert spec.shape == (2, 3, CFG.num_frames(1200), 257)
    assert torch.allclose(spec[1, 2], stft_tensor(x[1, 2]))


# ------------------------------------------------------------------------ wav


def test_wav_mono_shape(tmp_path):
    p = tmp_path / "a.wav"
    write_wav(p, Waveform(np.zeros(64000)))
    w = read_wav(p)
    assert (w.channels, len(w), w.sample_rate) == (1, 64000, 16000)


@given(st.integers(0, 2**31 - 1), st.integers(1, 8))
def test_wav_float_round_trip(tmp_path_factory, seed, channels):
    x = np.random.default_rng(seed).uniform(-1, 1, size=(channels, 300))
    p = tmp_path_factory.mktemp("w") / "x.wav"
    write_wav(p, Waveform(x))
    back = read_wav(p).samples
    np.testing.assert_array_equal(back, x.astype(np.float32).astype(np.float64))


def test_wav_pcm16_within_one_lsb(tmp_path, rng):
    x = rng.uniform(-0.9, 0.9, size=(2, 500))
    p = tmp_path / "p.wav"
    write_wav(p, Waveform(x), pcm16=True)
    assert np.max(np.abs(read_wav(p).samples - x)) <= 1 / 32768


def test_wav_errors(tmp_path):
    good = tmp_path / "g.wav"
    write_wav(good, Waveform(np.zeros(1000)))
    bad = tmp_path / "t.wav"
    bad.write_bytes(good.read_bytes()[:20])
    with pytest.raises(WavFormatError, match="malformed"):
        read_wav(bad)
    with pytest.raises(WavFormatError, match="channel-count"):
        write_wav(tmp_path / "c.wav", Waveform(np.zeros((2, 10))), channels=3)


def test_spectrogram_container():
    spec = stft(Waveform(np.zeros((2, 1000))))
    assert isinstance(spec, ComplexSpectrogram)
    assert spec.frame_shift_s == pytest.approx(0.016)
    assert spec.window_len_s == pytest.approx(0.032)
