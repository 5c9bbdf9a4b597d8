"""Reverberant multi-channel mixture synthesis.

Image-source room impulse responses, synthetic speech-like sources, diffuse-ish
noise, and a plain-text scene manifest.
"""

from __future__ import annotations

import os

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import signal

from .dsp import SAMPLE_RATE, Waveform, read_wav, write_wav
from .geometry import ArrayGeometry, from_label

SPEED_OF_SOUND = 343.0
SINC_HALF_WIDTH = 20

T60_RANGE = (0.1, 1.0)
SNR_RANGE = (10.0, 20.0)
OVERLAP_RANGE = (0.1, 1.0)
ROOM_RANGE = ((4.0, 8.0), (4.0, 8.0), (2.5, 3.5))


class SceneError(ValueError):
    pass


# ------------------------------------------------------------------------- RIRs


def sabine_reflection(room_dims_m, t60_s: float) -> float:
    """Wall reflection coefficient for a uniform absorption that yields `t60_s` by Sabine."""
    lx, ly, lz = room_dims_m
    volume = lx * ly * lz
    surface = 2 * (lx * ly + lx * lz + ly * lz)
    alpha = min(0.161 * volume / (surface * t60_s), 0.999)
    return float(np.sqrt(1.0 - alpha))


def _image_sources(room, src, max_order):
    """Image positions and reflection counts with total order <= max_order."""
    n = np.arange(-max_order, max_order + 1)
    per_axis = []
    for axis in range(3):
        nn, qq = np.meshgrid(n, [0, 1], indexing="ij")
        nn, qq = nn.ravel(), qq.ravel()
        pos = (1 - 2 * qq) * src[axis] + 2 * nn * room[axis]
        order = np.abs(nn - qq) + np.abs(nn)
        keep = order <= max_order
        per_axis.append((pos[keep], order[keep]))
    (px, ox), (py, oy), (pz, oz) = per_axis
    pos = np.stack(np.meshgrid(px, py, pz, indexing="ij"), -1).reshape(-1, 3)
    order = (ox[:, None, None] + oy[None, :, None] + oz[None, None, :]).ravel()
    keep = order <= max_order
    return pos[keep], order[keep]


def _fractional_delay_sum(delays, gains, length, half=SINC_HALF_WIDTH, chunk=20000):
    h = np.zeros(length + 2 * half + 2)
    offsets = np.arange(-half + 1, half + 1)
    for start in range(0, len(delays), chunk):
        d = delays[start : start + chunk]
        g = gains[start : start + chunk]
        base = np.floor(d).astype(int)
        idx = base[:, None] + offsets[None, :]
        frac = idx - d[:, None]
        taps = np.sinc(frac) * (0.5 + 0.5 * np.cos(np.pi * frac / (half + 1)))
        valid = idx >= 0
        np.add.at(h, idx[valid], (g[:, None] * taps)[valid])
    return h[:length]


def simulate_rir(
    room_dims_m,
    source_pos,
    geometry,
    t60_s: float,
    max_order: int = 6,
    fs: int = SAMPLE_RATE,
) -> np.ndarray:
    """Per-mic impulse responses, shape (C, L), time zero at source emission.

    `geometry` is either an ArrayGeometry already placed in room coordinates or
    a (C, 3) position array.
    """
    room = np.asarray(room_dims_m, dtype=float)
    src = np.asarray(source_pos, dtype=float)
    mics = geometry.mic_positions if isinstance(geometry, ArrayGeometry) else np.atleast_2d(geometry)
    if t60_s <= 0:
        raise SceneError("t60 must be positive")
    for p, what in [(src, "source")] + [(m, f"mic {i}") for i, m in enumerate(mics)]:
        if np.any(p <= 0) or np.any(p >= room):
            raise SceneError(f"{what} at {p} is not strictly inside the room {room}")
    direct = np.linalg.norm(mics - src, axis=1)
    if np.any(direct < 1e-3):
        raise SceneError("source coincides with a microphone")

    beta = sabine_reflection(room, t60_s)
    images, order = _image_sources(room, src, max_order)
    rirs = []
    for mic in mics:
        dist = np.linalg.norm(images - mic, axis=1)
        delays = dist / SPEED_OF_SOUND * fs
        gains = beta**order / (4 * np.pi * dist)
        length = int(np.ceil(delays.max())) + SINC_HALF_WIDTH + 1
        rirs.append((delays, gains, length))
    length = max(r[2] for r in rirs)
    return np.stack([_fractional_delay_sum(d, g, length) for d, g, _ in rirs])


def schroeder_t60(rir: np.ndarray, fs: int = SAMPLE_RATE, lo_db=-5.0, hi_db=-25.0) -> float:
    """T60 extrapolated from a linear fit of the backward-integrated decay between lo_db and hi_db."""
    edc = np.cumsum(rir[::-1] ** 2)[::-1]
    edc_db = 10 * np.log10(edc / edc[0] + 1e-300)
    idx = np.nonzero((edc_db <= lo_db) & (edc_db >= hi_db))[0]
    t = idx / fs
    slope, _ = np.polyfit(t, edc_db[idx], 1)
    return -60.0 / slope


# ---------------------------------------------------------------------- sources


def synthetic_speech(duration_s: float, rng: np.random.Generator, fs: int = SAMPLE_RATE) -> np.ndarray:
    """Speech-like test signal: AM harmonic complex with gliding pitch plus noise bursts."""
    n = int(round(duration_s * fs))
    t = np.arange(n) / fs
    f0 = rng.uniform(90, 240) * (1 + 0.08 * np.sin(2 * np.pi * rng.uniform(0.5, 2) * t + rng.uniform(0, 6.3)))
    phase = 2 * np.pi * np.cumsum(f0) / fs
    formants = rng.uniform([300, 900, 2000], [900, 2200, 3200])
    voiced = np.zeros(n)
    for h in range(1, 40):
        fh = h * f0
        env = sum(np.exp(-0.5 * ((fh - fm) / 150.0) ** 2) for fm in formants) + 0.05 / h
        voiced += env * np.sin(h * phase) * (fh < fs / 2 - 500)
    syllable = np.clip(np.sin(2 * np.pi * rng.uniform(3, 6) * t + rng.uniform(0, 6.3)), 0, None) ** 1.5
    x = voiced * syllable
    bursts = np.zeros(n)
    for _ in range(max(1, int(duration_s * 3))):
        start = rng.integers(0, max(1, n - fs // 10))
        width = int(rng.uniform(0.02, 0.08) * fs)
        bursts[start : start + width] += rng.normal(0, 1, min(width, n - start)) * np.hanning(min(width, n - start))
    x = x / (np.std(x) + 1e-12) + 0.3 * bursts
    return 0.1 * x / (np.max(np.abs(x)) + 1e-12)


def pink_noise(n: int, rng: np.random.Generator) -> np.ndarray:
    spec = np.fft.rfft(rng.normal(size=n))
    f = np.arange(len(spec))
    spec[1:] /= np.sqrt(f[1:])
    spec[0] = 0
    x = np.fft.irfft(spec, n)
    return x / (np.std(x) + 1e-12)


def random_allpass(x: np.ndarray, rng: np.random.Generator, sections: int = 3) -> np.ndarray:
    for _ in range(sections):
        r, theta = rng.uniform(0.5, 0.95), rng.uniform(0, np.pi)
        a = np.array([1.0, -2 * r * np.cos(theta), r * r])
        x = signal.lfilter(a[::-1], a, x)
    return x


def diffuse_noise(channels: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """Independent pink noise per channel, each through its own random all-pass cascade."""
    return np.stack([random_allpass(pink_noise(n, rng), rng) for _ in range(channels)])


# ------------------------------------------------------------------------ scene


@dataclass
class SceneParams:
    """Scene knobs; None means sample from the training distribution."""

    t60_s: float | None = None
    snr_db: float | None = None
    overlap_ratio: float | None = None
    room_dims_m: tuple | None = None
    max_order: int = 6
    noise: bool = True
    free_field: bool = False


@dataclass
class MixtureScene:
    mixture: Waveform
    targets: np.ndarray  # (K, L) reverberant images at the reference channel
    images: np.ndarray  # (K, C, L)
    noise: np.ndarray | None  # (C, L)
    t60_s: float
    snr_db: float
    overlap_ratio: float
    room_dims_m: tuple
    seed: int | None = None
    geometry: ArrayGeometry | None = None
    offsets: list = field(default_factory=list)

    @property
    def n_speakers(self) -> int:
        return len(self.targets)


def _place(room, geometry, rng, n_sources):
    room = np.asarray(room)
    for _ in range(1000):
        center = np.array([rng.uniform(1.0, room[0] - 1.0), rng.uniform(1.0, room[1] - 1.0), rng.uniform(1.0, 2.0)])
        mics = geometry.placed(center, rng.uniform(0, 2 * np.pi))
        srcs = []
        for _ in range(n_sources):
            p = np.array([rng.uniform(0.5, room[0] - 0.5), rng.uniform(0.5, room[1] - 0.5), rng.uniform(1.2, 1.9)])
            if np.linalg.norm(p[:2] - center[:2]) >= 0.75:
                srcs.append(p)
        if len(srcs) == n_sources:
            return mics, srcs
    raise SceneError("could not place sources inside the room")


def synth_scene(
    sources: Sequence,
    geometry: ArrayGeometry,
    params: SceneParams | None = None,
    rng: np.random.Generator | int | None = None,
    fs: int = SAMPLE_RATE,
) -> MixtureScene:
    params = params or SceneParams()
    seed = rng if isinstance(rng, (int, np.integer)) else None
    rng = np.random.default_rng(rng)
    srcs = [np.asarray(s.samples[0] if isinstance(s, Waveform) else s, dtype=float) for s in sources]
    if not srcs or any(s.ndim != 1 for s in srcs):
        raise SceneError("need at least one single-channel source")

    t60 = params.t60_s if params.t60_s is not None else rng.uniform(*T60_RANGE)
    snr = params.snr_db if params.snr_db is not None else rng.uniform(*SNR_RANGE)
    overlap = params.overlap_ratio if params.overlap_ratio is not None else rng.uniform(*OVERLAP_RANGE)
    room = tuple(params.room_dims_m) if params.room_dims_m is not None else tuple(rng.uniform(*r) for r in ROOM_RANGE)
    if not (T60_RANGE[0] <= t60 <= T60_RANGE[1] and SNR_RANGE[0] <= snr <= SNR_RANGE[1]):
        raise SceneError(f"t60={t60} or snr={snr} outside the supported ranges")
    if not OVERLAP_RANGE[0] <= overlap <= OVERLAP_RANGE[1]:
        raise SceneError(f"overlap={overlap} outside {OVERLAP_RANGE}")

    mics, positions = _place(room, geometry, rng, len(srcs))
    order = 0 if params.free_field else params.max_order
    offsets = [0] + [int(round((1 - overlap) * len(srcs[0])))] * (len(srcs) - 1)
    length = max(o + len(s) for o, s in zip(offsets, srcs))

    images = np.zeros((len(srcs), len(mics), length))
    for k, (s, pos, off) in enumerate(zip(srcs, positions, offsets)):
        rir = simulate_rir(room, pos, mics, t60, order, fs)
        for c in range(len(mics)):
            y = signal.fftconvolve(s, rir[c])[: length - off]
            images[k, c, off : off + len(y)] = y

    speech = images.sum(axis=0)
    noise = None
    mixture = speech.copy()
    if params.noise:
        noise = diffuse_noise(len(mics), length, rng)
        noise *= np.sqrt(np.sum(speech**2) / np.sum(noise**2) / 10 ** (snr / 10))
        mixture = speech + noise
    placed = ArrayGeometry(mics, geometry.label)
    return MixtureScene(
        Waveform(mixture, fs), images[:, 0].copy(), images, noise, float(t60), float(snr),
        float(overlap), room, seed, placed, offsets,
    )


def random_scene(
    geometry: ArrayGeometry,
    seed: int,
    duration_s: float = 2.0,
    n_speakers: int = 2,
    params: SceneParams | None = None,
    fs: int = SAMPLE_RATE,
) -> MixtureScene:
    """Synthetic sources plus `synth_scene`, all driven by one seed.

    Sources are sized so the offset mixture lasts exactly `duration_s`.
    """
    rng = np.random.default_rng(seed)
    params = replace(params or SceneParams())
    if params.overlap_ratio is None:
        params.overlap_ratio = rng.uniform(*OVERLAP_RANGE)
    n = int(round(duration_s * fs))
    src_len = n if n_speakers == 1 else int(np.ceil(n / (2 - params.overlap_ratio)))
    sources = [synthetic_speech(src_len / fs, rng, fs) for _ in range(n_speakers)]
    scene = synth_scene(sources, geometry, params, rng, fs)
    scene = crop_scene(scene, n)
    scene.seed = seed
    return scene


def crop_scene(scene: MixtureScene, length: int) -> MixtureScene:
    """Trim (or zero-extend) every signal in the scene to `length` samples."""

    def fit(x):
        if x is None:
            return None
        out = np.zeros(x.shape[:-1] + (length,))
        m = min(length, x.shape[-1])
        out[..., :m] = x[..., :m]
        return out

    return replace(
        scene,
        mixture=Waveform(fit(scene.mixture.samples), scene.mixture.sample_rate),
        targets=fit(scene.targets),
        images=fit(scene.images),
        noise=fit(scene.noise),
    )


# --------------------------------------------------------------------- manifest


MANIFEST_KEYS = ("id", "seed", "geometry", "t60", "snr", "overlap", "mixture", "targets")


@dataclass
class ManifestEntry:
    id: str
    seed: int
    geometry: str
    t60: float
    snr: float
    overlap: float
    mixture: Path
    targets: list[Path]

    def format(self, root: Path) -> str:
        rel = lambda p: os.path.relpath(Path(p).resolve(), root)  # noqa: E731
        fields = {
            "id": self.id, "seed": self.seed, "geometry": self.geometry,
            "t60": f"{self.t60:.4f}", "snr": f"{self.snr:.4f}", "overlap": f"{self.overlap:.4f}",
            "mixture": rel(self.mixture), "targets": ",".join(rel(t) for t in self.targets),
        }
        return " ".join(f"{k}={v}" for k, v in fields.items())

    def load(self) -> tuple[Waveform, np.ndarray]:
        mix = read_wav(self.mixture)
        targets = np.concatenate([read_wav(t).samples for t in self.targets])
        return mix, targets


def write_manifest(path, entries: Sequence[ManifestEntry]) -> None:
    path = Path(path)
    lines = ["# one scene per line: key=value fields, paths relative to this file"]
    lines += [e.format(path.parent.resolve()) for e in entries]
    path.write_text("\n".join(lines) + "\n")


def read_manifest(path) -> list[ManifestEntry]:
    path = Path(path)
    root = path.parent
    entries = []
    for lineno, line in enumerate(path.read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        try:
            kv = dict(tok.split("=", 1) for tok in line.split())
        except ValueError as exc:
            raise SceneError(f"{path}:{lineno}: expected key=value tokens") from exc
        missing = set(MANIFEST_KEYS) - kv.keys()
        unknown = kv.keys() - set(MANIFEST_KEYS)
        if missing or unknown:
            raise SceneError(f"{path}:{lineno}: missing {sorted(missing)} unknown {sorted(unknown)}")
        entries.append(
            ManifestEntry(
                kv["id"], int(kv["seed"]), kv["geometry"], float(kv["t60"]), float(kv["snr"]),
                float(kv["overlap"]), root / kv["mixture"], [root / t for t in kv["targets"].split(",")],
            )
        )
    return entries


def save_scene(scene: MixtureScene, out_dir, scene_id: str) -> ManifestEntry:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    mix_path = out_dir / f"{scene_id}_mix.wav"
    write_wav(mix_path, scene.mixture)
    target_paths = []
    for k, t in enumerate(scene.targets):
        p = out_dir / f"{scene_id}_s{k}.wav"
        write_wav(p, Waveform(t, scene.mixture.sample_rate))
        target_paths.append(p)
    label = scene.geometry.label if scene.geometry is not None else ""
    return ManifestEntry(
        scene_id, -1 if scene.seed is None else scene.seed, label, scene.t60_s, scene.snr_db,
        scene.overlap_ratio, mix_path, target_paths,
    )


def training_geometries() -> list[ArrayGeometry]:
    """The 8-mic 5 cm circle and its training subsets."""
    from .geometry import TRAIN_SUBSETS, subset

    base = from_label("C-8-5")
    return [base] + [subset(base, idx) for idx in TRAIN_SUBSETS]
