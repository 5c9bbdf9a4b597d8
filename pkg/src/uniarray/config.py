"""Plain-text run configuration for the command-line tools.

A config file holds one ``key = value`` per line; ``#`` starts a comment.
Unknown keys are an error. Every key has a default (see `RunConfig`).
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .dsp import StftConfig
from .model import ModelConfig
from .train import TrainConfig


class ConfigError(ValueError):
    pass


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _ints(text: str) -> tuple[int, ...]:
    text = text.strip()
    return tuple(int(t) for t in text.split(",")) if text else ()


def _floats(text: str) -> tuple[float, ...]:
    text = text.strip()
    return tuple(float(t) for t in text.split(",")) if text else ()


@dataclass
class RunConfig:
    # array and scenes
    geometry: str = "C-8-5"  # base array label, e.g. C-8-5 or L-4-10
    channels: tuple = (0, 4)  # subset of the base array's mics; empty = all
    n_scenes: int = 3
    n_speakers: int = 2
    duration_s: float = 2.0
    scene_seed: int = 0  # scene i uses seed scene_seed + i
    t60_s: tuple = ()  # one fixed T60 in seconds; empty = sampled per scene
    noise: bool = True
    # model
    scale: str = "toy"  # toy | full
    M: int = 8
    mode: str = "vme"  # vme | zero_pad
    spatial: str = "sdl"  # sdl | fsdl | off
    hermitian: bool = True
    skip_connections: bool = True
    decoder_blocks: bool = False
    reference_channel: int = 0
    model_seed: int = 0
    # training
    steps: int = 500
    lr: float = 1e-3
    batch_size: int = 3
    micro_batch: int = 1
    train_seed: int = 0
    precision: str = "float32"
    # evaluation
    workers: int = 1
    # paths, relative to the config file when read from one
    data_dir: str = "data"
    manifest: str = "data/manifest.txt"
    checkpoint: str = "run/model.uarr"
    log: str = "run/train.jsonl"

    _parsers = {
        "channels": _ints,
        "t60_s": _floats,
    }

    def __post_init__(self):
        if self.scale not in ("toy", "full"):
            raise ConfigError("scale must be toy or full")
        if self.n_scenes < 1 or self.n_speakers < 1:
            raise ConfigError("n_scenes and n_speakers must be positive")
        if len(self.t60_s) > 1:
            raise ConfigError("t60_s takes at most one value")
        self.channels = tuple(self.channels)
        self.t60_s = tuple(self.t60_s)

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    @classmethod
    def parse(cls, text: str, base_dir: Path | None = None, overrides: dict | None = None) -> "RunConfig":
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            raw[key] = value
        raw.update(overrides or {})
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(raw) - set(known))
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        values = {}
        for key, text_value in raw.items():
            default = known[key].default
            try:
                if key in cls._parsers:
                    values[key] = cls._parsers[key](text_value)
                elif isinstance(default, bool):
                    values[key] = _bool(text_value)
                elif isinstance(default, int):
                    values[key] = int(text_value)
                elif isinstance(default, float):
                    values[key] = float(text_value)
                else:
                    values[key] = text_value
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from exc
        cfg = cls(**values)
        if base_dir is not None:
            for key in ("data_dir", "manifest", "checkpoint", "log"):
                path = Path(getattr(cfg, key))
                if key not in (overrides or {}) and not path.is_absolute():
                    setattr(cfg, key, str(Path(base_dir) / path))
        return cfg

    @classmethod
    def load(cls, path, overrides: dict | None = None) -> "RunConfig":
        path = Path(path)
        return cls.parse(path.read_text(), path.parent, overrides)

    def dump(self) -> str:
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = str(v).lower()
            out.append(f"{f.name} = {v}")
        return "\n".join(out) + "\n"

    def model_config(self) -> ModelConfig:
        kw = dict(
            M=self.M, K=self.n_speakers, mode=self.mode, spatial=self.spatial, hermitian=self.hermitian,
            skip_connections=self.skip_connections, decoder_blocks=self.decoder_blocks,
            reference_channel=0, seed=self.model_seed, stft=StftConfig(),
        )
        return ModelConfig.toy(**kw) if self.scale == "toy" else ModelConfig.full(**kw)

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            lr=self.lr, steps=self.steps, batch_size=self.batch_size, seed=self.train_seed,
            precision=self.precision, micro_batch=self.micro_batch,
        )
