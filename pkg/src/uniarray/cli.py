"""Batch command-line tools: synth, train, separate, eval, verify.

Exit codes: 0 success, 1 failure (including a failed verification), 2 bad usage
(unknown flags or config keys, missing files).
"""

from __future__ import annotations

import argparse
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch

from .config import ConfigError, RunConfig
from .dsp import Waveform, WavFormatError, read_wav, write_wav
from .geometry import GeometryError, from_label, permute_channels, subset
from .model import UniArray
from .scene import SceneError, SceneParams, random_scene, read_manifest, save_scene, write_manifest
from .train import CheckpointMismatchError, load_checkpoint, si_sdr, train, upit_loss

log = logging.getLogger("uniarray")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


@dataclass
class Example:
    """A loaded manifest scene: what training and evaluation need."""

    id: str
    mixture: Waveform
    targets: np.ndarray


def _config(args) -> RunConfig:
    overrides = dict(kv.split("=", 1) for kv in args.set or [])
    overrides = {k.strip(): v.strip() for k, v in overrides.items()}
    if args.config:
        return RunConfig.load(args.config, overrides)
    return RunConfig.parse("", overrides=overrides)


def _load_examples(manifest) -> list[Example]:
    out = []
    for entry in read_manifest(manifest):
        mix, targets = entry.load()
        out.append(Example(entry.id, mix, targets))
    return out


def reorder_reference(samples: np.ndarray, reference: int) -> np.ndarray:
    """Move channel `reference` to the front; the model treats channel 0 as reference."""
    c = samples.shape[0]
    if not 0 <= reference < c:
        raise UsageError(f"reference channel {reference} out of range for {c} channels")
    return samples[[reference] + [i for i in range(c) if i != reference]]


# -------------------------------------------------------------------- commands


def cmd_synth(cfg: RunConfig) -> list[Path]:
    geometry = from_label(cfg.geometry)
    if cfg.channels:
        geometry = subset(geometry, cfg.channels)
    params = SceneParams(t60_s=cfg.t60_s[0] if cfg.t60_s else None, noise=cfg.noise)
    entries = []
    for i in range(cfg.n_scenes):
        seed = cfg.scene_seed + i
        scene = random_scene(geometry, seed, cfg.duration_s, cfg.n_speakers, params)
        if cfg.reference_channel:
            order = reorder_reference(np.arange(scene.mixture.channels)[:, None], cfg.reference_channel)[:, 0]
            scene = permute_channels(scene, order)
        entries.append(save_scene(scene, cfg.data_dir, f"scene{i:03d}"))
        log.info("scene %d: seed %d t60 %.2f snr %.1f overlap %.2f", i, seed, scene.t60_s, scene.snr_db, scene.overlap_ratio)
    Path(cfg.manifest).parent.mkdir(parents=True, exist_ok=True)
    write_manifest(cfg.manifest, entries)
    return [Path(cfg.manifest)]


def cmd_train(cfg: RunConfig) -> dict:
    examples = _load_examples(cfg.manifest)
    model = UniArray(cfg.model_config())
    for path in (cfg.checkpoint, cfg.log):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
    history = train(model, examples, cfg.train_config(), log_path=cfg.log, checkpoint_path=cfg.checkpoint)
    return history[-1]


def separate_file(model: UniArray, wav: Waveform, reference: int = 0) -> np.ndarray:
    """(C, L) mixture with any C in 1..M -> (K, L) estimates."""
    if wav.channels > model.cfg.M:
        raise UsageError(f"{wav.channels} channels exceed the model's M={model.cfg.M}")
    dtype = next(model.parameters()).dtype
    mix = torch.tensor(reorder_reference(wav.samples, reference)[None], dtype=dtype)
    model.eval()
    with torch.no_grad():
        return model.separate_waveforms(mix)[0].double().numpy()


def cmd_separate(checkpoint, input_wav, out_dir, reference: int = 0) -> list[Path]:
    model, _ = load_checkpoint(checkpoint)
    wav = read_wav(input_wav)
    est = separate_file(model, wav, reference)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, e in enumerate(est):
        path = out_dir / f"{Path(input_wav).stem}_spk{k}.wav"
        write_wav(path, Waveform(e, wav.sample_rate))
        paths.append(path)
    return paths


def scene_si_sdri(estimates: np.ndarray, example: Example) -> tuple[float, float]:
    """(mean SI-SDR, mean SI-SDRi) in dB under the best speaker assignment."""
    _, perm = upit_loss(estimates, example.targets)
    refs = example.targets[list(perm)]
    mix_ref = np.repeat(example.mixture.samples[:1], len(refs), axis=0)
    out = si_sdr(estimates, refs)
    base = si_sdr(mix_ref, refs)
    return float(np.mean(out)), float(np.mean(out - base))


def cmd_eval(checkpoint, manifest, workers: int = 1, oracle: bool = False) -> list[dict]:
    """Per-scene SI-SDR and SI-SDRi; `oracle` scores the targets themselves (the ceiling)."""
    examples = _load_examples(manifest)
    model = None if oracle else load_checkpoint(checkpoint)[0]

    def one(ex: Example) -> dict:
        est = ex.targets if oracle else separate_file(model, ex.mixture)
        sdr, sdri = scene_si_sdri(est, ex)
        return {"id": ex.id, "channels": ex.mixture.channels, "si_sdr": sdr, "si_sdri": sdri}

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, examples))
    return [one(ex) for ex in examples]


def format_table(rows: list[dict]) -> str:
    lines = [f"{'scene':<12}{'ch':>4}{'SI-SDR':>10}{'SI-SDRi':>10}"]
    for r in rows:
        lines.append(f"{r['id']:<12}{r['channels']:>4}{r['si_sdr']:>10.2f}{r['si_sdri']:>10.2f}")
    lines.append(
        f"{'mean':<12}{'':>4}{np.mean([r['si_sdr'] for r in rows]):>10.2f}{np.mean([r['si_sdri'] for r in rows]):>10.2f}"
    )
    return "\n".join(lines)


def cmd_verify(skip_slow: bool = False, log_path=None) -> bool:
    from .verify import run_all

    results = run_all(skip_slow=skip_slow, log_path=log_path)
    return all(r.passed for r in results)


# ------------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uniarray", description="Geometry-agnostic multi-channel speech separation.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def with_config(sp):
        sp.add_argument("--config", help="key = value run config (see `uniarray keys`)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one config key; repeatable")
        return sp

    with_config(sub.add_parser("synth", help="simulate scenes and write WAVs plus a manifest"))
    with_config(sub.add_parser("train", help="train on a manifest, write a checkpoint and a JSONL log"))

    sp = sub.add_parser("separate", help="separate one multichannel WAV into K mono WAVs")
    sp.add_argument("checkpoint")
    sp.add_argument("input", help="WAV with 1..M channels")
    sp.add_argument("--out-dir", default=".", help="directory for <input>_spk<k>.wav (default: .)")
    sp.add_argument("--reference-channel", type=int, default=0, help="input channel used as reference (default: 0)")

    sp = sub.add_parser("eval", help="per-scene and mean SI-SDRi on a manifest")
    sp.add_argument("checkpoint", nargs="?", help="model checkpoint (not needed with --oracle)")
    sp.add_argument("manifest")
    sp.add_argument("--workers", type=int, default=1, help="parallel scene evaluation (default: 1)")
    sp.add_argument("--oracle", action="store_true", help="score the targets themselves (ceiling)")

    sp = sub.add_parser("verify", help="run the acceptance checks; nonzero exit on failure")
    sp.add_argument("--skip-slow", action="store_true", help="skip the 500-step training check")
    sp.add_argument("--log", help="JSONL log for the training check")

    sub.add_parser("keys", help="print every config key with its default")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        if args.command == "synth":
            cfg = _config(args)
            print(cmd_synth(cfg)[0])
        elif args.command == "train":
            cfg = _config(args)
            last = cmd_train(cfg)
            print(f"step {last['step']} loss {last['loss']:.3f} -> {cfg.checkpoint}")
        elif args.command == "separate":
            for path in cmd_separate(args.checkpoint, args.input, args.out_dir, args.reference_channel):
                print(path)
        elif args.command == "eval":
            if not args.oracle and not args.checkpoint:
                raise UsageError("eval needs a checkpoint unless --oracle is given")
            print(format_table(cmd_eval(args.checkpoint, args.manifest, args.workers, args.oracle)))
        elif args.command == "verify":
            return EXIT_OK if cmd_verify(args.skip_slow, args.log) else EXIT_FAIL
        elif args.command == "keys":
            print(RunConfig().dump(), end="")
    except (UsageError, ConfigError, GeometryError, FileNotFoundError, WavFormatError, CheckpointMismatchError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SceneError, RuntimeError, ValueError) as exc:
        print(f"failed: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
