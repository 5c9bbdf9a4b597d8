"""SI-SDR, uPIT, the toy training loop and checkpoints."""

from __future__ import annotations

import itertools
import json
import logging
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch

from .model import ModelConfig, UniArray
from .nn import load_tensors, save_tensors
from .scene import MixtureScene

log = logging.getLogger(__name__)

CLAMP_DB = 30.0


class TrainingError(RuntimeError):
    pass


class CheckpointMismatchError(ValueError):
    pass


# ---------------------------------------------------------------------- metrics


def si_sdr(estimate, reference, clamp_db: float | None = CLAMP_DB):
    """Scale-invariant SDR in dB over the last axis, clamped to +-clamp_db.

    Accepts numpy arrays (returns float or ndarray) or torch tensors (returns a
    tensor that carries gradients).
    """
    as_numpy = not isinstance(estimate, torch.Tensor)
    est = torch.as_tensor(np.asarray(estimate, dtype=np.float64) if as_numpy else estimate)
    ref = torch.as_tensor(np.asarray(reference, dtype=np.float64) if as_numpy else reference)
    if est.shape != ref.shape:
        raise ValueError(f"estimate {tuple(est.shape)} and reference {tuple(ref.shape)} differ in shape")
    ref_energy = (ref * ref).sum(-1)
    if torch.any(ref_energy == 0):
        raise ValueError("reference signal is all zeros")
    alpha = (est * ref).sum(-1) / ref_energy
    target = alpha[..., None] * ref
    residual = target - est
    value = 10 * torch.log10((target * target).sum(-1) / (residual * residual).sum(-1))
    if clamp_db is not None:
        value = value.clamp(-clamp_db, clamp_db)
    if as_numpy:
        value = value.numpy()
        return float(value) if value.ndim == 0 else value
    return value


def si_sdri(estimate, reference, mixture_ref_channel, clamp_db: float | None = CLAMP_DB):
    return si_sdr(estimate, reference, clamp_db) - si_sdr(mixture_ref_channel, reference, clamp_db)


def pairwise_si_sdr(estimates: torch.Tensor, references: torch.Tensor, clamp_db=CLAMP_DB) -> torch.Tensor:
    """(..., K, L) x (..., K, L) -> (..., K, K) with [k, j] = si_sdr(est_k, ref_j)."""
    est, ref = torch.broadcast_tensors(estimates[..., :, None, :], references[..., None, :, :])
    return si_sdr(est, ref, clamp_db)


def upit_loss(estimates, references, clamp_db: float | None = CLAMP_DB):
    """Negative mean SI-SDR under the best speaker assignment.

    `estimates`, `references` are (K, L) or (B, K, L). Returns (loss, perm) where
    perm[k] is the reference matched to estimate k (a list of tuples when
    batched) and loss is the batch mean.
    """
    as_numpy = not isinstance(estimates, torch.Tensor)
    est = torch.as_tensor(np.asarray(estimates, dtype=np.float64)) if as_numpy else estimates
    ref = torch.as_tensor(np.asarray(references, dtype=np.float64)) if as_numpy else references
    if est.shape != ref.shape:
        raise ValueError(f"speaker/length mismatch: {tuple(est.shape)} vs {tuple(ref.shape)}")
    batched = est.dim() == 3
    if not batched:
        est, ref = est[None], ref[None]
    K = est.shape[1]
    if K > 4:
        raise ValueError("uPIT search is factorial; K <= 4 supported")
    scores = pairwise_si_sdr(est, ref, clamp_db)  # (B, K, K)
    perms = list(itertools.permutations(range(K)))
    idx = torch.arange(K)
    per_perm = torch.stack([scores[:, idx, list(p)].mean(-1) for p in perms], dim=-1)  # (B, P)
    best = per_perm.detach().argmax(-1)
    chosen = per_perm.gather(-1, best[:, None])[:, 0]
    loss = -chosen.mean()
    best_perms = [perms[int(b)] for b in best]
    if as_numpy:
        loss = float(loss)
    return (loss, best_perms) if batched else (loss, best_perms[0])


# --------------------------------------------------------------------- training


@dataclass
class TrainConfig:
    lr: float = 1e-3
    betas: tuple = (0.9, 0.999)
    steps: int = 500
    batch_size: int = 3
    seed: int = 0
    loss_clamp_db: float = CLAMP_DB
    target: str = "reverberant"
    precision: str = "float32"
    log_every: int = 10
    micro_batch: int = 1

    def __post_init__(self):
        if self.lr <= 0 or self.steps < 1:
            raise ValueError("need lr > 0 and steps >= 1")
        if self.precision not in ("float32", "float64"):
            raise ValueError("precision must be float32 or float64")

    @property
    def dtype(self):
        return torch.float32 if self.precision == "float32" else torch.float64


def scenes_to_batch(scenes: Sequence[MixtureScene], dtype=torch.float32):
    """Stack scenes into (B, C, L) mixtures and (B, K, L) targets, zero-padding to the longest."""
    chans = {s.mixture.channels for s in scenes}
    if len(chans) != 1:
        raise ValueError(f"scenes in a batch must share the channel count, got {sorted(chans)}")
    length = max(len(s.mixture) for s in scenes)
    mix = np.zeros((len(scenes), chans.pop(), length))
    tgt = np.zeros((len(scenes), scenes[0].targets.shape[0], length))
    for b, s in enumerate(scenes):
        mix[b, :, : len(s.mixture)] = s.mixture.samples
        tgt[b, :, : s.targets.shape[1]] = s.targets
    return torch.tensor(mix, dtype=dtype), torch.tensor(tgt, dtype=dtype)


def make_optimizer(model: torch.nn.Module, cfg: TrainConfig) -> torch.optim.Optimizer:
    return torch.optim.Adam(model.parameters(), lr=cfg.lr, betas=tuple(cfg.betas))


def grad_norm(model: torch.nn.Module) -> float:
    total = sum(float(p.grad.pow(2).sum()) for p in model.parameters() if p.grad is not None)
    return total**0.5


def train_step(model: UniArray, batch, optimizer, clamp_db: float = CLAMP_DB, micro_batch: int | None = None):
    """One forward/backward/update; returns (loss, gradient norm).

    `micro_batch` splits the batch for gradient accumulation; the update is the
    same as for the whole batch, only peak memory changes.
    """
    mixture, targets = batch
    n = mixture.shape[0]
    chunk = micro_batch or n
    model.train()
    optimizer.zero_grad()
    total = 0.0
    for i in range(0, n, chunk):
        est = model.separate_waveforms(mixture[i : i + chunk])
        loss, _ = upit_loss(est, targets[i : i + chunk], clamp_db)
        if not torch.isfinite(loss):
            raise TrainingError(
                f"non-finite loss {loss.item()}; estimate finite={bool(torch.isfinite(est).all())}, "
                f"max |est|={est.detach().abs().max().item()}, max |mixture|={mixture.abs().max().item()}"
            )
        weight = est.shape[0] / n
        (loss * weight).backward()
        total += loss.item() * weight
    gnorm = grad_norm(model)
    if not np.isfinite(gnorm):
        raise TrainingError(f"non-finite gradient norm at loss {total}")
    optimizer.step()
    return total, gnorm


def train(
    model: UniArray,
    scenes: Sequence[MixtureScene],
    cfg: TrainConfig,
    log_path=None,
    checkpoint_path=None,
) -> list[dict]:
    """Cycle through `scenes` in fixed batches for cfg.steps updates.

    Writes one JSON record per logged step ({step, loss, grad_norm, wall_time}).
    """
    torch.manual_seed(cfg.seed)
    model.to(cfg.dtype)
    optimizer = make_optimizer(model, cfg)
    batches = [
        scenes_to_batch(scenes[i : i + cfg.batch_size], cfg.dtype) for i in range(0, len(scenes), cfg.batch_size)
    ]
    history = []
    sink = open(log_path, "w") if log_path else None
    start = time.perf_counter()
    try:
        for step in range(1, cfg.steps + 1):
            loss, gnorm = train_step(model, batches[(step - 1) % len(batches)], optimizer, cfg.loss_clamp_db, cfg.micro_batch)
            rec = {"step": step, "loss": loss, "grad_norm": gnorm, "wall_time": time.perf_counter() - start}
            history.append(rec)
            if sink:
                sink.write(json.dumps(rec) + "\n")
            if step % cfg.log_every == 0 or step == 1:
                log.info("step %d loss %.3f grad %.3g", step, loss, gnorm)
    finally:
        if sink:
            sink.close()
    if checkpoint_path:
        save_checkpoint(checkpoint_path, model, cfg.steps)
    return history


@torch.no_grad()
def evaluate_loss(model: UniArray, scenes: Sequence[MixtureScene], clamp_db=CLAMP_DB, dtype=None) -> float:
    """Mean uPIT SI-SDR (dB, higher is better) over scenes."""
    model.eval()
    dtype = dtype or next(model.parameters()).dtype
    mixture, targets = scenes_to_batch(scenes, dtype)
    loss, _ = upit_loss(model.separate_waveforms(mixture), targets, clamp_db)
    return -float(loss)


# ------------------------------------------------------------------ checkpoints


def save_checkpoint(path, model: UniArray, step: int = 0) -> None:
    header = {
        "model_config": model.cfg.to_dict(),
        "fingerprint": model.cfg.fingerprint(),
        "step": step,
    }
    tensors = {name: t.detach().cpu().numpy() for name, t in model.state_dict().items()}
    save_tensors(path, tensors, header)


def load_checkpoint(path, model: UniArray | None = None) -> tuple[UniArray, int]:
    header, tensors = load_tensors(path)
    cfg = ModelConfig.from_dict(header["model_config"])
    if header.get("fingerprint") != cfg.fingerprint():
        raise CheckpointMismatchError(f"{path}: stored fingerprint does not match its own config")
    if model is None:
        model = UniArray(cfg)
    elif model.cfg.fingerprint() != header["fingerprint"]:
        raise CheckpointMismatchError(
            f"{path}: checkpoint architecture {header['fingerprint']} != model {model.cfg.fingerprint()}"
        )
    state = model.state_dict()
    if set(state) != set(tensors):
        raise CheckpointMismatchError(f"{path}: parameter names differ from the model")
    dtype = torch.float32 if next(iter(tensors.values())).dtype == np.float32 else torch.float64
    model.to(dtype)
    for name, arr in tensors.items():
        if tuple(state[name].shape) != arr.shape:
            raise CheckpointMismatchError(f"{path}: {name} has shape {arr.shape}, expected {tuple(state[name].shape)}")
    model.load_state_dict({k: torch.from_numpy(v) for k, v in tensors.items()})
    return model, int(header.get("step", 0))
