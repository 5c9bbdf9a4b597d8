"""Central-difference check of reverse-mode gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import torch


def _leaves(inputs, module):
    tensors = [t for t in inputs if isinstance(t, torch.Tensor) and t.requires_grad]
    if module is not None:
        tensors += [p for p in module.parameters() if p.requires_grad]
    for t in tensors:
        if t.is_complex():
            raise TypeError("grad_check works on real tensors; split complex inputs into real/imag parts")
    return tensors


def grad_check(
    fn: Callable,
    inputs: Sequence[torch.Tensor],
    module: torch.nn.Module | None = None,
    eps: float = 1e-5,
    full_limit: int = 4096,
    n_directions: int = 3,
    seed: int = 0,
    floor: float = 1e-6,
) -> float:
    """Largest relative error between reverse-mode and central-difference derivatives.

    The scalar probe is ``sum(fn(*inputs) * w)`` for a fixed random `w`. Every
    differentiable input and every parameter of `module` is checked. Tensors
    with at most `full_limit` entries are checked coordinate by coordinate and
    scored as ``||fd - ad|| / max(||fd||, ||ad||)``; larger ones are checked
    along `n_directions` random unit directions, scored the same way on the
    two directional derivatives.

    Denominators are floored at `floor` times the norm of the whole gradient,
    so a tensor whose true gradient vanishes (a bias feeding a softmax, a dead
    ReLU) is judged by its absolute error instead of by round-off over zero.
    """
    gen = torch.Generator().manual_seed(seed)
    leaves = _leaves(inputs, module)
    if not leaves:
        raise ValueError("nothing to check: no input or parameter requires grad")

    out = fn(*inputs)
    weights = torch.randn(out.shape, generator=gen, dtype=out.dtype)

    def probe():
        with torch.no_grad():
            return float((fn(*inputs) * weights).sum())

    grads = torch.autograd.grad((out * weights).sum(), leaves, allow_unused=True)
    grads = [torch.zeros_like(t) if g is None else g.detach() for t, g in zip(leaves, grads)]

    total = sum(g.pow(2).sum().item() for g in grads) ** 0.5
    min_scale = floor * total
    worst = 0.0
    for t, g in zip(leaves, grads):
        if t.numel() <= full_limit:
            fd = torch.zeros_like(t)
            flat, fd_flat = t.data.view(-1), fd.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                plus = probe()
                flat[i] = orig - eps
                minus = probe()
                flat[i] = orig
                fd_flat[i] = (plus - minus) / (2 * eps)
            scale = max(fd.norm().item(), g.norm().item(), min_scale)
            err = 0.0 if scale == 0 else (fd - g).norm().item() / scale
        else:
            err = 0.0
            for _ in range(n_directions):
                v = torch.randn(t.shape, generator=gen, dtype=t.dtype)
                v /= v.norm()
                orig = t.data.clone()
                t.data.add_(eps * v)
                plus = probe()
                t.data.copy_(orig - eps * v)
                minus = probe()
                t.data.copy_(orig)
                fd = (plus - minus) / (2 * eps)
                ad = float((g * v).sum())
                scale = max(abs(ad), abs(fd), min_scale)
                if scale:
                    err = max(err, abs(fd - ad) / scale)
        worst = max(worst, err)
    return worst
