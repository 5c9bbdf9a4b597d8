"""Acceptance checks, runnable from the CLI (``uniarray verify``) and from pytest.

Each check returns a `CheckResult`; oracles here are written independently of
the code paths they test (direct enumeration, numpy re-derivations, central
differences).
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np
import torch

from .dsp import StftConfig, Waveform, istft, stft, stft_tensor
from .fusion import AttentionalFusion, FusionConfig, LocalPatternExtractor
from .geometry import from_label, subset
from .model import ModelConfig, UniArray
from .nn import (
    ConformerBlock,
    ConformerConfig,
    conv2d,
    conv2d_transposed,
    count_attention,
    depthwise_conv1d,
    glu,
    global_avg_pool,
    grad_check,
    layer_norm,
    linear,
    mhsa,
    relu,
    sigmoid,
    swish,
)
from .scene import random_scene
from .sdl import init_dictionary, spatial_embed
from .separator import DualPathBlock, HierarchicalSeparator, PatchExpand, PatchMerge, SeparatorConfig
from .train import TrainConfig, evaluate_loss, make_optimizer, scenes_to_batch, si_sdr, train, train_step, upit_loss
from .vme import augment_channels, plan_virtual_mics

KERNEL_TOL = 1e-4
COMPOSED_TOL = 1e-3
GRAD_BUDGET_S = 300.0


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.number}: {self.name} -- {self.detail} ({self.seconds:.1f}s)"


def _timed(number: int, name: str, fn: Callable[[], tuple[bool, str]]) -> CheckResult:
    start = time.perf_counter()
    passed, detail = fn()
    return CheckResult(number, name, bool(passed), detail, time.perf_counter() - start)


# ------------------------------------------------------------------ 1. VME plan


def _direct_counts(C: int, M: int) -> list[int]:
    n_v, n_p = M - C, C
    # 1-indexed pairs; pair i takes an extra mic iff i <= N_v mod N_p
    return [n_v // n_p + (1 if i <= n_v % n_p else 0) for i in range(1, n_p + 1)]


def check_vme_plan() -> CheckResult:
    def run():
        start = time.perf_counter()
        cases = 0
        for M in range(1, 9):
            for C in range(1, M + 1):
                plan = plan_virtual_mics(C, M)
                expected = _direct_counts(C, M)
                pairs = [(i, i + 1 if i + 1 < C else 0) for i in range(C)]
                ok = (
                    list(plan.counts) == expected
                    and sum(plan.counts) == M - C
                    and max(plan.counts) - min(plan.counts) <= 1
                    and list(plan.pair_list) == pairs
                    and len(plan.virtual) == M - C
                )
                if not ok:
                    return False, f"C={C} M={M}: counts {plan.counts} vs {expected}"
                cases += 1
        elapsed = time.perf_counter() - start
        return elapsed < 1.0, f"{cases} (C, M) cases match the direct rule in {elapsed * 1e3:.1f} ms"

    return _timed(1, "VME plan oracle", run)


# ------------------------------------------------------- 2. single channel copy


def check_single_channel() -> CheckResult:
    def run():
        gen = torch.Generator().manual_seed(1)
        x = torch.complex(torch.randn(20, 257, 1, generator=gen), torch.randn(20, 257, 1, generator=gen))
        out = augment_channels(x, 8, "vme")
        same = all(torch.equal(out[..., c], x[..., 0]) for c in range(8))
        return same and out.shape[-1] == 8, f"8 channels bit-identical to the real one: {same}"

    return _timed(2, "single-channel degeneracy", run)


# ---------------------------------------------------------------- 3. SDL bounds


def check_sdl_invariants(n_bins: int = 10_000) -> CheckResult:
    def run():
        rng = np.random.default_rng(3)
        M, N = 8, 64
        re, im = init_dictionary(M, N, "sdl", rng)
        D = torch.complex(re, im)
        x = torch.tensor(rng.normal(size=(n_bins, 1, M)) + 1j * rng.normal(size=(n_bins, 1, M)))
        sim = spatial_embed(x, D).similarity[:, 0]
        bounded = bool((sim >= 0).all() and (sim <= 1).all())

        d = D.numpy()
        cols = rng.integers(0, N, n_bins)
        coef = rng.normal(size=n_bins) + 1j * rng.normal(size=n_bins)
        par = torch.tensor(coef[:, None] * d[:, cols].T)[:, None]
        par_sim = spatial_embed(par, D).similarity[:, 0].numpy()[np.arange(n_bins), cols]
        par_err = np.abs(par_sim - 1).max()

        r = rng.normal(size=(n_bins, M)) + 1j * rng.normal(size=(n_bins, M))
        dc = d[:, cols].T
        proj = np.sum(dc.conj() * r, axis=1) / np.sum(np.abs(dc) ** 2, axis=1)
        orth = torch.tensor(r - proj[:, None] * dc)[:, None]
        orth_err = np.abs(spatial_embed(orth, D).similarity[:, 0].numpy()[np.arange(n_bins), cols]).max()

        theta = torch.tensor(rng.uniform(-np.pi, np.pi, (n_bins, 1, 1)))
        rotated = spatial_embed(x * torch.polar(torch.ones_like(theta), theta), D).similarity[:, 0]
        phase_err = float((rotated - sim).abs().max())

        hand = spatial_embed(
            torch.tensor([[[3 + 4j, 0j]]]), torch.tensor([[1 + 0j], [0j]])
        )
        hand_ok = hand.values.item() == 2.5 and hand.similarity.item() == 1.0 and hand.x_avg.item() == 2.5

        ok = bounded and par_err < 1e-12 and orth_err < 1e-12 and phase_err < 1e-12 and hand_ok
        detail = (
            f"bounds {bounded}, parallel err {par_err:.1e}, orthogonal {orth_err:.1e}, "
            f"phase {phase_err:.1e}, (3+4j,0) -> a={hand.values.item()}"
        )
        return ok, detail

    return _timed(3, "SDL invariants", run)


# ----------------------------------------------------------- 4. gradient suite


def _r(gen, *shape):
    return torch.randn(*shape, generator=gen, dtype=torch.float64, requires_grad=True)


def kernel_gradient_errors(seed: int = 0) -> dict[str, float]:
    """Central-difference errors for every kernel, the SDL projection, AFF and separator blocks."""
    torch.manual_seed(seed)
    gen = torch.Generator().manual_seed(seed)
    errs = {}
    x = _r(gen, 1, 6, 5, 3)
    errs["conv2d"] = grad_check(lambda a, w, b: conv2d(a, w, b, stride=(1, 2), padding=1), [x, _r(gen, 4, 3, 3, 3), _r(gen, 4)])
    errs["conv2d_transposed"] = grad_check(
        lambda a, w, b: conv2d_transposed(a, w, b, stride=2), [_r(gen, 1, 3, 4, 3), _r(gen, 3, 2, 2, 2), _r(gen, 2)]
    )
    errs["layer_norm"] = grad_check(layer_norm, [_r(gen, 5, 7), _r(gen, 7), _r(gen, 7)])
    d, heads = 8, 2
    ws = [_r(gen, d, d) * 0.3 for _ in range(4)]
    ws = [w.detach().requires_grad_() for w in ws]
    errs["mhsa"] = grad_check(lambda a, *w: mhsa(a, *w, heads=heads), [_r(gen, 2, 6, d), *ws])
    errs["depthwise_conv1d"] = grad_check(depthwise_conv1d, [_r(gen, 2, 7, 4), _r(gen, 4, 3), _r(gen, 4)])
    errs["linear"] = grad_check(linear, [_r(gen, 3, 5), _r(gen, 4, 5), _r(gen, 4)])
    errs["relu"] = grad_check(relu, [_r(gen, 4, 4, 4)])
    errs["sigmoid"] = grad_check(sigmoid, [_r(gen, 4, 4, 4)])
    errs["swish"] = grad_check(swish, [_r(gen, 4, 4, 4)])
    errs["glu"] = grad_check(glu, [_r(gen, 4, 4, 8)])
    errs["global_avg_pool"] = grad_check(global_avg_pool, [_r(gen, 2, 4, 5, 3)])

    # SDL: input and dictionary both as real/imag parts
    def sdl_fn(xr, xi, dr, di):
        return spatial_embed(torch.complex(xr, xi), torch.complex(dr, di)).values

    errs["sdl"] = grad_check(sdl_fn, [_r(gen, 3, 4, 4), _r(gen, 3, 4, 4), _r(gen, 4, 6), _r(gen, 4, 6)])
    errs["fsdl"] = grad_check(sdl_fn, [_r(gen, 3, 5, 4), _r(gen, 3, 5, 4), _r(gen, 5, 4, 6), _r(gen, 5, 4, 6)])

    fcfg = FusionConfig(E=8)
    aff = AttentionalFusion(fcfg).double()
    errs["aff"] = grad_check(aff, [_r(gen, 1, 4, 4, 8), _r(gen, 1, 4, 4, 8)], module=aff)
    ext = LocalPatternExtractor(fcfg).double()
    errs["local_pattern_extract"] = grad_check(
        lambda a, b: ext(torch.complex(a, b)), [_r(gen, 1, 6, 6, 2), _r(gen, 1, 6, 6, 2)], module=ext, full_limit=512
    )

    ccfg = ConformerConfig(model_dim=8, num_heads=2, conv_kernel=3)
    block = ConformerBlock(ccfg).double()
    errs["conformer_block"] = grad_check(block, [_r(gen, 2, 5, 8)], module=block, full_limit=512)
    merge = PatchMerge(4, 8, 2).double()
    errs["patch_merge"] = grad_check(lambda a: merge(a)[0], [_r(gen, 1, 5, 6, 4)], module=merge)
    expand = PatchExpand(8, 4, 2).double()
    errs["patch_expand"] = grad_check(
        lambda a, s: expand(a, s, (5, 6)), [_r(gen, 1, 3, 3, 8), _r(gen, 1, 5, 6, 4)], module=expand
    )
    dp = DualPathBlock(ccfg).double()
    errs["dual_path_block"] = grad_check(dp, [_r(gen, 1, 6, 6, 8)], module=dp, full_limit=512)
    sep = HierarchicalSeparator(
        SeparatorConfig(in_dim=8, merge_windows=(1,), level_dims=(8,), K=2, conformer=ccfg)
    ).double()
    errs["separate"] = grad_check(sep, [_r(gen, 1, 8, 8, 8)], module=sep, full_limit=256)
    return errs


def small_stft() -> StftConfig:
    # 32-sample window (17 bins) keeps end-to-end finite differences cheap
    return StftConfig(window_len_s=0.002, shift_s=0.001)


def composed_gradient_error(cfg: ModelConfig | None = None, seed: int = 0) -> float:
    """Loss gradient of a whole toy model through STFT, iSTFT and uPIT (permutation frozen)."""
    st = small_stft()
    cfg = cfg or ModelConfig.toy()
    cfg = replace(cfg, n_freqs=st.n_bins, stft=st, heads=2)
    model = UniArray(cfg).double()
    gen = torch.Generator().manual_seed(seed)
    mixture = torch.randn(2, 2, 160, generator=gen, dtype=torch.float64)
    targets = torch.randn(2, cfg.K, 160, generator=gen, dtype=torch.float64)
    with torch.no_grad():
        _, perms = upit_loss(model.separate_waveforms(mixture), targets, None)
    order = torch.tensor(perms)

    def loss_fn(mix):
        est = model.separate_waveforms(mix)
        ref = torch.stack([targets[b, order[b]] for b in range(len(order))])
        return -si_sdr(est, ref, None).mean()

    # parameters only: the waveform enters through the VME phase rule, which
    # jumps where a real-valued bin pair (DC, Nyquist, the reflect-padded first
    # frame) has opposite signs; nothing trainable sits upstream of it
    return grad_check(loss_fn, [mixture], module=model, full_limit=0, n_directions=2)


def check_gradients(configs=None) -> CheckResult:
    def run():
        start = time.perf_counter()
        errs = kernel_gradient_errors()
        worst_kernel = max(errs, key=errs.get)
        composed = {name: composed_gradient_error(cfg) for name, cfg in (configs or {"sdl+vme": None}).items()}
        worst_comp = max(composed.values())
        elapsed = time.perf_counter() - start
        ok = errs[worst_kernel] < KERNEL_TOL and worst_comp < COMPOSED_TOL and elapsed < GRAD_BUDGET_S
        detail = (
            f"{len(errs)} kernels/blocks, worst {worst_kernel} {errs[worst_kernel]:.1e} (< {KERNEL_TOL:g}); "
            f"end-to-end {', '.join(f'{k} {v:.1e}' for k, v in composed.items())} (< {COMPOSED_TOL:g}); "
            f"{elapsed:.0f} s (< {GRAD_BUDGET_S:.0f})"
        )
        return ok, detail

    return _timed(4, "gradient suite", run)


# ---------------------------------------------------------------- 5. STFT


def _enumerate_frames(length: int, n: int, hop: int) -> int:
    padded = length + 2 * (n // 2)
    count, start = 0, 0
    while start + n <= padded:
        count += 1
        start += hop
    return count


def check_stft(n_signals: int = 100) -> CheckResult:
    def run():
        cfg = StftConfig()
        rng = np.random.default_rng(5)
        worst = -np.inf
        length = 4 * cfg.sample_rate
        counts_ok = True
        for _ in range(n_signals):
            x = rng.normal(size=(1, length))
            spec = stft(Waveform(x), cfg)
            expected_t = _enumerate_frames(length, cfg.win_length, cfg.hop_length)
            counts_ok &= spec.data.shape[:2] == (expected_t, cfg.win_length // 2 + 1)
            y = istft(spec).samples
            worst = max(worst, 20 * np.log10(np.linalg.norm(y - x) / np.linalg.norm(x)))
        ok = worst < -60 and counts_ok
        return ok, f"worst round-trip error {worst:.1f} dB (< -60); T x F = {expected_t} x 257 as enumerated: {counts_ok}"

    return _timed(5, "STFT round-trip", run)


# ----------------------------------------------------------------- 6. uPIT


def _numpy_si_sdr(est, ref, clamp=30.0):
    a = np.dot(est, ref) / np.dot(ref, ref)
    s = a * ref
    e = s - est
    return float(np.clip(10 * np.log10(np.dot(s, s) / np.dot(e, e)), -clamp, clamp))


def check_upit(n_sets: int = 100) -> CheckResult:
    def run():
        rng = np.random.default_rng(6)
        worst, perm_ok = 0.0, True
        for K in (2, 3):
            for _ in range(n_sets):
                refs = rng.normal(size=(K, 400))
                mixing = rng.normal(size=(K, K)) + 3 * np.eye(K)[rng.permutation(K)]
                ests = mixing @ refs + 0.3 * rng.normal(size=(K, 400))
                best_val, best_perm = -np.inf, None
                for p in itertools.permutations(range(K)):
                    val = np.mean([_numpy_si_sdr(ests[k], refs[p[k]]) for k in range(K)])
                    if val > best_val:
                        best_val, best_perm = val, p
                loss, perm = upit_loss(ests, refs)
                worst = max(worst, abs(loss + best_val))
                perm_ok &= tuple(perm) == best_perm
        return perm_ok and worst <= 1e-12, f"argmax permutations identical {perm_ok}; max |loss diff| {worst:.1e} dB"

    return _timed(6, "uPIT oracle", run)


# ------------------------------------------------------------- 7. AGA shapes


def check_shapes(cfg: ModelConfig | None = None, number: int = 7, name: str = "shape/AGA contract") -> CheckResult:
    def run():
        model = UniArray(cfg or ModelConfig.toy()).double().eval()
        st = model.cfg.stft
        length = 4000
        gen = torch.Generator().manual_seed(7)
        bad = []
        with torch.no_grad():
            for C in range(1, 9):
                mix = torch.randn(1, C, length, generator=gen, dtype=torch.float64)
                packed = model(stft_tensor(mix, st).permute(0, 2, 3, 1))
                wav = model.separate_waveforms(mix)
                if packed.shape != (1, st.num_frames(length), st.n_bins, 2 * model.cfg.K):
                    bad.append((C, tuple(packed.shape)))
                if wav.shape != (1, model.cfg.K, length) or not torch.isfinite(wav).all():
                    bad.append((C, tuple(wav.shape)))
        return not bad, "C = 1..8 all give T x F x 2K and K waveforms of input length" if not bad else f"bad: {bad}"

    return _timed(number, name, run)


# ----------------------------------------------------------- 8. toy overfit


def overfit_scenes(seeds=(0, 1, 2)):
    geometry = subset(from_label("C-8-5"), (0, 4))
    return [random_scene(geometry, s, duration_s=2.0) for s in seeds]


def check_overfit(steps: int = 500, log_path=None) -> CheckResult:
    def run():
        scenes = overfit_scenes()
        cfg = TrainConfig(steps=steps, seed=0)

        # determinism: two fresh models, first steps bit-identical
        losses = []
        for _ in range(2):
            model = UniArray(ModelConfig.toy()).to(cfg.dtype)
            opt = make_optimizer(model, cfg)
            batch = scenes_to_batch(scenes, cfg.dtype)
            losses.append([train_step(model, batch, opt, micro_batch=1)[0] for _ in range(2)])
        deterministic = losses[0] == losses[1]

        model = UniArray(ModelConfig.toy()).to(cfg.dtype)
        start = time.perf_counter()
        initial = evaluate_loss(model, scenes)
        train(model, scenes, cfg, log_path=log_path)
        final = evaluate_loss(model, scenes)
        wall = time.perf_counter() - start
        gain = final - initial
        ok = gain >= 10.0 and deterministic and wall < 30 * 60
        return ok, (
            f"uPIT SI-SDR {initial:.2f} -> {final:.2f} dB (+{gain:.2f}, need >= 10) in {steps} steps, "
            f"{wall / 60:.1f} min; repeat runs identical: {deterministic}"
        )

    return _timed(8, "toy overfit", run)


# ---------------------------------------------------------- 9. ablations


def ablation_configs() -> dict[str, ModelConfig]:
    return {
        "zero_pad": ModelConfig.toy(mode="zero_pad"),
        "sdl_off": ModelConfig.toy(spatial="off"),
    }


def check_ablations() -> CheckResult:
    def run():
        cfgs = ablation_configs()
        grads = check_gradients(cfgs)
        stft_res = check_stft()
        shapes = [check_shapes(cfg) for cfg in cfgs.values()]
        ok = grads.passed and stft_res.passed and all(s.passed for s in shapes)
        return ok, f"criterion 4: {grads.detail}; criterion 5 ok: {stft_res.passed}; criterion 7 ok: {[s.passed for s in shapes]}"

    return _timed(9, "ablation switches", run)


# ------------------------------------------------------- 10. hierarchy economy


def attention_census(T: int = 16, F: int = 16) -> dict:
    """Attention calls of one toy forward pass, keyed by block tag and path."""
    cfg = replace(ModelConfig.toy(), n_freqs=F)
    model = UniArray(cfg).double().eval()
    spec = torch.randn(1, T, F, 2, dtype=torch.complex128)
    with torch.no_grad(), count_attention() as log:
        model(spec)
    return {rec["tag"]: rec for rec in log}


def check_hierarchy(T: int = 16, F: int = 16) -> CheckResult:
    def run():
        census = attention_census(T, F)
        # per-sequence score matrix (L x L per head), summed over both paths
        per_seq = lambda lvl: sum(census[(f"enc{lvl}", p)]["length"] ** 2 for p in ("time", "freq"))  # noqa: E731
        total = lambda lvl: sum(census[(f"enc{lvl}", p)]["scores"] for p in ("time", "freq"))  # noqa: E731
        ratio = per_seq(2) / per_seq(0)
        total_ratio = total(2) / total(0)
        ok = math.isclose(ratio, 1 / 16, rel_tol=0, abs_tol=0)
        return ok, (
            f"level-2 score matrix per sequence = {ratio:.4f} of full resolution (1/16 = 0.0625); "
            f"all entries incl. fewer sequences = {total_ratio:.5f} (1/64)"
        )

    return _timed(10, "hierarchy economy", run)


# -------------------------------------------------------------------- runner


def run_all(skip_slow: bool = False, log_path=None, echo=print) -> list[CheckResult]:
    checks = [
        check_vme_plan,
        check_single_channel,
        check_sdl_invariants,
        check_gradients,
        check_stft,
        check_upit,
        check_shapes,
        None if skip_slow else (lambda: check_overfit(log_path=log_path)),
        check_ablations,
        check_hierarchy,
    ]
    results = []
    for check in checks:
        if check is None:
            continue
        res = check()
        echo(res.line())
        results.append(res)
    return results
