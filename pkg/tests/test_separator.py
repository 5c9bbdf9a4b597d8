import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from uniarray.nn import ConformerConfig, ShapeError, count_attention, grad_check
from uniarray.separator import (
    DualPathBlock,
    HierarchicalSeparator,
    PatchExpand,
    PatchMerge,
    SeparatorConfig,
    dual_path_block,
    pad_to_multiple,
    patch_expand,
    patch_merge,
    separate,
    unpack_complex,
)

SMALL = ConformerConfig(model_dim=8, num_heads=2, conv_kernel=3)


def toy_separator(**kw):
    base = dict(in_dim=8, merge_windows=(1, 2, 2), level_dims=(8, 16, 32), K=2, conformer=SMALL)
    base.update(kw)
    return HierarchicalSeparator(SeparatorConfig(**base)).double()


def x(*shape, seed=0):
    return torch.randn(*shape, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)


def test_merge_shapes():
    y, pad = patch_merge(x(1, 8, 8, 4), PatchMerge(4, 6, 2).double())
    assert y.shape == (1, 4, 4, 6) and pad == (0, 0)
    y, _ = PatchMerge(4, 6, 1).double()(x(1, 5, 7, 4))
    assert y.shape == (1, 5, 7, 6)


def test_pointwise_merge_is_a_per_bin_map():
    merge = PatchMerge(4, 6, 1).double()
    a = x(1, 5, 7, 4)
    b = a.clone()
    b[0, 2, 3] += x(4, seed=1)
    diff = (merge(a)[0] - merge(b)[0]).abs().sum(-1)[0]
    assert diff[2, 3] > 0 and (diff > 0).sum() == 1


def test_padding_rule_ten_by_257():
    padded, pad = pad_to_multiple(x(1, 10, 257, 2), 4)
    assert padded.shape[1:3] == (12, 260) and pad == (2, 3)
    assert not padded[:, 10:].any() and not padded[:, :, 257:].any()
    sep = toy_separator()
    assert sep(x(1, 10, 257, 8)).shape == (1, 10, 257, 4)


@given(st.integers(1, 13), st.integers(1, 13), st.sampled_from([1, 2, 3]))
def test_expand_of_merge_restores_dims(T, F, P):
    merge, expand = PatchMerge(4, 6, P).double(), PatchExpand(6, 4, P).double()
    a = x(1, T, F, 4)
    y, _ = merge(a)
    assert patch_expand(y, expand, size=(T, F)).shape == a.shape


def test_zero_skip_equals_no_skip():
    expand = PatchExpand(6, 4, 2).double()
    y = x(1, 3, 3, 6)
    assert torch.equal(expand(y, torch.zeros(1, 6, 6, 4, dtype=torch.float64), (6, 6)), expand(y, None, (6, 6)))
    with pytest.raises(ShapeError):
        expand(y, torch.zeros(1, 5, 6, 4, dtype=torch.float64), (6, 6))


def test_dual_path_axes():
    block = DualPathBlock(SMALL).double()
    a = x(1, 5, 6, 8)
    b = a.clone()
    b[0, 2, 3] += x(8, seed=1)  # not a constant shift, which layer norm would remove
    for layer in block.freq_layers:
        layer.zero_output_projections()  # frequency path becomes per-bin
    diff = (block(a) - block(b)).abs().sum(-1)[0]
    assert (diff[:, 3] > 0).all() and not diff[:, [0, 1, 2, 4, 5]].any()

    block = DualPathBlock(SMALL).double()
    for layer in block.time_layers:
        layer.zero_output_projections()  # time path becomes per-bin
    diff = (dual_path_block(a, block) - dual_path_block(b, block)).abs().sum(-1)[0]
    assert (diff[2] > 0).all() and not diff[[0, 1, 3, 4]].any()


def test_single_frame_time_path_is_per_position():
    block = DualPathBlock(SMALL).double()
    a = x(1, 1, 6, 8)
    seq = a.transpose(1, 2).reshape(6, 1, 8)
    together = block.time_layers[0](seq)
    alone = torch.cat([block.time_layers[0](seq[i : i + 1]) for i in range(6)])
    torch.testing.assert_close(together, alone, rtol=1e-12, atol=1e-12)
    assert block(a).shape == a.shape


def test_dual_path_gradient():
    block = DualPathBlock(SMALL).double()
    assert grad_check(block, [x(1, 6, 6, 8).requires_grad_()], module=block, full_limit=512) < 1e-3


@pytest.mark.parametrize("T", [50, 100])
def test_shape_contract(T):
    assert separate(x(1, T, 257, 8), toy_separator()).shape == (1, T, 257, 4)


@given(st.integers(1, 11), st.integers(1, 11))
def test_resolution_round_trip(T, F):
    assert toy_separator()(x(1, T, F, 8)).shape == (1, T, F, 4)


def test_variants_run():
    for kw in (dict(skip_connections=False), dict(decoder_blocks=True), dict(bottleneck=False)):
        assert toy_separator(**kw)(x(1, 6, 7, 8)).shape == (1, 6, 7, 4)


def test_head_copying_a_feature_plane():
    sep = toy_separator(K=1)
    with torch.no_grad():
        sep.head.weight.zero_()
        sep.head.weight[:, 0] = 1.0
        sep.head.bias.zero_()
    out = sep(x(1, 4, 4, 8))
    assert torch.equal(out[..., 0], out[..., 1])
    assert torch.equal(out, sep(x(1, 4, 4, 8)))


def test_one_level_gradient_on_eight_by_eight():
    sep = HierarchicalSeparator(SeparatorConfig(in_dim=8, merge_windows=(1,), level_dims=(8,), K=2, conformer=SMALL)).double()
    assert grad_check(sep, [x(1, 8, 8, 8).requires_grad_()], module=sep, full_limit=256) < 1e-3


def test_attention_lengths_shrink_per_level():
    sep = toy_separator()
    with count_attention() as log:
        sep(x(1, 16, 20, 8))
    by_tag = {r["tag"]: r for r in log}
    for lvl, factor in enumerate((1, 2, 4)):
        assert by_tag[(f"enc{lvl}", "time")]["length"] == 16 // factor
        assert by_tag[(f"enc{lvl}", "time")]["sequences"] == 20 // factor
        assert by_tag[(f"enc{lvl}", "freq")]["length"] == 20 // factor
    assert ("bottleneck", "time") in by_tag
    assert not any(str(t[0]).startswith("dec") for t in by_tag)


def test_unpack_complex_interleaving():
    packed = torch.arange(8.0).reshape(1, 1, 1, 8)
    z = unpack_complex(packed)
    assert z.shape == (1, 1, 1, 4)
    assert z[0, 0, 0, 1] == 2 + 3j


def test_config_validation():
    with pytest.raises(ShapeError):
        SeparatorConfig(merge_windows=(1, 2), level_dims=(8,))
    with pytest.raises(ShapeError):
        toy_separator()(x(1, 4, 4, 5))
