import copy

import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from uniarray.fusion import AttentionalFusion, FusionConfig, LocalPatternExtractor, aff_fuse
from uniarray.nn import ShapeError, grad_check
from uniarray.vme import augment_channels

CFG = FusionConfig(E=8)


def extractor():
    return LocalPatternExtractor(CFG).double()


def fusion():
    return AttentionalFusion(CFG).double()


def feats(seed, *shape):
    return torch.randn(*shape, generator=torch.Generator().manual_seed(seed), dtype=torch.float64)


@given(st.integers(1, 9), st.integers(1, 9), st.integers(1, 8))
def test_extractor_shape(T, F, M):
    spec = torch.randn(2, T, F, M, dtype=torch.complex128)
    assert extractor()(spec).shape == (2, T, F, 8)


def test_extractor_zero_input_is_bias_response():
    ex = extractor()
    out = ex(torch.zeros(1, 9, 11, 3, dtype=torch.complex128))[0]
    # first layer sees zeros everywhere: relu(b1); away from the borders the
    # second layer sums its whole kernel against that constant map
    h = torch.relu(ex.conv1.bias)
    interior = torch.einsum("oiab,i->o", ex.conv2.weight, h) + ex.conv2.bias
    torch.testing.assert_close(out[2:-2, 2:-2], interior.expand(5, 7, 8), rtol=1e-12, atol=1e-12)


def test_extractor_reads_only_the_reference_channel():
    ex = extractor()
    spec = torch.randn(1, 5, 6, 4, dtype=torch.complex128)
    other = spec.clone()
    other[..., 1:] = torch.randn(1, 5, 6, 3, dtype=torch.complex128)
    assert torch.equal(ex(spec), ex(other))


def test_extractor_gradient():
    ex = extractor()
    re, im = feats(0, 1, 5, 5, 2).requires_grad_(), feats(1, 1, 5, 5, 2).requires_grad_()
    assert grad_check(lambda a, b: ex(torch.complex(a, b)), [re, im], module=ex, full_limit=512) < 1e-4


def test_saturated_masks_select_one_branch():
    spec, spat = feats(2, 1, 4, 4, 8), feats(3, 1, 4, 4, 8)
    for sign, expected in ((1, spec), (-1, spat)):
        aff = fusion()
        with torch.no_grad():
            for stage in aff.stages:
                for lin in (stage.local_out, stage.global_out):
                    lin.weight.zero_()
                    lin.bias.fill_(sign * 100.0)
        torch.testing.assert_close(aff_fuse(spec, spat, aff), expected, rtol=0, atol=1e-30)


@given(st.integers(0, 10_000))
def test_convex_combination_and_open_mask(seed):
    spec, spat = feats(seed, 1, 3, 5, 8), feats(seed + 1, 1, 3, 5, 8)
    aff = fusion()
    out = aff(spec, spat)
    assert torch.all(out >= torch.minimum(spec, spat) - 1e-12)
    assert torch.all(out <= torch.maximum(spec, spat) + 1e-12)
    assert len(aff.last_masks) == 2
    for m in aff.last_masks:
        assert torch.all((m > 0) & (m < 1))


def test_branch_swap_by_weight_transplant():
    spec, spat = feats(4, 2, 3, 4, 8), feats(5, 2, 3, 4, 8)
    aff = fusion()
    swapped = copy.deepcopy(aff)
    for stage in swapped.stages:
        stage.negate()
    torch.testing.assert_close(swapped(spat, spec), aff(spec, spat), rtol=1e-12, atol=1e-12)


def test_global_branch_is_constant_over_bins():
    aff = fusion()
    stage = aff.stages[0]
    u = feats(6, 1, 4, 5, 8)
    local = stage.local_out(torch.relu(stage.local_in(u)))
    glob = stage(u) - local
    torch.testing.assert_close(glob, glob[:, :1, :1].expand_as(glob), rtol=0, atol=1e-12)


def test_fusion_gradient():
    aff = fusion()
    assert grad_check(aff, [feats(7, 1, 4, 4, 8).requires_grad_(), feats(8, 1, 4, 4, 8).requires_grad_()], module=aff) < 1e-4


def test_shape_mismatch():
    with pytest.raises(ShapeError):
        fusion()(torch.zeros(1, 2, 2, 8), torch.zeros(1, 2, 3, 8))
    with pytest.raises(ShapeError):
        FusionConfig(extractor_kernel=4)


def test_non_reference_permutation_reaches_only_spatial_branch():
    from uniarray.model import ModelConfig, UniArray

    model = UniArray(ModelConfig.toy(n_freqs=6)).double()
    spec = torch.randn(1, 4, 6, 4, dtype=torch.complex128)
    perm = spec[..., [0, 3, 1, 2]]
    x, xp = augment_channels(spec, 8), augment_channels(perm, 8)
    assert torch.equal(model.extractor(x), model.extractor(xp))
    assert not torch.allclose(model.dictionary(x).values, model.dictionary(xp).values)
    assert not torch.allclose(model.features(spec), model.features(perm))
