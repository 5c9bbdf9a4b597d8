import numpy as np
import pytest
import torch
from hypothesis import given
from hypothesis import strategies as st

from uniarray.nn import grad_check
from uniarray.sdl import SpatialDictionary, init_dictionary, spatial_embed


def reference_embed(x, d, hermitian=True):
    """Per-bin loop over dictionary columns, straight from the definition."""
    T, F, M = x.shape
    out = np.zeros((T, F, d.shape[-1]))
    for t in range(T):
        for f in range(F):
            v = x[t, f]
            D = d if d.ndim == 2 else d[f]
            for n in range(D.shape[1]):
                col = D[:, n]
                inner = np.vdot(col, v) if hermitian else np.dot(col, v)
                denom = np.vdot(col, col).real * np.vdot(v, v).real
                a = 0.0 if denom == 0 else abs(inner) ** 2 / denom
                out[t, f, n] = np.mean(np.abs(v)) * a
    return out


def rand_complex(rng, *shape):
    return rng.normal(size=shape) + 1j * rng.normal(size=shape)


@pytest.mark.parametrize("variant", ["sdl", "fsdl"])
@pytest.mark.parametrize("hermitian", [True, False])
def test_matches_reference_loop(rng, variant, hermitian):
    x = rand_complex(rng, 3, 5, 4)
    d = rand_complex(rng, 4, 6) if variant == "sdl" else rand_complex(rng, 5, 4, 6)
    got = spatial_embed(torch.tensor(x), torch.tensor(d), hermitian).values.numpy()
    np.testing.assert_allclose(got, reference_embed(x, d, hermitian), rtol=1e-12, atol=1e-14)


def test_hand_case():
    emb = spatial_embed(torch.tensor([[[3 + 4j, 0j]]]), torch.tensor([[1 + 0j], [0j]]))
    assert emb.similarity.item() == 1.0
    assert emb.x_avg.item() == 2.5
    assert emb.values.item() == 2.5


def test_transpose_differs_from_hermitian(rng):
    x = torch.tensor(rand_complex(rng, 1, 1, 3))
    d = torch.tensor(rand_complex(rng, 3, 2))
    assert not torch.allclose(spatial_embed(x, d, True).similarity, spatial_embed(x, d, False).similarity)


@given(st.integers(0, 2**31 - 1), st.floats(-np.pi, np.pi), st.floats(1e-3, 1e3))
def test_bounds_phase_and_scale(seed, theta, c):
    r = np.random.default_rng(seed)
    x = torch.tensor(rand_complex(r, 2, 6, 8))
    d = torch.tensor(rand_complex(r, 8, 16))
    e = spatial_embed(x, d)
    assert torch.all((e.similarity >= 0) & (e.similarity <= 1))
    rotated = spatial_embed(x * np.exp(1j * theta), d)
    torch.testing.assert_close(rotated.similarity, e.similarity, rtol=0, atol=1e-12)
    scaled = spatial_embed(c * x, d)
    torch.testing.assert_close(scaled.similarity, e.similarity, rtol=0, atol=1e-12)
    torch.testing.assert_close(scaled.values, c * e.values, rtol=1e-12, atol=0)


def test_parallel_and_orthogonal(rng):
    d = rand_complex(rng, 8, 4)
    for n in range(4):
        x = (0.3 - 2j) * d[:, n]
        assert spatial_embed(torch.tensor(x)[None, None], torch.tensor(d)).similarity[0, 0, n] == pytest.approx(1, abs=1e-12)
        r = rand_complex(rng, 8)
        orth = r - d[:, n] * np.vdot(d[:, n], r) / np.vdot(d[:, n], d[:, n])
        assert spatial_embed(torch.tensor(orth)[None, None], torch.tensor(d)).similarity[0, 0, n] < 1e-24


def test_silent_bin_is_zero():
    x = torch.zeros(1, 2, 4, dtype=torch.complex128)
    e = spatial_embed(x, torch.ones(4, 3, dtype=torch.complex128))
    assert not e.values.any() and not e.similarity.any()
    assert torch.isfinite(e.values).all()


def test_init_dictionary():
    re, im = init_dictionary(8, 64, "sdl", rng=0)
    d = torch.complex(re, im)
    torch.testing.assert_close(d.abs().pow(2).sum(0), torch.ones(64, dtype=torch.float64))
    re2, _ = init_dictionary(8, 64, "sdl", rng=1)
    assert not torch.equal(re, re2)
    fre, fim = init_dictionary(8, 64, "fsdl", rng=0, n_freqs=257)
    assert fre.shape == (257, 8, 64)
    assert not torch.equal(fre[0], fre[1])
    with pytest.raises(ValueError):
        init_dictionary(0, 4)


def test_module_parameters_and_shapes():
    shared = SpatialDictionary(8, 16, "sdl", seed=0)
    per_f = SpatialDictionary(8, 16, "fsdl", n_freqs=9, seed=0)
    assert shared.real.shape == (8, 16) and per_f.real.shape == (9, 8, 16)
    x = torch.randn(2, 3, 9, 8, dtype=torch.complex64)
    assert shared(x).values.shape == (2, 3, 9, 16)
    assert per_f(x).values.shape == (2, 3, 9, 16)
    n_extra = sum(p.numel() for p in per_f.parameters()) - sum(p.numel() for p in shared.parameters())
    assert n_extra == 2 * 8 * 16 * (9 - 1)


def test_dictionary_gradient(rng):
    xr = torch.tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    xi = torch.tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    dr = torch.tensor(rng.normal(size=(4, 5)), requires_grad=True)
    di = torch.tensor(rng.normal(size=(4, 5)), requires_grad=True)

    def total(a, b, c, d):
        # the summed embedding, as in the gradient-flow invariant
        return spatial_embed(torch.complex(a, b), torch.complex(c, d)).values.sum()

    assert grad_check(total, [xr, xi, dr, di]) < 1e-4
