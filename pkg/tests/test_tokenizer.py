import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from rdttrack.errors import ShapeError
from rdttrack.tokenizer import PatchEmbedConfig, Tokenizer, embed, to_three_channel

CFG = PatchEmbedConfig(patch_size=8, embed_dim=64, template_size=32, search_size=64)


def _tokenizer(seed=0):
    torch.manual_seed(seed)
    return Tokenizer(CFG).double()


def test_three_channel_constant():
    out = to_three_channel(np.full((5, 7), 0.5))
    assert out.shape == (5, 7, 3)
    assert np.all(out == 0.5)


def test_three_channel_replicates(rng):
    img = rng.random((6, 9))
    out = to_three_channel(img)
    for c in range(3):
        assert np.array_equal(out[..., c], img)


def test_three_channel_passthrough(rng):
    img = rng.random((6, 9, 3))
    assert np.array_equal(to_three_channel(img), img)


def test_three_channel_torch():
    img = torch.rand(4, 5)
    out = to_three_channel(img)
    assert out.shape == (4, 5, 3)
    assert torch.equal(out[..., 1], img)


def test_token_count():
    tok = _tokenizer()
    ts = tok(torch.rand(2, 3, 32, 32, dtype=torch.float64), torch.rand(2, 3, 64, 64, dtype=torch.float64))
    assert CFG.h_z == 4 and CFG.h_x == 8
    assert ts.tokens.shape == (2, 16 + 64, 64)
    assert (ts.n_template, ts.n_search) == (16, 64)


def test_zero_images_give_zero_tokens():
    tok = _tokenizer()
    with torch.no_grad():
        tok.pos_z.zero_()
        tok.pos_x.zero_()
        tok.proj["rgb"].bias.zero_()
    ts = tok(torch.zeros(1, 3, 32, 32, dtype=torch.float64), torch.zeros(1, 3, 64, 64, dtype=torch.float64))
    assert torch.count_nonzero(ts.tokens) == 0


def test_positional_shift_moves_template_tokens_only():
    tok = _tokenizer()
    z = torch.rand(1, 3, 32, 32, dtype=torch.float64)
    x = torch.rand(1, 3, 64, 64, dtype=torch.float64)
    base = tok(z, x).tokens.detach()
    v = torch.randn(64, dtype=torch.float64)
    with torch.no_grad():
        tok.pos_z += v
    shifted = tok(z, x).tokens.detach()
    torch.testing.assert_close(shifted[:, :16] - base[:, :16], v.expand(1, 16, 64), rtol=0, atol=1e-12)
    assert torch.equal(shifted[:, 16:], base[:, 16:])


def test_size_mismatch_names_dimension():
    tok = _tokenizer()
    with pytest.raises(ShapeError, match="template crop width"):
        tok(torch.rand(1, 3, 32, 40, dtype=torch.float64), torch.rand(1, 3, 64, 64, dtype=torch.float64))
    with pytest.raises(ShapeError, match="search crop height"):
        tok(torch.rand(1, 3, 32, 32, dtype=torch.float64), torch.rand(1, 3, 56, 64, dtype=torch.float64))


def test_config_requires_divisible_sizes():
    with pytest.raises(ShapeError):
        PatchEmbedConfig(patch_size=8, template_size=30)


def test_superposition_without_position_term():
    tok = _tokenizer(1)
    with torch.no_grad():
        tok.proj["depth"].bias.zero_()
    zi, xi = torch.rand(1, 3, 32, 32, dtype=torch.float64), torch.rand(1, 3, 64, 64, dtype=torch.float64)
    zj, xj = torch.rand(1, 3, 32, 32, dtype=torch.float64), torch.rand(1, 3, 64, 64, dtype=torch.float64)
    pos = torch.cat([tok.pos_z, tok.pos_x], dim=1).detach()

    def core(z, x):
        return tok(z, x, "depth").tokens.detach() - pos

    a, b = 0.7, -1.3
    torch.testing.assert_close(core(a * zi + b * zj, a * xi + b * xj), a * core(zi, xi) + b * core(zj, xj))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.0, 5.0))
def test_token_count_independent_of_content(seed, scale):
    g = torch.Generator().manual_seed(seed)
    tok = _tokenizer()
    ts = embed(
        scale * torch.rand(1, 3, 32, 32, generator=g, dtype=torch.float64),
        scale * torch.rand(1, 3, 64, 64, generator=g, dtype=torch.float64),
        tok.proj["tir"],
        tok.pos_z,
        tok.pos_x,
        CFG,
        "tir",
    )
    assert ts.tokens.shape[1] == CFG.n_tokens
