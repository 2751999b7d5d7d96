"""Tests for the multi-scale style encoder: hashing, pyramid, embeddings,
trunk, classifier head, and local patch selection."""

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from strokegen.errors import InvalidArgument, NumericalError
from strokegen.stroke_core import RasterImage
from strokegen.style_encoder import (MultiScaleConfig, StyleEncoder,
                                     build_pyramid, classify_writer,
                                     encode_style, gaussian_downsample,
                                     hash_spatial_index, local_style_patches,
                                     render_style_image, token_provenance)

TOY = MultiScaleConfig(full_size=(32, 256), scales=((24, 192), (16, 128)),
                       patch=8, grid=(4, 32), dim=32, heads=4, layers=1,
                       local_crop=(20, 96))


def toy_encoder(num_writers=3, seed=0):
    torch.manual_seed(seed)
    return StyleEncoder(TOY, num_writers)


def gray_image(h, w, value=1.0):
    return RasterImage(np.full((h, w, 1), value))


# ---------------------------------------------------------------------------
# hash spatial index

def test_hash_zero_is_zero():
    assert hash_spatial_index(0, 0, 128, 1024, 16, 4, 32) == (0, 0)


def test_hash_hand_example():
    # 128x1024 at P=16 has an 8x64 patch grid; patch (4, 32) lands in grid
    # cell (4*4//8, 32*32//64) = (2, 16)
    assert hash_spatial_index(4, 32, 128, 1024, 16, 4, 32) == (2, 16)


def test_hash_cross_scale_agreement():
    # the same image location seen at two scales maps to one grid cell
    assert hash_spatial_index(4, 0, 128, 1024, 16, 4, 32)[0] == 2
    assert hash_spatial_index(3, 0, 96, 768, 16, 4, 32)[0] == 2


def test_hash_rejects_out_of_range():
    with pytest.raises(InvalidArgument):
        hash_spatial_index(8, 0, 128, 1024, 16, 4, 32)
    with pytest.raises(InvalidArgument):
        hash_spatial_index(0, -1, 128, 1024, 16, 4, 32)


@given(st.integers(1, 8), st.integers(1, 8), st.integers(1, 6),
       st.integers(1, 6), st.data())
@settings(max_examples=200, deadline=None)
def test_hash_output_always_in_grid(rows, cols, g_h, g_w, data):
    p = 4
    i = data.draw(st.integers(0, rows - 1))
    j = data.draw(st.integers(0, cols - 1))
    t_i, t_j = hash_spatial_index(i, j, rows * p, cols * p, p, g_h, g_w)
    assert 0 <= t_i < g_h
    assert 0 <= t_j < g_w


# ---------------------------------------------------------------------------
# config / token arithmetic

def test_default_config_token_count():
    cfg = MultiScaleConfig()
    # 8*64 + 6*48 + 4*32
    assert cfg.total_tokens == 928
    assert cfg.tokens_at(0) == 512


def test_toy_config_token_count():
    assert TOY.total_tokens == (4 * 32) + (3 * 24) + (2 * 16)


@given(st.integers(1, 4), st.integers(1, 4))
@settings(max_examples=30, deadline=None)
def test_token_arithmetic_property(a, b):
    p = 8
    cfg = MultiScaleConfig(full_size=(p * (a + 1), p * (b + 1)),
                           scales=((p * a, p * b),), patch=p, grid=(1, 1),
                           dim=8, heads=1, layers=1, local_crop=(p, p))
    assert cfg.total_tokens == (a + 1) * (b + 1) + a * b
    assert len(token_provenance(cfg)) == cfg.total_tokens


def test_config_validation():
    with pytest.raises(InvalidArgument):
        MultiScaleConfig(full_size=(130, 1024))  # not divisible by patch
    with pytest.raises(InvalidArgument):
        MultiScaleConfig(scales=((256, 768),))   # exceeds full resolution
    with pytest.raises(InvalidArgument):
        MultiScaleConfig(grid=(64, 32))          # grid exceeds patch rows
    with pytest.raises(InvalidArgument):
        MultiScaleConfig(dim=50, heads=4)
    with pytest.raises(InvalidArgument):
        MultiScaleConfig(local_crop=(200, 384))


# ---------------------------------------------------------------------------
# gaussian pyramid

def test_downsample_constant_invariance():
    out = gaussian_downsample(gray_image(128, 1024, 0.5), (96, 768))
    assert out.pixels.shape == (96, 768, 1)
    assert np.allclose(out.pixels, 0.5, atol=1e-6)


def test_downsample_rejects_upscale():
    with pytest.raises(InvalidArgument):
        gaussian_downsample(gray_image(64, 512), (96, 768))


def test_downsample_same_size_is_copy():
    img = gray_image(16, 16, 0.25)
    out = gaussian_downsample(img, (16, 16))
    assert np.array_equal(out.pixels, img.pixels)


def test_downsample_energy_conservation():
    # one black pixel on white: blur+resample keeps total ink within 5%
    # after area correction
    px = np.ones((64, 64, 1))
    px[32, 32, 0] = 0.0
    src = RasterImage(px)
    out = gaussian_downsample(src, (32, 32))
    energy_src = (1.0 - src.pixels).sum()
    energy_out = (1.0 - out.pixels).sum() * (64 * 64) / (32 * 32)
    assert abs(energy_out - energy_src) / energy_src < 0.05


def test_build_pyramid_shapes_and_full_size_adaption():
    planes = build_pyramid(gray_image(32, 256), TOY)
    assert [p.shape for p in planes] == [(32, 256), (24, 192), (16, 128)]
    # larger inputs are first resampled onto the full-resolution canvas
    planes = build_pyramid(gray_image(64, 512), TOY)
    assert planes[0].shape == (32, 256)


# ---------------------------------------------------------------------------
# patch embedding

def test_embed_zero_image_zero_tables_gives_zero_tokens():
    enc = toy_encoder()
    with torch.no_grad():
        enc.spatial_table.zero_()
        enc.scale_table.zero_()
    pyramid = [torch.zeros(1, h, w) for (h, w) in TOY.sizes]
    tokens = enc.embed_patches(pyramid)
    assert tokens.shape == (1, TOY.total_tokens, TOY.dim)
    assert torch.all(tokens == 0)


def test_embed_rejects_wrong_shapes():
    enc = toy_encoder()
    with pytest.raises(InvalidArgument):
        enc.embed_patches([torch.zeros(1, 32, 256)])
    bad = [torch.zeros(1, h, w) for (h, w) in TOY.sizes]
    bad[1] = torch.zeros(1, 24, 200)
    with pytest.raises(InvalidArgument):
        enc.embed_patches(bad)


def test_embed_scale_table_difference_oracle():
    # constant image: every patch has identical pixels, so two tokens in the
    # same grid cell at different scales differ exactly by Q[k1] - Q[k2]
    enc = toy_encoder()
    pyramid = [torch.full((1, h, w), 0.7) for (h, w) in TOY.sizes]
    tokens = enc.embed_patches(pyramid)[0]
    prov = enc.provenance
    # cell (2, 6) exists at both scale 0 and the coarsest scale
    cell = (prov["t_i"] == 2) & (prov["t_j"] == 6)
    a = np.flatnonzero(cell & (prov["scale"] == 0))[0]
    b = np.flatnonzero(cell & (prov["scale"] == 2))[0]
    got = tokens[a] - tokens[b]
    want = enc.scale_table[0] - enc.scale_table[2]
    assert torch.allclose(got, want, atol=1e-6)


# ---------------------------------------------------------------------------
# trunk + heads

def test_encode_style_deterministic_and_finite():
    enc = toy_encoder()
    img = gray_image(32, 256, 0.9)
    a = encode_style(img, enc)
    b = encode_style(img, enc)
    assert torch.equal(a.features, b.features)
    assert len(a) == TOY.total_tokens
    assert np.array_equal(a.provenance, token_provenance(TOY))


def test_encode_style_raises_on_nan_weights():
    enc = toy_encoder()
    with torch.no_grad():
        enc.patch_proj.weight.fill_(float("nan"))
    with pytest.raises(NumericalError):
        encode_style(gray_image(32, 256), enc)


def test_writer_logits_mean_pool_permutation_invariant():
    enc = toy_encoder(num_writers=4)
    feats = torch.randn(1, 50, TOY.dim)
    perm = torch.randperm(50)
    a = enc.writer_logits(feats)
    b = enc.writer_logits(feats[:, perm])
    assert torch.allclose(a, b, atol=1e-6)


def test_classify_writer_sums_to_one():
    enc = toy_encoder(num_writers=5)
    probs = classify_writer(encode_style(gray_image(32, 256, 0.8), enc), enc)
    assert probs.shape == (5,)
    assert abs(float(probs.sum()) - 1.0) < 1e-6


def test_classify_writer_uniform_on_zero_head():
    enc = toy_encoder(num_writers=5)
    with torch.no_grad():
        enc.writer_head.weight.zero_()
        enc.writer_head.bias.zero_()
    probs = classify_writer(encode_style(gray_image(32, 256, 0.8), enc), enc)
    assert torch.allclose(probs, torch.full((5,), 0.2), atol=1e-6)


def test_classifier_head_gradient_matches_finite_differences():
    torch.manual_seed(3)
    enc = toy_encoder(num_writers=3)
    pyramid = [torch.rand(1, h, w, dtype=torch.float32)
               for (h, w) in TOY.sizes]
    target = torch.tensor([1])

    def loss_value():
        logits = enc.writer_logits(enc(pyramid))
        return torch.nn.functional.cross_entropy(logits, target)

    loss = loss_value()
    loss.backward()
    w = enc.writer_head.weight
    grad = w.grad.detach().clone()
    eps = 1e-3
    for idx in [(0, 0), (1, 5), (2, TOY.dim - 1)]:
        with torch.no_grad():
            orig = w[idx].item()
            w[idx] = orig + eps
            hi = loss_value().item()
            w[idx] = orig - eps
            lo = loss_value().item()
            w[idx] = orig
        fd = (hi - lo) / (2 * eps)
        assert abs(fd - grad[idx].item()) <= 1e-4 * max(1.0, abs(fd))


# ---------------------------------------------------------------------------
# local style patches

def style_features():
    enc = toy_encoder()
    return encode_style(gray_image(32, 256, 0.3), enc)


def test_local_patches_full_crop_keeps_everything():
    feats = style_features()
    out = local_style_patches(feats, crop=(32, 256))
    assert len(out) == len(feats)


def test_local_patches_centered_geometric_oracle():
    feats = style_features()
    out = local_style_patches(feats, crop=(20, 96))
    prov = out.provenance
    full = prov[prov["scale"] == 0]
    # window rows 6..26, cols 80..176; centers at 8i+4, 8j+4 inclusive
    want_rows = [i for i in range(4) if 6 <= 8 * i + 4 <= 26]
    want_cols = [j for j in range(32) if 80 <= 8 * j + 4 <= 176]
    assert len(full) == len(want_rows) * len(want_cols)
    assert sorted(set(full["i"])) == want_rows
    assert sorted(set(full["j"])) == want_cols
    # coarse tokens always pass
    coarse = prov[prov["scale"] != 0]
    assert len(coarse) == TOY.tokens_at(1) + TOY.tokens_at(2)


def test_local_patches_eval_deterministic():
    feats = style_features()
    a = local_style_patches(feats)
    b = local_style_patches(feats)
    assert torch.equal(a.features, b.features)


def test_local_patches_train_window_moves():
    feats = style_features()
    a = local_style_patches(feats, rng=np.random.default_rng(0))
    b = local_style_patches(feats, rng=np.random.default_rng(1))
    # different window positions keep different full-res token sets; the
    # kept count itself varies because the center test is inclusive
    full_a = a.provenance[a.provenance["scale"] == 0]
    full_b = b.provenance[b.provenance["scale"] == 0]
    assert not np.array_equal(full_a, full_b)
    n_coarse = TOY.tokens_at(1) + TOY.tokens_at(2)
    assert (a.provenance["scale"] != 0).sum() == n_coarse
    assert (b.provenance["scale"] != 0).sum() == n_coarse


def test_local_patches_rejects_oversized_crop():
    feats = style_features()
    with pytest.raises(InvalidArgument):
        local_style_patches(feats, crop=(33, 256))
    with pytest.raises(InvalidArgument):
        local_style_patches(feats, crop=(0, 10))


def test_render_style_image_matches_config_size():
    from strokegen.dataset import generate_synthetic
    s = generate_synthetic(1, 1, 0)[0]
    img = render_style_image(s.strokes, TOY)
    assert (img.height, img.width) == TOY.full_size
    assert img.pixels.min() == 0.0  # solid ink, not faint gray
