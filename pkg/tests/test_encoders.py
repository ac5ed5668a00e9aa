import numpy as np
import pytest

import _oracles as ref
from vidtext.encoders import (
    EOS_ID,
    PAD_ID,
    SOS_ID,
    Caption,
    EncoderConfig,
    VideoClip,
    central_frame_init,
    encode_captions,
    encode_frames,
    encode_text,
    init_encoder_params,
    patch_embed_2d,
    patch_embed_3d,
)
from vidtext.errors import ConfigError, DimensionError, MalformedCaptionError
from vidtext.numerics import Tensor

TOY = dict(d_model=16, n_layers=2, n_heads=4, mlp_ratio=2, patch=(4, 4), image_size=(8, 8),
           channels=3, max_frames=4, max_tokens=8, vocab_size=32)


def make(mode="2d", seed=0, dtype=np.float64, **kw):
    cfg = EncoderConfig(projection_mode=mode, **{**TOY, **kw})
    return cfg, init_encoder_params(cfg, np.random.default_rng(seed), dtype)


def arrays(params):
    return {k: v.data.astype(np.float64) for k, v in params.items()}


def clip(rng, T=3, C=3, H=8, W=8):
    return VideoClip(rng.normal(size=(T, C, H, W)))


# -- patch embedding ---------------------------------------------------------------

def test_patch_embed_identical_frames_identical_tokens():
    rng = np.random.default_rng(0)
    f = rng.normal(size=(1, 3, 8, 8))
    frames = np.concatenate([f, f], axis=0)
    out = patch_embed_2d(frames, Tensor(rng.normal(size=(5, 3, 4, 4)))).data
    np.testing.assert_array_equal(out[0], out[1])


def test_patch_embed_zero_kernel():
    out = patch_embed_2d(np.ones((2, 3, 8, 8)), Tensor(np.zeros((5, 3, 4, 4)))).data
    np.testing.assert_array_equal(out, 0.0)


def test_patch_embed_identity_kernel_gives_pixels():
    frame = np.array([[[1.0, 2.0], [3.0, 4.0]]])  # C=1, 2x2
    E = np.eye(4).reshape(4, 1, 2, 2)
    out = patch_embed_2d(frame[None], Tensor(E)).data
    np.testing.assert_array_equal(out[0, 0], [1.0, 2.0, 3.0, 4.0])


def test_patch_embed_3d_central_init_equals_2d():
    rng = np.random.default_rng(1)
    frames = rng.normal(size=(4, 3, 8, 8))
    E2d = rng.normal(size=(6, 3, 4, 4))
    a = patch_embed_2d(frames, Tensor(E2d)).data
    b = patch_embed_3d(frames, Tensor(central_frame_init(E2d, 3))).data
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_patch_embed_3d_single_frame_uses_only_center_slice():
    rng = np.random.default_rng(2)
    frames = rng.normal(size=(1, 3, 8, 8))
    E3d = rng.normal(size=(6, 3, 3, 4, 4))
    out = patch_embed_3d(frames, Tensor(E3d)).data
    center = patch_embed_2d(frames, Tensor(E3d[:, :, 1])).data
    np.testing.assert_allclose(out, center, atol=1e-12)


def test_patch_embed_3d_matches_bruteforce():
    rng = np.random.default_rng(3)
    frames = rng.normal(size=(3, 3, 8, 8))
    E3d = rng.normal(size=(6, 3, 3, 4, 4))
    out = patch_embed_3d(frames, Tensor(E3d)).data
    assert np.abs(out - ref.conv3d_bruteforce(frames, E3d, 1)).max() < 1e-10


def test_central_frame_init():
    E2d = np.random.default_rng(0).normal(size=(4, 3, 2, 2))
    K = central_frame_init(E2d, 3)
    assert K.shape == (4, 3, 3, 2, 2)
    np.testing.assert_array_equal(K[:, :, 1], E2d)
    assert np.abs(K[:, :, 0]).sum() + np.abs(K[:, :, 2]).sum() == 0.0
    np.testing.assert_array_equal(central_frame_init(E2d, 1)[:, :, 0], E2d)
    with pytest.raises(ConfigError):
        central_frame_init(E2d, 2)


# -- video tower --------------------------------------------------------------------

def test_encode_frames_shape_and_identical_frames():
    cfg, p = make()
    rng = np.random.default_rng(0)
    f = rng.normal(size=(1, 3, 8, 8))
    Z = encode_frames(VideoClip(np.concatenate([f, f, rng.normal(size=(1, 3, 8, 8))])), p, cfg).data
    assert Z.shape == (3, cfg.d_model)
    np.testing.assert_array_equal(Z[0], Z[1])
    assert not np.array_equal(Z[0], Z[2])


@pytest.mark.parametrize("mode", ["2d", "3d"])
def test_encode_frames_matches_scripted_forward(mode):
    cfg, p = make(mode, dtype=np.float32)
    if mode == "3d":
        k = p["video.patch.weight"]
        k.data = k.data + np.random.default_rng(5).normal(0, 0.05, size=k.shape).astype(np.float32)
    c = clip(np.random.default_rng(4), T=3)
    out = encode_frames(c, p, cfg).data
    expect = ref.encode_video(c.frames.astype(np.float32).astype(np.float64), arrays(p), cfg)
    assert np.abs(out - expect).max() < 1e-6


def test_encode_frames_rejects_wrong_dims():
    cfg, p = make()
    with pytest.raises(DimensionError):
        encode_frames(VideoClip(np.zeros((2, 3, 4, 4))), p, cfg)
    with pytest.raises(ConfigError):
        encode_frames(VideoClip(np.zeros((5, 3, 8, 8))), p, cfg)


def test_video_init_same_in_both_modes():
    _, p2 = make("2d", seed=3)
    _, p3 = make("3d", seed=3)
    np.testing.assert_array_equal(p3["video.patch.weight"].data[:, :, 1], p2["video.patch.weight"].data)
    np.testing.assert_array_equal(p3["text.tok_emb"].data, p2["text.tok_emb"].data)


# -- text tower ---------------------------------------------------------------------

def test_caption_from_text_round_trip():
    c = Caption.from_text("red box", 16)
    assert c.tokens[0] == SOS_ID and c.tokens[-1] == EOS_ID
    assert c.text() == "red box"
    with pytest.raises(MalformedCaptionError):
        Caption.from_text("much too long for this", 8)


def test_caption_validation():
    cfg, _ = make()
    with pytest.raises(MalformedCaptionError):
        Caption([SOS_ID, 5, 6]).eos_index()
    with pytest.raises(MalformedCaptionError):
        Caption([SOS_ID, 40, EOS_ID]).validate(cfg)


def test_encode_text_shape():
    cfg, p = make()
    assert encode_text(Caption([SOS_ID, 5, 7, EOS_ID]), p, cfg).shape == (cfg.d_model,)


def test_padding_after_eos_does_not_change_embedding():
    cfg, p = make()
    short = Caption([SOS_ID, 5, 7, EOS_ID])
    padded = Caption([SOS_ID, 5, 7, EOS_ID, PAD_ID, PAD_ID], length=4)
    a = encode_text(short, p, cfg).data
    b = encode_text(padded, p, cfg).data
    np.testing.assert_allclose(a, b, atol=1e-12)
    # batched with a longer caption the shorter one is padded internally
    W = encode_captions([short, Caption([SOS_ID, 3, 4, 5, 6, EOS_ID])], p, cfg).data
    np.testing.assert_allclose(W[0], a, atol=1e-12)


def test_encode_text_matches_scripted_forward():
    cfg, p = make(dtype=np.float32)
    tokens = [SOS_ID, 9, 12, 30, EOS_ID]
    out = encode_text(Caption(tokens), p, cfg).data
    expect = ref.encode_caption(tokens, arrays(p), cfg)
    assert np.abs(out - expect).max() < 1e-6


def test_config_validation():
    with pytest.raises(ConfigError):
        EncoderConfig(d_model=10, n_heads=4)
    with pytest.raises(ConfigError):
        EncoderConfig(image_size=(10, 10), patch=(4, 4))
    with pytest.raises(ConfigError):
        EncoderConfig(temporal_kernel=2)


def test_frame_permutation_permutes_rows_in_2d():
    cfg, p = make()
    frames = np.random.default_rng(6).normal(size=(4, 3, 8, 8))
    perm = [2, 0, 3, 1]
    a = encode_frames(VideoClip(frames), p, cfg).data
    b = encode_frames(VideoClip(frames[perm]), p, cfg).data
    np.testing.assert_allclose(b, a[perm], atol=1e-12)


@pytest.mark.parametrize("mode", ["2d", "3d"])
def test_outputs_finite_across_seeds(mode):
    for seed in range(50):
        cfg, p = make(mode, seed=seed, dtype=np.float32, n_layers=1)
        rng = np.random.default_rng(seed)
        Z = encode_frames(clip(rng, T=int(rng.integers(1, 5))), p, cfg).data
        body = rng.integers(3, cfg.vocab_size, size=int(rng.integers(0, 6))).tolist()
        w = encode_text(Caption([SOS_ID, *body, EOS_ID]), p, cfg).data
        assert np.isfinite(Z).all() and np.isfinite(w).all()
