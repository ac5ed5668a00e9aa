import math

import numpy as np
import pytest

import _oracles as ref
from vidtext.encoders import EncoderConfig, init_encoder_params
from vidtext.errors import BatchError, ConfigError, FormatError, ScheduleError
from vidtext.model import build_model
from vidtext.numerics import Tensor
from vidtext.similarity import CalculatorConfig
from vidtext.training import (
    FreezePolicy,
    OptimState,
    adam_step,
    apply_freeze,
    cosine_lr,
    decode_checkpoint,
    encode_checkpoint,
    init_calculator,
    repeat_rows,
    symmetric_ce_loss,
)
from vidtext.training.loop import LrGroups, TrainConfig, batch_order, params_to_arrays, train
from vidtext.training.optim import clip_global_norm


def T(a):
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=True)


# -- loss ---------------------------------------------------------------------------

def test_loss_single_item_is_zero():
    out = symmetric_ce_loss(T([[3.7]])).floats()
    assert out == {"L_v2t": 0.0, "L_t2v": 0.0, "L": 0.0}


def test_loss_uniform_two_items():
    assert symmetric_ce_loss(T(np.full((2, 2), 0.4))).L.item() == pytest.approx(2 * math.log(2), abs=1e-12)


def test_loss_dominant_diagonal_reference():
    L = symmetric_ce_loss(T([[10.0, 0.0], [0.0, 10.0]])).L.item()
    expect = 2 * math.log1p(math.exp(-10))
    assert L == pytest.approx(expect, rel=1e-12)
    assert L == pytest.approx(9.0800e-5, rel=1e-4)


def test_loss_matches_oracle_and_sums_parts():
    rng = np.random.default_rng(0)
    S = rng.normal(size=(5, 5))
    out = symmetric_ce_loss(T(S), scale=2.5)
    v2t, t2v = ref.symmetric_ce(S, 2.5)
    assert abs(out.L_v2t.item() - v2t) < 1e-12 and abs(out.L_t2v.item() - t2v) < 1e-12
    assert abs(out.L.item() - (out.L_v2t.item() + out.L_t2v.item())) < 1e-12


def test_loss_gradient_sums_to_zero_per_row():
    S = T(np.random.default_rng(1).normal(size=(4, 4)))
    symmetric_ce_loss(S).L.backward()
    # softmax minus one-hot: each row and column of each term sums to zero
    np.testing.assert_allclose(S.grad.sum(), 0.0, atol=1e-12)


def test_loss_rejects_non_square():
    with pytest.raises(BatchError):
        symmetric_ce_loss(T(np.zeros((2, 3))))


# -- optimiser ------------------------------------------------------------------------

def test_adam_zero_grad_keeps_params():
    p = {"w": T([1.0, -2.0])}
    adam_step(p, {"w": np.zeros(2)}, OptimState(), 0.1)
    np.testing.assert_array_equal(p["w"].data, [1.0, -2.0])


def test_adam_first_step_size():
    p = {"w": T([0.0, 5.0])}
    st = OptimState()
    adam_step(p, {"w": np.ones(2)}, st, 0.1)
    np.testing.assert_allclose(p["w"].data, [-0.1, 4.9], atol=1e-8)
    assert st.step == 1


def test_adam_deterministic():
    def run():
        rng = np.random.default_rng(0)
        p = {"w": T(rng.normal(size=4))}
        st = OptimState()
        for _ in range(5):
            adam_step(p, {"w": rng.normal(size=4)}, st, {"w": 0.01})
        return p["w"].data

    np.testing.assert_array_equal(run(), run())


def test_cosine_lr_boundaries():
    assert cosine_lr(5, 25, 0.2, warmup_steps=5) == pytest.approx(0.2)
    assert cosine_lr(25, 25, 0.2, warmup_steps=5) == pytest.approx(0.0, abs=1e-18)
    assert cosine_lr(15, 25, 0.2, warmup_steps=5) == pytest.approx(0.1)
    assert cosine_lr(0, 10, 0.2) == 0.2
    with pytest.raises(ScheduleError):
        cosine_lr(11, 10, 0.2)


def test_clip_global_norm():
    g = {"a": np.array([3.0]), "b": np.array([4.0])}
    norm = clip_global_norm(g, 1.0)
    assert norm == pytest.approx(5.0)
    assert math.hypot(g["a"][0], g["b"][0]) == pytest.approx(1.0)


# -- freeze --------------------------------------------------------------------------

def _params(n_layers=12):
    cfg = EncoderConfig(d_model=8, n_layers=n_layers, n_heads=2, mlp_ratio=1, patch=(4, 4), image_size=(4, 4),
                        max_frames=2, max_tokens=4, vocab_size=8)
    return init_encoder_params(cfg, np.random.default_rng(0), np.float64)


def test_freeze_none():
    p = _params(2)
    assert apply_freeze(p, FreezePolicy()) == list(p)


def test_freeze_linear_only():
    p = _params(2)
    trainable = apply_freeze(p, FreezePolicy("linear_only"))
    assert set(p) - set(trainable) == {"video.patch.weight", "text.tok_emb"}
    assert all(n in trainable for n in p if ".layers." in n)
    assert not p["video.patch.weight"].requires_grad


def test_freeze_below_layer_six_of_twelve():
    p = _params(12)
    frozen = set(p) - set(apply_freeze(p, FreezePolicy("below_layer", layer=6)))
    for tower in ("video", "text"):
        for i in range(12):
            names = [n for n in p if n.startswith(f"{tower}.layers.{i}.")]
            assert all((n in frozen) == (i < 6) for n in names)
    assert {"video.patch.weight", "text.tok_emb"} <= frozen
    assert "video.proj" not in frozen and "text.ln_final.gamma" not in frozen


def test_freeze_below_layer_bounds():
    p = _params(2)
    with pytest.raises(ConfigError):
        apply_freeze(p, FreezePolicy("below_layer", layer=3))
    with pytest.raises(ConfigError):
        FreezePolicy("below_layer", layer=0)
    with pytest.raises(ConfigError):
        apply_freeze(p, FreezePolicy("custom", names=("nope",)))


# -- transfer init ---------------------------------------------------------------------

ENC = EncoderConfig(d_model=16, n_layers=2, n_heads=4, mlp_ratio=2, patch=(4, 4), image_size=(8, 8),
                    max_frames=4, max_tokens=8, vocab_size=32)


def test_repeat_rows_cycles():
    t = np.arange(6.0).reshape(3, 2)
    np.testing.assert_array_equal(repeat_rows(t, 2), t[:2])
    np.testing.assert_array_equal(repeat_rows(t, 5)[3:], t[:2])


def test_position_table_prefix_and_fusion_copy():
    enc = init_encoder_params(ENC, np.random.default_rng(0), np.float64)
    out = init_calculator(enc, CalculatorConfig("seqTransf", fusion_layers=3), ENC, np.random.default_rng(1),
                          np.float64)
    np.testing.assert_array_equal(out["calc.pos"].data, enc["text.pos"].data[:ENC.max_frames])
    for name, t in enc.items():
        if name.startswith("video.layers.0."):
            fused = out["calc.fusion.layers.0." + name[len("video.layers.0."):]]
            np.testing.assert_array_equal(fused.data, t.data)
            assert fused is not t
    assert "calc.fusion.layers.2.attn.q.weight" in out


def test_lstm_init_seeding():
    enc = init_encoder_params(ENC, np.random.default_rng(0), np.float64)
    cfg = CalculatorConfig("seqLSTM")

    def draw(seed):
        return init_calculator(enc, cfg, ENC, np.random.default_rng(seed), np.float64)["calc.lstm.w_ih"].data

    np.testing.assert_array_equal(draw(3), draw(3))
    assert not np.array_equal(draw(3), draw(4))


# -- checkpoint --------------------------------------------------------------------------

def test_checkpoint_round_trip_and_errors(tmp_path):
    rng = np.random.default_rng(0)
    arrays = {"a": rng.normal(size=(2, 3)).astype(np.float32), "b.c": np.ones(4, np.float32)}
    buf = encode_checkpoint(arrays, {"k": 1})
    back, cfg = decode_checkpoint(buf)
    assert cfg == {"k": 1}
    for k in arrays:
        np.testing.assert_array_equal(back[k], arrays[k])
    assert encode_checkpoint(back, cfg) == buf
    with pytest.raises(FormatError):
        decode_checkpoint(buf[:-3])
    with pytest.raises(FormatError):
        decode_checkpoint(b"XXXX" + buf[4:])


# -- training loop ------------------------------------------------------------------------

LOOP_ENC = EncoderConfig(d_model=16, n_layers=1, n_heads=4, mlp_ratio=2, patch=(4, 4), image_size=(8, 8),
                         max_frames=4, max_tokens=16, vocab_size=256)


class Item:
    def __init__(self, i, clip, caption):
        self.id, self.clip, self.caption = f"it{i}", clip, caption


def tiny_corpus(n=6, seed=0):
    from vidtext.data.synthetic import class_caption, class_texture, render_clip
    from vidtext.data.synthetic import MOTIONS
    from vidtext.encoders import VideoClip

    rng = np.random.default_rng(seed)
    items = []
    for k in range(n):
        tex = class_texture(rng, 3, 8, 8)
        frames = render_clip(tex, MOTIONS[k % len(MOTIONS)], 3, 0.05, rng)
        items.append(Item(k, VideoClip(frames), class_caption(k, 16)))
    return items


def test_batch_order_drops_partial_and_is_seeded():
    a = batch_order(10, 4, 2, seed=3)
    assert len(a) == 4 and all(len(b) == 4 for b in a)
    for x, y in zip(a, batch_order(10, 4, 2, seed=3)):
        np.testing.assert_array_equal(x, y)


def test_zero_epochs_leaves_init(tmp_path):
    model = build_model(LOOP_ENC, CalculatorConfig("meanP"), seed=1)
    before = {k: v.copy() for k, v in params_to_arrays(model.params).items()}
    res = train(model, tiny_corpus(), TrainConfig(batch_size=3, epochs=0))
    assert res.log == [] and res.total_steps == 0
    for k, v in params_to_arrays(model.params).items():
        np.testing.assert_array_equal(v, before[k])


def test_training_reduces_loss_below_uniform():
    corpus = tiny_corpus(6)
    model = build_model(LOOP_ENC, CalculatorConfig("meanP"), seed=1)
    res = train(model, corpus, TrainConfig(batch_size=6, epochs=40, lr=LrGroups(3e-3, 3e-3)))
    assert res.log[-1]["L"] < 2 * math.log(6)
    assert res.log[-1]["L"] < res.log[0]["L"]
    assert [r["step"] for r in res.log] == list(range(40))


def test_batch_larger_than_corpus_rejected():
    model = build_model(LOOP_ENC, CalculatorConfig("meanP"), seed=1)
    with pytest.raises(ConfigError):
        train(model, tiny_corpus(3), TrainConfig(batch_size=4))
