"""End-to-end gradient check of the retrieval loss on toy dimensions."""

from __future__ import annotations

from typing import Optional

import numpy as np

from .encoders import EOS_ID, SOS_ID, Caption, EncoderConfig, VideoClip
from .model import build_model
from .numerics import GradReport, finite_diff_check
from .similarity import CalculatorConfig
from .training.loss import symmetric_ce_loss

TOY_ENCODER = dict(d_model=32, n_layers=2, n_heads=4, mlp_ratio=2, patch=(4, 4), image_size=(8, 8),
                   channels=3, max_frames=4, max_tokens=8, vocab_size=32)
TOY_FUSION_LAYERS = 2
TOY_BATCH = 3
TOY_FRAMES = 4


def toy_batch(rng: np.random.Generator, enc: EncoderConfig, batch: int = TOY_BATCH, frames: int = TOY_FRAMES):
    C, (H, W) = enc.channels, enc.image_size
    clips = [VideoClip(rng.normal(size=(frames, C, H, W))) for _ in range(batch)]
    captions = []
    for _ in range(batch):
        body = rng.integers(EOS_ID + 1, enc.vocab_size, size=int(rng.integers(1, enc.max_tokens - 1)))
        captions.append(Caption([SOS_ID, *body.tolist(), EOS_ID]))
    return clips, captions


def run_gradcheck(calculator: str = "meanP", projection: str = "2d", seed: int = 0,
                  max_entries: Optional[int] = 8, eps: float = 1e-6, tol: float = 1e-4,
                  corrupt: bool = False, learnable_scale: bool = False) -> GradReport:
    """Finite-difference check of every parameter of a 64-bit toy model."""
    enc = EncoderConfig(projection_mode=projection, **TOY_ENCODER)
    calc = CalculatorConfig(kind=calculator, fusion_layers=TOY_FUSION_LAYERS, learnable_scale=learnable_scale)
    model = build_model(enc, calc, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    if projection == "3d":
        # break the zero side slices of the central-frame kernel so their gradients
        # are checked in a generic configuration
        k = model.params["video.patch.weight"]
        k.data += rng.normal(0.0, 0.05, size=k.shape)
    clips, captions = toy_batch(rng, enc)

    def loss_fn():
        S = model.forward(clips, captions)
        return symmetric_ce_loss(S, model.loss_scale()).L

    hook = (lambda name, g: 2.0 * g) if corrupt else None
    return finite_diff_check(loss_fn, model.params, eps=eps, tol=tol, max_entries=max_entries,
                             seed=seed, grad_hook=hook)
