"""Model = encoder towers + one similarity calculator + a named parameter registry."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .encoders import Caption, EncoderConfig, VideoClip, encode_captions, encode_clips, init_encoder_params
from .numerics import Tensor
from .numerics.tensor import exp
from .similarity import CalculatorConfig, SimilarityCalculator
from .training.transfer import init_calculator


@dataclass
class RetrievalModel:
    encoder: EncoderConfig
    calculator: CalculatorConfig
    params: Dict[str, Tensor] = field(default_factory=dict)

    def __post_init__(self):
        self._calc = SimilarityCalculator(self.calculator, self.encoder.n_heads, self.encoder.ln_eps)

    @property
    def calc(self) -> SimilarityCalculator:
        return self._calc

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def encode_videos(self, clips: Sequence[VideoClip]) -> List[Tensor]:
        return encode_clips(clips, self.params, self.encoder)

    def encode_texts(self, captions: Sequence[Caption]) -> Tensor:
        return encode_captions(captions, self.params, self.encoder)

    def similarity(self, videos: Sequence[Tensor], texts: Tensor) -> Tensor:
        return self._calc.matrix(videos, texts, self.params)

    def forward(self, clips: Sequence[VideoClip], captions: Sequence[Caption]) -> Tensor:
        return self.similarity(self.encode_videos(clips), self.encode_texts(captions))

    def loss_scale(self):
        if "calc.logit_scale" in self.params:
            return exp(self.params["calc.logit_scale"])
        return self.calculator.scale

    def config_dict(self) -> dict:
        return {"encoder": self.encoder.to_dict(), "calculator": self.calculator.to_dict()}


def seed_streams(seed: int):
    """Independent generators for the towers and the calculator, so changing
    the calculator kind never perturbs the encoder initialisation."""
    ss = np.random.SeedSequence(seed)
    enc, calc = ss.spawn(2)
    return np.random.default_rng(enc), np.random.default_rng(calc)


def build_model(encoder: EncoderConfig, calculator: CalculatorConfig, seed: int = 17,
                dtype=np.float32) -> RetrievalModel:
    enc_rng, calc_rng = seed_streams(seed)
    params = init_encoder_params(encoder, enc_rng, dtype)
    params.update(init_calculator(params, calculator, encoder, calc_rng, dtype))
    return RetrievalModel(encoder, calculator, params)


def model_from_dict(cfg: dict, params: Optional[Dict[str, Tensor]] = None) -> RetrievalModel:
    enc = EncoderConfig(**cfg["encoder"])
    calc = CalculatorConfig(**cfg["calculator"])
    return RetrievalModel(enc, calc, params or {})
