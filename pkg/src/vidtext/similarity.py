"""Similarity calculators between frame sequences and caption embeddings.

``meanP``, ``seqLSTM`` and ``seqTransf`` are loose: the video side is
pooled to one vector independently of the text and scored by cosine.
``tightTransf`` fuses the caption embedding with the frames in a
transformer and scores the pair with a small MLP head.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .encoders import block_weights, run_blocks
from .errors import BatchError, ConfigError, DimensionError
from .numerics import (
    Tensor,
    broadcast_to,
    concat,
    cosine_matrix,
    cosine_sim,
    linear,
    lstm_sequence,
    mean_pool,
    relu,
    stack,
)


class CalculatorKind(str, Enum):
    meanP = "meanP"
    seqLSTM = "seqLSTM"
    seqTransf = "seqTransf"
    tightTransf = "tightTransf"

    @classmethod
    def parse(cls, value) -> "CalculatorKind":
        if isinstance(value, cls):
            return value
        try:
            return cls(value)
        except ValueError:
            raise ConfigError(f"unknown calculator {value!r}; expected one of "
                              f"{[k.value for k in cls]}") from None

    @property
    def loose(self) -> bool:
        return self is not CalculatorKind.tightTransf


@dataclass(frozen=True)
class CalculatorConfig:
    kind: CalculatorKind = CalculatorKind.meanP
    fusion_layers: int = 4
    fusion_heads: Optional[int] = None
    tight_chunk: int = 64
    scale: float = 1.0
    learnable_scale: bool = False

    def __post_init__(self):
        object.__setattr__(self, "kind", CalculatorKind.parse(self.kind))
        if self.fusion_layers < 0:
            raise ConfigError("fusion_layers must be >= 0")
        if self.tight_chunk < 1:
            raise ConfigError("tight_chunk must be >= 1")
        if not self.scale > 0:
            raise ConfigError("scale must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


FUSION_PREFIX = "calc.fusion.layers"


def _lstm_params(params: Mapping[str, Tensor]) -> Dict[str, Tensor]:
    return {k: params[f"calc.lstm.{k}"] for k in ("w_ih", "w_hh", "b")}


def sim_meanP(Z: Tensor, w: Tensor) -> Tensor:
    return cosine_sim(w, mean_pool(Z))


def sim_seqLSTM(Z: Tensor, w: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    return cosine_sim(w, mean_pool(lstm_sequence(Z, _lstm_params(params))))


def seq_transformer(Z: Tensor, params: Mapping[str, Tensor], n_layers: int, n_heads: int,
                    eps: float = 1e-5) -> Tensor:
    """Frames plus positions through the bidirectional fusion encoder."""
    P = params["calc.pos"]
    n = Z.shape[0]
    if n > P.shape[0]:
        raise ConfigError(f"{n} frames exceed the {P.shape[0]} position embeddings")
    return run_blocks(Z + P[:n], params, FUSION_PREFIX, n_layers, n_heads, eps=eps)


def sim_seqTransf(Z: Tensor, w: Tensor, params: Mapping[str, Tensor], n_layers: int = 4,
                  n_heads: int = 4, eps: float = 1e-5) -> Tensor:
    return cosine_sim(w, mean_pool(seq_transformer(Z, params, n_layers, n_heads, eps)))


def tight_scores(Z: Tensor, W: Tensor, params: Mapping[str, Tensor], n_layers: int = 4,
                 n_heads: int = 4, eps: float = 1e-5) -> Tensor:
    """Score one video [n, d] against several captions [c, d] -> [c]."""
    P, Ty = params["calc.pos"], params["calc.type"]
    n, d = Z.shape
    c = W.shape[0]
    if n + 1 > P.shape[0]:
        raise ConfigError(f"fused sequence of {n + 1} exceeds {P.shape[0]} position embeddings")
    types = np.array([0] + [1] * n)
    U = concat([W.reshape(c, 1, d), broadcast_to(Z.reshape(1, n, d), (c, n, d))], axis=1)
    U = U + P[:n + 1] + Ty[types]
    U = run_blocks(U, params, FUSION_PREFIX, n_layers, n_heads, eps=eps)
    h = relu(linear(U[:, 0, :], params["calc.head.fc1.weight"], params["calc.head.fc1.bias"]))
    return linear(h, params["calc.head.fc2.weight"], params["calc.head.fc2.bias"]).reshape(c)


def sim_tight(Z: Tensor, w: Tensor, params: Mapping[str, Tensor], n_layers: int = 4,
              n_heads: int = 4, eps: float = 1e-5) -> Tensor:
    return tight_scores(Z, w.reshape(1, -1), params, n_layers, n_heads, eps).reshape(())


class SimilarityCalculator:
    """One calculator kind bound to its layer/head counts."""

    def __init__(self, cfg: CalculatorConfig, n_heads: int, eps: float = 1e-5):
        self.cfg = cfg
        self.kind = cfg.kind
        self.n_layers = cfg.fusion_layers
        self.n_heads = cfg.fusion_heads or n_heads
        self.eps = eps

    def pooled(self, Z: Tensor, params: Mapping[str, Tensor]) -> Tensor:
        """Video-side vector of a loose calculator."""
        if Z.shape[0] < 1:
            raise DimensionError("video has no frames")
        if self.kind is CalculatorKind.meanP:
            return mean_pool(Z)
        if self.kind is CalculatorKind.seqLSTM:
            return mean_pool(lstm_sequence(Z, _lstm_params(params)))
        if self.kind is CalculatorKind.seqTransf:
            return mean_pool(seq_transformer(Z, params, self.n_layers, self.n_heads, self.eps))
        raise ConfigError("tightTransf has no independent video representation")

    def pair(self, Z: Tensor, w: Tensor, params: Mapping[str, Tensor]) -> Tensor:
        if self.kind is CalculatorKind.meanP:
            return sim_meanP(Z, w)
        if self.kind is CalculatorKind.seqLSTM:
            return sim_seqLSTM(Z, w, params)
        if self.kind is CalculatorKind.seqTransf:
            return sim_seqTransf(Z, w, params, self.n_layers, self.n_heads, self.eps)
        return sim_tight(Z, w, params, self.n_layers, self.n_heads, self.eps)

    def matrix(self, videos: Sequence[Tensor], texts, params: Mapping[str, Tensor]) -> Tensor:
        """S[i, j] = s(video i, text j)."""
        W = texts if isinstance(texts, Tensor) else stack(list(texts), axis=0)
        if len(videos) != W.shape[0]:
            raise BatchError(f"{len(videos)} videos but {W.shape[0]} texts")
        if len(videos) < 1:
            raise BatchError("empty batch")
        if self.kind.loose:
            V = stack([self.pooled(Z, params) for Z in videos], axis=0)
            return cosine_matrix(V, W)
        rows: List[Tensor] = []
        step = self.cfg.tight_chunk
        for Z in videos:
            chunks = [tight_scores(Z, W[s:s + step], params, self.n_layers, self.n_heads, self.eps)
                      for s in range(0, W.shape[0], step)]
            rows.append(chunks[0] if len(chunks) == 1 else concat(chunks, axis=0))
        return stack(rows, axis=0)


def similarity_matrix(videos: Sequence[Tensor], texts, calc: SimilarityCalculator,
                      params: Mapping[str, Tensor]) -> Tensor:
    return calc.matrix(videos, texts, params)
