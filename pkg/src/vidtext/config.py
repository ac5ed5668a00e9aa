"""Run configuration: strict JSON schema plus conversion into the runtime dataclasses."""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .data.sampling import SamplingConfig
from .encoders import EncoderConfig
from .errors import ConfigError
from .similarity import CalculatorConfig
from .training.loop import LrGroups, TrainConfig
from .training.optim import FreezePolicy


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class EncoderSection(_Strict):
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    mlp_ratio: int = 4
    patch: Tuple[int, int] = (4, 4)
    image_size: Tuple[int, int] = (16, 16)
    channels: int = 3
    temporal_kernel: int = 3
    projection_mode: Literal["2d", "3d"] = "2d"
    max_frames: int = 12
    max_tokens: int = 16
    vocab_size: int = 256
    embed_dim: Optional[int] = None
    ln_eps: float = 1e-5


class CalculatorSection(_Strict):
    kind: Literal["meanP", "seqLSTM", "seqTransf", "tightTransf"] = "meanP"
    fusion_layers: int = 4
    fusion_heads: Optional[int] = None
    tight_chunk: int = 64
    scale: float = 1.0
    learnable_scale: bool = False


class SamplingSection(_Strict):
    strategy: Literal["head", "tail", "uniform"] = "uniform"
    rate_fps: float = 1.0
    max_frames: int = 12


class LrSection(_Strict):
    base_lr: float = 1e-3
    new_module_lr: float = 1e-3
    warmup_steps: int = 0


class FreezeSection(_Strict):
    mode: Literal["none", "linear_only", "below_layer", "custom"] = "none"
    layer: Optional[int] = None
    names: List[str] = Field(default_factory=list)


class PathsSection(_Strict):
    corpus: Optional[str] = None
    run_dir: Optional[str] = None
    checkpoint: Optional[str] = None
    log: Optional[str] = None


class RunConfig(_Strict):
    encoder: EncoderSection = Field(default_factory=EncoderSection)
    calculator: CalculatorSection = Field(default_factory=CalculatorSection)
    sampling: SamplingSection = Field(default_factory=SamplingSection)
    lr: LrSection = Field(default_factory=LrSection)
    freeze: FreezeSection = Field(default_factory=FreezeSection)
    batch_size: int = 8
    epochs: int = 5
    seed: int = 17
    grad_clip: Optional[float] = None
    paths: PathsSection = Field(default_factory=PathsSection)

    # -- runtime views -------------------------------------------------------
    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(**self.encoder.model_dump())

    def calculator_config(self) -> CalculatorConfig:
        return CalculatorConfig(**self.calculator.model_dump())

    def sampling_config(self) -> SamplingConfig:
        return SamplingConfig(**self.sampling.model_dump())

    def train_config(self) -> TrainConfig:
        return TrainConfig(batch_size=self.batch_size, epochs=self.epochs, seed=self.seed,
                           lr=LrGroups(**self.lr.model_dump()),
                           freeze=FreezePolicy(mode=self.freeze.mode, layer=self.freeze.layer,
                                               names=tuple(self.freeze.names)),
                           grad_clip=self.grad_clip)

    def validate_all(self) -> "RunConfig":
        """Build every runtime config so invalid values fail before any work starts."""
        enc = self.encoder_config()
        self.calculator_config()
        samp = self.sampling_config()
        self.train_config()
        if samp.max_frames > enc.max_frames:
            raise ConfigError(f"sampling.max_frames {samp.max_frames} exceeds encoder.max_frames {enc.max_frames}")
        if self.grad_clip is not None and not self.grad_clip > 0:
            raise ConfigError("grad_clip must be positive")
        return self

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"


def _deep_update(base: dict, overrides: dict) -> dict:
    out = dict(base)
    for k, v in overrides.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_update(out[k], v)
        else:
            out[k] = v
    return out


def parse_config(doc: dict, overrides: Optional[dict] = None) -> RunConfig:
    doc = _deep_update(doc or {}, overrides or {})
    try:
        cfg = RunConfig.model_validate(doc)
    except ValidationError as exc:
        raise ConfigError(f"invalid run config: {exc}") from None
    return cfg.validate_all()


def load_config(path, overrides: Optional[dict] = None) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    return parse_config(doc, overrides)
