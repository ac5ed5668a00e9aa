from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np

from ..errors import ConfigError, NumericError
from ..model import RetrievalModel
from ..numerics import Tensor
from .loss import symmetric_ce_loss
from .optim import FreezePolicy, OptimState, adam_step, apply_freeze, clip_global_norm, cosine_lr, is_new_module

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LrGroups:
    base_lr: float = 1e-3
    new_module_lr: float = 1e-3
    warmup_steps: int = 0

    def __post_init__(self):
        if not (self.base_lr > 0 and self.new_module_lr > 0):
            raise ConfigError("learning rates must be positive")
        if self.warmup_steps < 0:
            raise ConfigError("warmup_steps must be >= 0")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    epochs: int = 5
    seed: int = 17
    lr: LrGroups = field(default_factory=LrGroups)
    freeze: FreezePolicy = field(default_factory=FreezePolicy)
    grad_clip: Optional[float] = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.epochs < 0:
            raise ConfigError("epochs must be >= 0")


@dataclass
class TrainResult:
    log: List[dict]
    trainable: List[str]
    total_steps: int


def batch_order(n: int, batch_size: int, epochs: int, seed: int) -> List[np.ndarray]:
    """Epoch-wise shuffles without replacement; the trailing partial batch is dropped."""
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5EED]))
    per_epoch = n // batch_size
    out = []
    for _ in range(epochs):
        perm = rng.permutation(n)
        out.extend(perm[b * batch_size:(b + 1) * batch_size] for b in range(per_epoch))
    return out


def train(model: RetrievalModel, corpus: Sequence, cfg: TrainConfig,
          on_step: Optional[Callable[[dict], None]] = None) -> TrainResult:
    """Optimise ``model.params`` in place on ``corpus`` (items with ``clip`` and ``caption``)."""
    n = len(corpus)
    if n < 1:
        raise ConfigError("empty corpus")
    if cfg.batch_size > n:
        raise ConfigError(f"batch_size {cfg.batch_size} exceeds corpus size {n}")
    params = model.params
    trainable = apply_freeze(params, cfg.freeze)
    batches = batch_order(n, cfg.batch_size, cfg.epochs, cfg.seed)
    total = len(batches)
    state = OptimState()
    log: List[dict] = []
    for step, idx in enumerate(batches):
        lr_base = cosine_lr(step, total, cfg.lr.base_lr, cfg.lr.warmup_steps)
        lr_new = cosine_lr(step, total, cfg.lr.new_module_lr, cfg.lr.warmup_steps)
        for name in trainable:
            params[name].zero_grad()
        items = [corpus[i] for i in idx]
        try:
            S = model.forward([it.clip for it in items], [it.caption for it in items])
            loss = symmetric_ce_loss(S, model.loss_scale())
        except NumericError as exc:
            raise NumericError(f"step {step}: {exc} (batch ids {[it.id for it in items]})") from exc
        record = {"step": step, "lr_base": lr_base, "lr_new": lr_new, **loss.floats()}
        if not np.isfinite(record["L"]):
            raise NumericError(f"step {step}: non-finite loss {record['L']}")
        if trainable:
            loss.L.backward()
            grads: Dict[str, np.ndarray] = {k: params[k].grad for k in trainable}
            if cfg.grad_clip:
                clip_global_norm(grads, cfg.grad_clip)
            lrs = {k: (lr_new if is_new_module(k) else lr_base) for k in trainable}
            # a zero rate happens only at the very end of the schedule
            lrs = {k: v for k, v in lrs.items() if v > 0}
            adam_step(params, {k: grads[k] for k in lrs}, state, lrs)
        log.append(record)
        if on_step is not None:
            on_step(record)
        logger.debug("step %d L=%.6f", step, record["L"])
    return TrainResult(log=log, trainable=trainable, total_steps=total)


def params_to_arrays(params: Dict[str, Tensor]) -> Dict[str, np.ndarray]:
    return {k: v.data for k, v in params.items()}
