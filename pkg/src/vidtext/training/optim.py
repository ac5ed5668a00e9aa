"""Adam with named parameter groups, cosine decay, and freeze policies."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Set

import numpy as np

from ..errors import ConfigError, DimensionError, ScheduleError
from ..numerics import Tensor


@dataclass
class OptimState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params: Mapping[str, Tensor], grads: Mapping[str, np.ndarray], state: OptimState,
              lr) -> OptimState:
    """Bias-corrected Adam update, in place on ``params``.

    ``lr`` is a float or a mapping from parameter name to rate. Only names
    present in ``grads`` are touched.
    """
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for name, g in grads.items():
        p = params[name]
        if g.shape != p.shape:
            raise DimensionError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        rate = lr[name] if isinstance(lr, Mapping) else lr
        if not rate > 0:
            raise ConfigError(f"learning rate for {name} must be positive")
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data -= (rate * update).astype(p.dtype)
    return state


def cosine_lr(step: int, total_steps: int, lr_init: float, warmup_steps: int = 0) -> float:
    """Linear warmup to ``lr_init`` then half-cosine decay to zero at ``total_steps``."""
    if total_steps < 0 or warmup_steps < 0:
        raise ScheduleError("total_steps and warmup_steps must be non-negative")
    if step < 0 or step > total_steps:
        raise ScheduleError(f"step {step} outside [0, {total_steps}]")
    if warmup_steps and step < warmup_steps:
        return lr_init * step / warmup_steps
    decay = total_steps - warmup_steps
    if decay <= 0:
        return lr_init if step < total_steps else 0.0
    progress = (step - warmup_steps) / decay
    return lr_init * 0.5 * (1.0 + math.cos(math.pi * progress))


def clip_global_norm(grads: Dict[str, np.ndarray], max_norm: float) -> float:
    total = math.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads.values()))
    if total > max_norm > 0:
        scale = max_norm / (total + 1e-12)
        for k in grads:
            grads[k] = grads[k] * scale
    return total


# -- freezing -------------------------------------------------------------------

BOTTOM_LINEAR = ("video.patch.weight", "text.tok_emb")
BOTTOM_EMBEDDINGS = BOTTOM_LINEAR + ("video.cls", "video.pos", "text.pos")
_LAYER = re.compile(r"^(video|text)\.layers\.(\d+)\.")


@dataclass(frozen=True)
class FreezePolicy:
    """``none``, ``linear_only``, ``below_layer`` (1-based, inclusive) or ``custom``."""

    mode: str = "none"
    layer: Optional[int] = None
    names: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        if self.mode not in ("none", "linear_only", "below_layer", "custom"):
            raise ConfigError(f"unknown freeze mode {self.mode!r}")
        if self.mode == "below_layer" and (self.layer is None or self.layer < 1):
            raise ConfigError("below_layer needs layer >= 1")

    def frozen(self, names: Iterable[str]) -> Set[str]:
        names = list(names)
        known = set(names)
        if self.mode == "none":
            return set()
        if self.mode == "linear_only":
            return {n for n in BOTTOM_LINEAR if n in known}
        if self.mode == "below_layer":
            depth = 1 + max((int(m.group(2)) for m in map(_LAYER.match, names) if m), default=-1)
            if self.layer > depth:
                raise ConfigError(f"cannot freeze below layer {self.layer}: encoders have {depth} layers")
            out = {n for n in BOTTOM_EMBEDDINGS if n in known}
            for n in names:
                m = _LAYER.match(n)
                if m and int(m.group(2)) < self.layer:
                    out.add(n)
            return out
        missing = [n for n in self.names if n not in known]
        if missing:
            raise ConfigError(f"freeze policy names unknown parameters: {missing}")
        return set(self.names)


def apply_freeze(params: Mapping[str, Tensor], policy: FreezePolicy) -> List[str]:
    """Mark frozen parameters as not requiring grad; returns the trainable names in order."""
    frozen = policy.frozen(params.keys())
    trainable = []
    for name, p in params.items():
        if name in frozen:
            p.requires_grad = False
            p.grad = None
        else:
            if not p.requires_grad:
                p.requires_grad = True
                p.grad = np.zeros_like(p.data)
            trainable.append(name)
    return trainable


def is_new_module(name: str) -> bool:
    """Calculator-side parameters train at the new-module rate."""
    return name.startswith("calc.")
