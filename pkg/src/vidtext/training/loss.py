from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import BatchError, ConfigError
from ..numerics import Tensor, log_softmax
from ..numerics.tensor import as_tensor


@dataclass
class LossBreakdown:
    L_v2t: Tensor
    L_t2v: Tensor
    L: Tensor

    def floats(self) -> dict:
        return {"L_v2t": self.L_v2t.item(), "L_t2v": self.L_t2v.item(), "L": self.L.item()}


def symmetric_ce_loss(S: Tensor, scale=1.0) -> LossBreakdown:
    """In-batch contrastive loss: row-wise (video->text) plus column-wise (text->video) CE.

    ``scale`` may be a float or a 0/1-element tensor (a learnable multiplier).
    """
    S = as_tensor(S)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] < 1:
        raise BatchError(f"similarity matrix must be square and non-empty, got {S.shape}")
    if isinstance(scale, Tensor):
        if not (scale.data > 0).all():
            raise ConfigError("scale must be positive")
        logits = S * scale.reshape(())
    else:
        if not scale > 0:
            raise ConfigError("scale must be positive")
        logits = S if scale == 1.0 else S * float(scale)
    B = S.shape[0]
    diag = (np.arange(B), np.arange(B))
    v2t = -(log_softmax(logits, axis=1)[diag].mean())
    t2v = -(log_softmax(logits, axis=0)[diag].mean())
    return LossBreakdown(L_v2t=v2t, L_t2v=t2v, L=v2t + t2v)
