"""Initial weights for the calculator heads, reused from the encoder towers where possible."""

from __future__ import annotations

from typing import Dict, Mapping

import numpy as np

from ..encoders import EncoderConfig, init_block_params
from ..errors import ConfigError
from ..numerics import Tensor
from ..similarity import FUSION_PREFIX, CalculatorConfig, CalculatorKind


def repeat_rows(table: np.ndarray, n: int) -> np.ndarray:
    """Cycle the rows of ``table`` until there are ``n`` of them."""
    idx = np.arange(n) % table.shape[0]
    return table[idx].copy()


def init_calculator(encoder_params: Mapping[str, Tensor], calc_cfg: CalculatorConfig,
                    enc_cfg: EncoderConfig, rng: np.random.Generator, dtype=np.float32) -> Dict[str, Tensor]:
    """Parameters for ``calc_cfg.kind``.

    Position tables repeat the text tower's position embedding; fusion
    layer ``i`` copies video layer ``i`` (layers past the video depth are
    drawn fresh); the LSTM and the scoring head are random.
    """
    kind = calc_cfg.kind
    width = enc_cfg.width
    out: Dict[str, Tensor] = {}

    def leaf(arr):
        return Tensor(np.ascontiguousarray(arr, dtype=dtype), requires_grad=True)

    if calc_cfg.learnable_scale:
        out["calc.logit_scale"] = leaf(np.array([np.log(calc_cfg.scale)]))
    if kind is CalculatorKind.meanP:
        return out

    if kind is CalculatorKind.seqLSTM:
        bound = width ** -0.5
        out["calc.lstm.w_ih"] = leaf(rng.uniform(-bound, bound, size=(width, 4 * width)))
        out["calc.lstm.w_hh"] = leaf(rng.uniform(-bound, bound, size=(width, 4 * width)))
        out["calc.lstm.b"] = leaf(rng.uniform(-bound, bound, size=(4 * width,)))
        return out

    text_pos = encoder_params["text.pos"].data
    if text_pos.shape[1] != width:
        raise ConfigError(f"text position width {text_pos.shape[1]} != embedding width {width}")
    n_pos = enc_cfg.max_frames + (1 if kind is CalculatorKind.tightTransf else 0)
    out["calc.pos"] = leaf(repeat_rows(text_pos, n_pos))

    if enc_cfg.d_model != width and calc_cfg.fusion_layers > 0 and enc_cfg.n_layers > 0:
        raise ConfigError(f"cannot copy video layers of width {enc_cfg.d_model} into a fusion "
                          f"encoder of width {width}")
    for i in range(calc_cfg.fusion_layers):
        if i < enc_cfg.n_layers:
            cut = len(f"video.layers.{i}")
            for name, t in encoder_params.items():
                if name.startswith(f"video.layers.{i}."):
                    out[f"{FUSION_PREFIX}.{i}{name[cut:]}"] = leaf(t.data.copy())
        else:
            out.update(init_block_params(f"{FUSION_PREFIX}.{i}", width, enc_cfg.mlp_ratio, rng, dtype))

    if kind is CalculatorKind.tightTransf:
        out["calc.type"] = leaf(rng.normal(0.0, 0.02, size=(2, width)))
        out["calc.head.fc1.weight"] = leaf(rng.normal(0.0, width ** -0.5, size=(width, width)))
        out["calc.head.fc1.bias"] = leaf(np.zeros(width))
        out["calc.head.fc2.weight"] = leaf(rng.normal(0.0, width ** -0.5, size=(width, 1)))
        out["calc.head.fc2.bias"] = leaf(np.zeros(1))
    return out
