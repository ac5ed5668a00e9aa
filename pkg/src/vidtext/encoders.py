"""Video and text towers.

The video tower embeds each frame's patches (2D projection, or a temporal
3D projection across neighbouring frames), prepends a learned class token,
runs a pre-norm transformer per frame and keeps the class output. The text
tower runs a causal transformer over byte tokens and keeps the activation
at the end-of-sequence token.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, DimensionError, MalformedCaptionError
from .numerics import (
    Tensor,
    broadcast_to,
    concat,
    conv3d,
    gelu,
    layer_norm,
    linear,
    multi_head_attention,
    unfold_patches,
)
from .numerics.tensor import contiguous, matmul

PAD_ID = 0
SOS_ID = 1
EOS_ID = 2

Params = Dict[str, Tensor]


@dataclass(frozen=True)
class EncoderConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    mlp_ratio: int = 4
    patch: tuple = (4, 4)
    image_size: tuple = (16, 16)
    channels: int = 3
    temporal_kernel: int = 3
    projection_mode: str = "2d"
    max_frames: int = 12
    max_tokens: int = 16
    vocab_size: int = 256
    embed_dim: Optional[int] = None
    ln_eps: float = 1e-5

    def __post_init__(self):
        object.__setattr__(self, "patch", tuple(self.patch))
        object.__setattr__(self, "image_size", tuple(self.image_size))
        object.__setattr__(self, "projection_mode", str(self.projection_mode).lower())
        self.validate()

    @property
    def width(self) -> int:
        """Width of the shared multimodal embedding space."""
        return self.embed_dim if self.embed_dim is not None else self.d_model

    @property
    def n_patches(self) -> int:
        return (self.image_size[0] // self.patch[0]) * (self.image_size[1] // self.patch[1])

    def validate(self):
        if self.d_model < 1 or self.n_layers < 0 or self.n_heads < 1:
            raise ConfigError("d_model and n_heads must be positive, n_layers non-negative")
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model {self.d_model} not divisible by n_heads {self.n_heads}")
        if self.temporal_kernel < 1 or self.temporal_kernel % 2 == 0:
            raise ConfigError(f"temporal kernel must be odd, got {self.temporal_kernel}")
        if self.projection_mode not in ("2d", "3d"):
            raise ConfigError(f"projection_mode must be '2d' or '3d', got {self.projection_mode!r}")
        if self.max_frames < 1:
            raise ConfigError("max_frames must be >= 1")
        if self.max_tokens < 2:
            raise ConfigError("max_tokens must be >= 2 to hold [SOS] and [EOS]")
        if self.vocab_size <= EOS_ID:
            raise ConfigError("vocab_size must leave room for the reserved ids")
        if len(self.patch) != 2 or len(self.image_size) != 2:
            raise ConfigError("patch and image_size are (height, width) pairs")
        if self.image_size[0] % self.patch[0] or self.image_size[1] % self.patch[1]:
            raise ConfigError(f"image {self.image_size} not divisible by patch {self.patch}")
        if self.embed_dim is not None and self.embed_dim < 1:
            raise ConfigError("embed_dim must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["patch"] = list(self.patch)
        d["image_size"] = list(self.image_size)
        return d


@dataclass
class VideoClip:
    frames: np.ndarray  # [n_frames, C, H, W]

    def __post_init__(self):
        self.frames = np.asarray(self.frames)
        if self.frames.ndim != 4:
            raise DimensionError(f"clip frames must be [T, C, H, W], got {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise DimensionError("clip has no frames")

    @property
    def frame_count(self) -> int:
        return int(self.frames.shape[0])


@dataclass
class Caption:
    tokens: List[int]
    length: int = field(default=-1)

    def __post_init__(self):
        self.tokens = [int(t) for t in self.tokens]
        if self.length < 0:
            self.length = len(self.tokens)

    @classmethod
    def from_text(cls, text: str, max_tokens: int) -> "Caption":
        """Byte-level tokenization: ids are the UTF-8 bytes, wrapped in [SOS]/[EOS]."""
        body = list(text.encode("utf-8"))
        if any(b <= EOS_ID for b in body):
            raise MalformedCaptionError("caption text contains reserved byte values")
        if len(body) + 2 > max_tokens:
            raise MalformedCaptionError(f"caption needs {len(body) + 2} tokens, max is {max_tokens}")
        return cls([SOS_ID] + body + [EOS_ID])

    def text(self) -> str:
        return bytes(t for t in self.tokens[1:self.eos_index()]).decode("utf-8", errors="replace")

    def eos_index(self) -> int:
        try:
            return self.tokens.index(EOS_ID)
        except ValueError:
            raise MalformedCaptionError("caption has no [EOS] token") from None

    def validate(self, cfg: EncoderConfig):
        if not self.tokens or self.tokens[0] != SOS_ID:
            raise MalformedCaptionError("caption must start with [SOS]")
        eos = self.eos_index()
        if self.length < 2 or self.length > len(self.tokens) or self.tokens[self.length - 1] != EOS_ID:
            raise MalformedCaptionError("caption length must end on the [EOS] token")
        if eos + 1 > cfg.max_tokens or len(self.tokens) > cfg.max_tokens:
            raise MalformedCaptionError(f"caption longer than max_tokens={cfg.max_tokens}")
        if max(self.tokens) >= cfg.vocab_size or min(self.tokens) < 0:
            raise MalformedCaptionError("token id outside the vocabulary")


# -- parameter initialisation -------------------------------------------------

def init_block_params(prefix: str, d: int, mlp_ratio: int, rng: np.random.Generator, dtype) -> Params:
    hidden = d * mlp_ratio

    def normal(*shape):
        # unit-gain projections; at toy widths a fixed small std starves the residual branch
        return Tensor(rng.normal(0.0, shape[0] ** -0.5, size=shape).astype(dtype), requires_grad=True)

    def const(value, *shape):
        return Tensor(np.full(shape, value, dtype=dtype), requires_grad=True)

    p = {}
    p[f"{prefix}.ln1.gamma"] = const(1.0, d)
    p[f"{prefix}.ln1.beta"] = const(0.0, d)
    for proj in ("q", "k", "v", "o"):
        p[f"{prefix}.attn.{proj}.weight"] = normal(d, d)
        p[f"{prefix}.attn.{proj}.bias"] = const(0.0, d)
    p[f"{prefix}.ln2.gamma"] = const(1.0, d)
    p[f"{prefix}.ln2.beta"] = const(0.0, d)
    p[f"{prefix}.mlp.fc1.weight"] = normal(d, hidden)
    p[f"{prefix}.mlp.fc1.bias"] = const(0.0, hidden)
    p[f"{prefix}.mlp.fc2.weight"] = normal(hidden, d)
    p[f"{prefix}.mlp.fc2.bias"] = const(0.0, d)
    return p


def central_frame_init(E2d, t: int) -> np.ndarray:
    """Inflate a [d, C, h, w] patch kernel to [d, C, t, h, w] as [0, ..., E2d, ..., 0]."""
    if t < 1 or t % 2 == 0:
        raise ConfigError(f"central frame init needs an odd temporal size, got {t}")
    E2d = E2d.data if isinstance(E2d, Tensor) else np.asarray(E2d)
    if E2d.ndim != 4:
        raise DimensionError(f"2D patch kernel must be [d, C, h, w], got {E2d.shape}")
    d, C, h, w = E2d.shape
    out = np.zeros((d, C, t, h, w), dtype=E2d.dtype)
    out[:, :, t // 2] = E2d
    return out


def init_encoder_params(cfg: EncoderConfig, rng: np.random.Generator, dtype=np.float32) -> Params:
    """Random weights for both towers.

    The video projection is always drawn as a 2D kernel; in 3D mode it is
    inflated with :func:`central_frame_init`, so the same seed gives the
    same towers in either mode.
    """
    d, e = cfg.d_model, cfg.width
    ph, pw = cfg.patch
    fan_in = cfg.channels * ph * pw
    p: Params = {}

    def leaf(arr):
        return Tensor(np.ascontiguousarray(arr, dtype=dtype), requires_grad=True)

    E2d = rng.normal(0.0, fan_in ** -0.5, size=(d, cfg.channels, ph, pw))
    if cfg.projection_mode == "3d":
        p["video.patch.weight"] = leaf(central_frame_init(E2d, cfg.temporal_kernel))
    else:
        p["video.patch.weight"] = leaf(E2d)
    p["video.cls"] = leaf(rng.normal(0.0, 0.02, size=(d,)))
    p["video.pos"] = leaf(rng.normal(0.0, 0.02, size=(cfg.n_patches + 1, d)))
    for i in range(cfg.n_layers):
        p.update(init_block_params(f"video.layers.{i}", d, cfg.mlp_ratio, rng, dtype))
    p["video.ln_post.gamma"] = leaf(np.ones(d))
    p["video.ln_post.beta"] = leaf(np.zeros(d))
    p["video.proj"] = leaf(rng.normal(0.0, d ** -0.5, size=(d, e)))

    p["text.tok_emb"] = leaf(rng.normal(0.0, 0.02, size=(cfg.vocab_size, d)))
    p["text.pos"] = leaf(rng.normal(0.0, 0.01, size=(cfg.max_tokens, d)))
    for i in range(cfg.n_layers):
        p.update(init_block_params(f"text.layers.{i}", d, cfg.mlp_ratio, rng, dtype))
    p["text.ln_final.gamma"] = leaf(np.ones(d))
    p["text.ln_final.beta"] = leaf(np.zeros(d))
    p["text.proj"] = leaf(rng.normal(0.0, d ** -0.5, size=(d, e)))
    return p


# -- shared transformer ---------------------------------------------------------

def block_weights(params: Mapping[str, Tensor], prefix: str) -> Dict[str, Tensor]:
    cut = len(prefix) + 1
    return {k[cut:]: v for k, v in params.items() if k.startswith(prefix + ".")}


def transformer_block(x: Tensor, w: Mapping[str, Tensor], n_heads: int,
                      mask: Optional[np.ndarray] = None, eps: float = 1e-5) -> Tensor:
    """Pre-norm residual block: x + attn(ln(x)), then x + mlp(ln(x))."""
    h = layer_norm(x, w["ln1.gamma"], w["ln1.beta"], eps)
    attn_w = {k[5:]: v for k, v in w.items() if k.startswith("attn.")}
    x = x + multi_head_attention(h, h, h, attn_w, n_heads, mask=mask)
    h = layer_norm(x, w["ln2.gamma"], w["ln2.beta"], eps)
    h = linear(gelu(linear(h, w["mlp.fc1.weight"], w["mlp.fc1.bias"])), w["mlp.fc2.weight"], w["mlp.fc2.bias"])
    return x + h


def run_blocks(x: Tensor, params: Mapping[str, Tensor], prefix: str, n_layers: int, n_heads: int,
               mask: Optional[np.ndarray] = None, eps: float = 1e-5) -> Tensor:
    for i in range(n_layers):
        x = transformer_block(x, block_weights(params, f"{prefix}.{i}"), n_heads, mask, eps)
    return x


def causal_mask(L: int) -> np.ndarray:
    return np.tril(np.ones((L, L), dtype=bool))


# -- video tower ----------------------------------------------------------------

def _frames_tensor(clip, dtype) -> Tensor:
    frames = clip.frames if isinstance(clip, VideoClip) else np.asarray(clip)
    return Tensor(np.asarray(frames, dtype=dtype))


def patch_embed_2d(frames, E2d: Tensor) -> Tensor:
    """[..., T, C, H, W] -> [..., T, n_patches, d]; every frame projected on its own."""
    frames = frames if isinstance(frames, Tensor) else _frames_tensor(frames, E2d.dtype)
    d, C, h, w = E2d.shape
    if frames.shape[-3] != C:
        raise DimensionError(f"frames have {frames.shape[-3]} channels, kernel expects {C}")
    patches = unfold_patches(frames, (h, w))
    # same [C*h*w, d] layout conv3d builds for each kernel slice, so a central-frame
    # kernel reproduces this projection bit for bit
    return matmul(patches, contiguous(E2d.transpose(1, 2, 3, 0).reshape(C * h * w, d)))


def patch_embed_3d(frames, E3d: Tensor) -> Tensor:
    """Temporal patch embedding, stride 1 and length-preserving zero padding."""
    frames = frames if isinstance(frames, Tensor) else _frames_tensor(frames, E3d.dtype)
    t = E3d.shape[2]
    return conv3d(frames, E3d, temporal_stride=1, temporal_padding=(t - 1) // 2)


def _check_clip(clip: VideoClip, cfg: EncoderConfig):
    T, C, H, W = clip.frames.shape
    if T > cfg.max_frames:
        raise ConfigError(f"clip has {T} frames, max_frames is {cfg.max_frames}")
    if C != cfg.channels or (H, W) != tuple(cfg.image_size):
        raise DimensionError(f"clip frames {C}x{H}x{W} do not match config "
                             f"{cfg.channels}x{cfg.image_size[0]}x{cfg.image_size[1]}")


def encode_clips(clips: Sequence[VideoClip], params: Mapping[str, Tensor], cfg: EncoderConfig) -> List[Tensor]:
    """Encode several clips at once; returns one [n_frames, width] tensor per clip."""
    if not clips:
        return []
    for c in clips:
        _check_clip(c, cfg)
    E = params["video.patch.weight"]
    dtype = E.dtype
    if E.ndim == 5:
        tokens = concat([patch_embed_3d(_frames_tensor(c, dtype), E) for c in clips], axis=0)
    else:
        frames = Tensor(np.concatenate([np.asarray(c.frames, dtype=dtype) for c in clips], axis=0))
        tokens = patch_embed_2d(frames, E)
    N, P, d = tokens.shape
    cls = broadcast_to(params["video.cls"].reshape(1, 1, d), (N, 1, d))
    x = concat([cls, tokens], axis=1) + params["video.pos"]
    x = run_blocks(x, params, "video.layers", cfg.n_layers, cfg.n_heads, eps=cfg.ln_eps)
    x = layer_norm(x[:, 0, :], params["video.ln_post.gamma"], params["video.ln_post.beta"], cfg.ln_eps)
    Z = matmul(x, params["video.proj"])
    out, start = [], 0
    for c in clips:
        out.append(Z[start:start + c.frame_count])
        start += c.frame_count
    return out


def encode_frames(clip: VideoClip, params: Mapping[str, Tensor], cfg: EncoderConfig) -> Tensor:
    return encode_clips([clip], params, cfg)[0]


# -- text tower -----------------------------------------------------------------

def encode_captions(captions: Sequence[Caption], params: Mapping[str, Tensor], cfg: EncoderConfig) -> Tensor:
    """Encode a batch of captions -> [B, width]."""
    if not captions:
        raise DimensionError("no captions to encode")
    for c in captions:
        c.validate(cfg)
    L = max(len(c.tokens) for c in captions)
    ids = np.full((len(captions), L), PAD_ID, dtype=np.int64)
    for i, c in enumerate(captions):
        ids[i, :len(c.tokens)] = c.tokens
    eos = np.array([c.eos_index() for c in captions])
    x = params["text.tok_emb"][ids] + params["text.pos"][:L]
    x = run_blocks(x, params, "text.layers", cfg.n_layers, cfg.n_heads, mask=causal_mask(L), eps=cfg.ln_eps)
    x = layer_norm(x, params["text.ln_final.gamma"], params["text.ln_final.beta"], cfg.ln_eps)
    x = x[np.arange(len(captions)), eos]
    return matmul(x, params["text.proj"])


def encode_text(caption: Caption, params: Mapping[str, Tensor], cfg: EncoderConfig) -> Tensor:
    return encode_captions([caption], params, cfg)[0]
