"""Deterministic paired corpus where every caption names its video's class.

Each class owns a blocky random texture drifting in a class-specific
direction; frames add seeded Gaussian noise. Captions are three short
words derived from the class id, so different classes always get
different captions.
"""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Tuple

import numpy as np

from ..encoders import Caption
from ..errors import ConfigError
from .corpus import MANIFEST_VERSION, write_manifest
from .tensorio import write_tensor_file

COLORS = ("red", "blu", "grn", "yel", "blk", "wht", "orn", "pur")
SHAPES = ("box", "dot", "bar", "arc", "net", "cup", "rod", "web")
MOTIONS = ("up", "dn", "lt", "rt")
_SHIFTS = {"up": (-1, 0), "dn": (1, 0), "lt": (0, -1), "rt": (0, 1)}
MAX_CLASSES = len(COLORS) * len(SHAPES) * len(MOTIONS)


def class_words(k: int) -> Tuple[str, str, str]:
    return (COLORS[k % len(COLORS)],
            SHAPES[(k // len(COLORS)) % len(SHAPES)],
            MOTIONS[(k // (len(COLORS) * len(SHAPES))) % len(MOTIONS)])


def class_caption(k: int, max_tokens: int) -> Caption:
    return Caption.from_text(" ".join(class_words(k)), max_tokens)


def class_texture(rng: np.random.Generator, channels: int, height: int, width: int, cell: int = 4) -> np.ndarray:
    gh, gw = max(1, height // cell), max(1, width // cell)
    coarse = rng.normal(0.0, 1.0, size=(channels, gh, gw))
    tex = np.kron(coarse, np.ones((1, cell, cell)))
    return tex[:, :height, :width]


def render_clip(texture: np.ndarray, motion: str, n_frames: int, noise: float,
                rng: np.random.Generator) -> np.ndarray:
    dy, dx = _SHIFTS[motion]
    frames = np.stack([np.roll(texture, (t * dy, t * dx), axis=(1, 2)) for t in range(n_frames)])
    return (frames + rng.normal(0.0, noise, size=frames.shape)).astype(np.float32)


def centroid_oracle_r1(videos: np.ndarray, labels: np.ndarray) -> float:
    """Recall@1 (percent) of a nearest-centroid classifier on raw frame means.

    Centroids come from the first half of each clip's frames, queries from
    the second half, so the check is not a lookup of the query itself.
    """
    T = videos.shape[1]
    half = max(1, T // 2)
    first = videos[:, :half].mean(axis=1).reshape(len(videos), -1)
    second = videos[:, T - half:].mean(axis=1).reshape(len(videos), -1)
    classes = np.unique(labels)
    centroids = np.stack([first[labels == c].mean(axis=0) for c in classes])
    d2 = ((second[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=-1)
    pred = classes[np.argmin(d2, axis=1)]
    return float(100.0 * np.mean(pred == labels))


def generate_synthetic_corpus(out_dir, seed: int = 17, n_items: int = 32, frames_per_item: int = 12,
                              image_dims: Tuple[int, int, int] = (3, 16, 16), caption_len: int = 16,
                              n_classes: Optional[int] = None, noise: float = 0.1, fps: float = 1.0) -> Path:
    """Write ``n_items`` clips plus ``manifest.json`` under ``out_dir``; returns the manifest path."""
    if n_items < 2:
        raise ConfigError("a retrieval corpus needs at least 2 items")
    if frames_per_item < 1:
        raise ConfigError("frames_per_item must be >= 1")
    n_classes = n_items if n_classes is None else n_classes
    if not 1 <= n_classes <= min(n_items, MAX_CLASSES):
        raise ConfigError(f"n_classes must be in [1, {min(n_items, MAX_CLASSES)}]")
    C, H, W = image_dims
    out_dir = Path(out_dir)
    (out_dir / "videos").mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(seed)
    textures = [class_texture(rng, C, H, W) for _ in range(n_classes)]
    labels = np.arange(n_items) % n_classes
    videos = np.empty((n_items, frames_per_item, C, H, W), dtype=np.float32)
    items = []
    for i in range(n_items):
        k = int(labels[i])
        videos[i] = render_clip(textures[k], class_words(k)[2], frames_per_item, noise, rng)
        cap = class_caption(k, caption_len)
        vid = f"vid{i:04d}"
        rel = f"videos/{vid}.t4cl"
        write_tensor_file(out_dir / rel, videos[i])
        items.append({"id": vid, "video": rel, "caption": cap.tokens, "text": cap.text(),
                      "class": k, "total_frames": frames_per_item, "fps": fps})

    doc = {
        "version": MANIFEST_VERSION,
        "generator": {"seed": seed, "n_items": n_items, "frames_per_item": frames_per_item,
                      "image_dims": [C, H, W], "caption_len": caption_len, "n_classes": n_classes,
                      "noise": noise, "fps": fps},
        "oracle": {"centroid_r1": centroid_oracle_r1(videos, labels), "chance_r1": 100.0 / n_classes},
        "items": items,
    }
    path = out_dir / "manifest.json"
    write_manifest(path, doc)
    return path
