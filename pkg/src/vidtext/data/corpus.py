"""Manifest format and in-memory corpus.

A manifest is UTF-8 JSON::

    {"version": 1,
     "items": [{"id": str, "video": <relative path to a T4CL tensor>,
                "caption": [int token ids], "total_frames": int, "fps": float,
                ...optional extras}],
     ...optional metadata}

Video tensors are [total_frames, C, H, W].
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List

import numpy as np

from ..encoders import Caption, VideoClip
from ..errors import ConfigError, FormatError
from .sampling import SamplingConfig, VideoMeta, sample_frames
from .tensorio import read_tensor_file

MANIFEST_VERSION = 1


@dataclass
class CorpusItem:
    id: str
    clip: VideoClip
    caption: Caption
    meta: VideoMeta


def read_manifest(path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest is not valid JSON: {exc.msg}", offset=exc.pos, path=str(path)) from None
    if not isinstance(doc, dict) or doc.get("version") != MANIFEST_VERSION:
        raise FormatError(f"manifest version must be {MANIFEST_VERSION}", path=str(path))
    items = doc.get("items")
    if not isinstance(items, list) or not items:
        raise FormatError("manifest has no items", path=str(path))
    seen = set()
    for it in items:
        for key in ("id", "video", "caption"):
            if key not in it:
                raise FormatError(f"manifest item missing {key!r}", path=str(path))
        if it["id"] in seen:
            raise FormatError(f"duplicate item id {it['id']!r}", path=str(path))
        seen.add(it["id"])
    return doc


def write_manifest(path, doc: dict) -> None:
    text = json.dumps(doc, indent=2, sort_keys=True) + "\n"
    Path(path).write_text(text, encoding="utf-8")


def load_corpus(manifest_path, sampling: SamplingConfig) -> List[CorpusItem]:
    """Read every item and apply frame sampling."""
    manifest_path = Path(manifest_path)
    doc = read_manifest(manifest_path)
    root = manifest_path.parent
    out = []
    for it in doc["items"]:
        video_path = root / it["video"]
        if not video_path.exists():
            raise FileNotFoundError(f"video tensor {video_path} listed in {manifest_path} does not exist")
        frames = read_tensor_file(video_path)
        if frames.ndim != 4:
            raise FormatError(f"video tensor must be [T, C, H, W], got {frames.shape}", path=str(video_path))
        meta = VideoMeta(id=str(it["id"]), total_frames=int(it.get("total_frames", frames.shape[0])),
                         fps=float(it.get("fps", 1.0)), path=os.fspath(video_path))
        if meta.total_frames != frames.shape[0]:
            raise FormatError(f"item {meta.id!r}: total_frames {meta.total_frames} but tensor has "
                              f"{frames.shape[0]}", path=str(video_path))
        idx = sample_frames(meta, sampling)
        out.append(CorpusItem(id=meta.id, clip=VideoClip(frames[idx]),
                              caption=Caption([int(t) for t in it["caption"]]), meta=meta))
    if len(out) < 1:
        raise ConfigError("empty corpus")
    return out
