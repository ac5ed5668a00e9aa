from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import List

from ..errors import ConfigError, DegenerateInputError

STRATEGIES = ("head", "tail", "uniform")


@dataclass(frozen=True)
class VideoMeta:
    id: str
    total_frames: int
    fps: float
    path: str = ""

    def __post_init__(self):
        if self.total_frames < 1:
            raise DegenerateInputError(f"video {self.id!r} has no frames")
        if not self.fps > 0:
            raise ConfigError(f"video {self.id!r} has non-positive fps")


@dataclass(frozen=True)
class SamplingConfig:
    strategy: str = "uniform"
    rate_fps: float = 1.0
    max_frames: int = 12

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown sampling strategy {self.strategy!r}")
        if not self.rate_fps > 0:
            raise ConfigError("rate_fps must be positive")
        if self.max_frames < 1:
            raise ConfigError("max_frames must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def candidate_frames(meta: VideoMeta, rate_fps: float) -> List[int]:
    """Frame indices seen when resampling the video at ``rate_fps``."""
    duration = meta.total_frames / meta.fps
    n = max(1, math.floor(duration * rate_fps + 1e-9))
    step = meta.fps / rate_fps
    idx = [min(meta.total_frames - 1, int(math.floor(k * step + 1e-9))) for k in range(n)]
    # a rate above the native fps would repeat frames; keep each source frame once
    out = []
    for i in idx:
        if not out or i > out[-1]:
            out.append(i)
    return out


def select_indices(n: int, m: int, strategy: str) -> List[int]:
    """Pick at most ``m`` of ``n`` ordered candidates."""
    if n < 1:
        raise DegenerateInputError("no candidate frames")
    if m < 1:
        raise ConfigError("max_frames must be >= 1")
    if n <= m:
        return list(range(n))
    if strategy == "head":
        return list(range(m))
    if strategy == "tail":
        return list(range(n - m, n))
    if strategy == "uniform":
        if m == 1:
            return [0]
        # round half up so the index set is symmetric about the midpoint
        return [int(math.floor(k * (n - 1) / (m - 1) + 0.5)) for k in range(m)]
    raise ConfigError(f"unknown sampling strategy {strategy!r}")


def sample_frames(meta: VideoMeta, cfg: SamplingConfig) -> List[int]:
    """Source-frame indices for one clip: resample at the configured rate, then truncate."""
    cands = candidate_frames(meta, cfg.rate_fps)
    if not cands:
        raise DegenerateInputError(f"video {meta.id!r} yields no candidate frames")
    return [cands[k] for k in select_indices(len(cands), cfg.max_frames, cfg.strategy)]
