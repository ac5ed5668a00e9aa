"""Retrieval ranks and metrics (R@K, median rank, mean rank).

Ranks are 1-based and optimistic under ties: the rank of the ground truth
is one plus the number of candidates scoring strictly higher.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .errors import BatchError, ConfigError, DegenerateInputError, NumericError
from .numerics import no_grad
from .numerics.tensor import concat

DIRECTIONS = ("t2v", "v2t")
DEFAULT_KS = (1, 5, 10)


def _check_matrix(S) -> np.ndarray:
    S = np.asarray(getattr(S, "data", S), dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] < 1:
        raise BatchError(f"similarity matrix must be square and non-empty, got {S.shape}")
    if np.isnan(S).any():
        raise NumericError("similarity matrix contains NaN")
    return S


def _check_direction(direction: str):
    if direction not in DIRECTIONS:
        raise ConfigError(f"direction must be one of {DIRECTIONS}, got {direction!r}")


def ranks_from_matrix(S, direction: str) -> np.ndarray:
    """``S[i, j]`` scores video i against text j.

    t2v ranks the diagonal within each column, v2t within each row.
    """
    S = _check_matrix(S)
    _check_direction(direction)
    diag = np.diag(S)
    if direction == "t2v":
        greater = (S > diag[None, :]).sum(axis=0)
    else:
        greater = (S > diag[:, None]).sum(axis=1)
    return greater.astype(np.int64) + 1


def ranks_bruteforce(S, direction: str) -> np.ndarray:
    """Reference ranks by sorting every query's candidate list."""
    S = _check_matrix(S)
    _check_direction(direction)
    M = S.T if direction == "t2v" else S  # row q = candidates for query q
    ranks = []
    for q in range(M.shape[0]):
        scores = sorted(M[q].tolist(), reverse=True)
        ranks.append(scores.index(M[q, q]) + 1)
    return np.array(ranks, dtype=np.int64)


def _check_ranks(ranks) -> np.ndarray:
    ranks = np.asarray(ranks)
    if ranks.size == 0:
        raise DegenerateInputError("no ranks")
    return ranks


def recall_at_k(ranks, k: int) -> float:
    if k < 1:
        raise ConfigError("K must be >= 1")
    ranks = _check_ranks(ranks)
    return 100.0 * float(np.count_nonzero(ranks <= k)) / ranks.size


def median_rank(ranks) -> float:
    ranks = np.sort(_check_ranks(ranks).astype(np.float64))
    n = ranks.size
    mid = n // 2
    return float(ranks[mid]) if n % 2 else float((ranks[mid - 1] + ranks[mid]) / 2.0)


def mean_rank(ranks) -> float:
    ranks = _check_ranks(ranks)
    return float(ranks.astype(np.float64).sum() / ranks.size)


@dataclass
class MetricsReport:
    direction: str
    recall: Dict[int, float]
    MdR: float
    MnR: float
    B: int

    def to_dict(self, decimals: int = 4) -> dict:
        out = {"direction": self.direction}
        for k, v in sorted(self.recall.items()):
            out[f"R@{k}"] = round(v, decimals)
        out["MdR"] = round(self.MdR, decimals)
        out["MnR"] = round(self.MnR, decimals)
        out["B"] = self.B
        return out


def metrics_from_ranks(ranks, direction: str, ks: Iterable[int] = DEFAULT_KS) -> MetricsReport:
    ranks = _check_ranks(ranks)
    return MetricsReport(direction=direction, recall={k: recall_at_k(ranks, k) for k in ks},
                         MdR=median_rank(ranks), MnR=mean_rank(ranks), B=int(ranks.size))


def metrics_from_matrix(S, directions: Sequence[str] = DIRECTIONS, ks: Iterable[int] = DEFAULT_KS,
                        oracle: bool = False) -> Dict[str, MetricsReport]:
    rank_fn = ranks_bruteforce if oracle else ranks_from_matrix
    return {d: metrics_from_ranks(rank_fn(S, d), d, ks) for d in directions}


def score_corpus(model, items: Sequence, batch_size: Optional[int] = None) -> np.ndarray:
    """Full similarity matrix over a corpus, encoding in chunks of ``batch_size``."""
    n = len(items)
    if n < 1:
        raise BatchError("empty corpus")
    step = batch_size or n
    with no_grad():
        videos: List = []
        texts = []
        for s in range(0, n, step):
            chunk = items[s:s + step]
            videos.extend(model.encode_videos([it.clip for it in chunk]))
            texts.append(model.encode_texts([it.caption for it in chunk]))
        W = texts[0] if len(texts) == 1 else concat(texts, axis=0)
        S = model.similarity(videos, W)
    return np.array(S.data, dtype=np.float64)


def evaluate(model, items: Sequence, directions: Sequence[str] = DIRECTIONS, ks: Iterable[int] = DEFAULT_KS,
             batch_size: Optional[int] = None) -> Tuple[Dict[str, MetricsReport], np.ndarray]:
    for d in directions:
        _check_direction(d)
    S = score_corpus(model, items, batch_size)
    return metrics_from_matrix(S, directions, ks), S
