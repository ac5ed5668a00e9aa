import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vidtext.errors import BatchError, ConfigError, DegenerateInputError
from vidtext.evaluation import (
    evaluate,
    mean_rank,
    median_rank,
    metrics_from_matrix,
    ranks_bruteforce,
    ranks_from_matrix,
    recall_at_k,
)


@pytest.mark.parametrize("direction", ["t2v", "v2t"])
def test_dominant_diagonal_all_rank_one(direction):
    S = 2 * np.eye(5) - 1
    np.testing.assert_array_equal(ranks_from_matrix(S, direction), np.ones(5))


@pytest.mark.parametrize("direction", ["t2v", "v2t"])
def test_smallest_diagonal_all_rank_b(direction):
    S = -np.eye(6)
    np.testing.assert_array_equal(ranks_from_matrix(S, direction), np.full(6, 6))


@pytest.mark.parametrize("direction", ["t2v", "v2t"])
def test_random_matrix_matches_sort_oracle(direction):
    S = np.random.default_rng(0).normal(size=(64, 64))
    np.testing.assert_array_equal(ranks_from_matrix(S, direction), ranks_bruteforce(S, direction))


def test_directions_read_columns_and_rows():
    # video 0 ranks text 1 above text 0; text 0 ranks video 0 first
    S = np.array([[0.5, 0.9], [0.1, 0.2]])
    np.testing.assert_array_equal(ranks_from_matrix(S, "v2t"), [2, 1])
    np.testing.assert_array_equal(ranks_from_matrix(S, "t2v"), [1, 2])


def test_ties_are_optimistic():
    S = np.zeros((3, 3))
    np.testing.assert_array_equal(ranks_from_matrix(S, "t2v"), [1, 1, 1])


def test_recall_examples():
    assert recall_at_k([1, 1, 1], 1) == 100.0
    assert recall_at_k([1, 2, 3, 4], 2) == 50.0
    with pytest.raises(ConfigError):
        recall_at_k([1], 0)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.integers(1, 50), min_size=1, max_size=40))
def test_recall_monotone_in_k(ranks):
    values = [recall_at_k(ranks, k) for k in range(1, 52)]
    assert values == sorted(values)
    assert values[-1] == 100.0


def test_median_and_mean_rank():
    assert (median_rank([1, 1, 1]), mean_rank([1, 1, 1])) == (1.0, 1.0)
    assert (median_rank([1, 2, 3, 10]), mean_rank([1, 2, 3, 10])) == (2.5, 4.0)
    assert (median_rank([7]), mean_rank([7])) == (7.0, 7.0)
    with pytest.raises(DegenerateInputError):
        median_rank([])


def test_batch_of_one_is_perfect():
    rep = metrics_from_matrix(np.array([[0.3]]))
    for d in ("t2v", "v2t"):
        assert rep[d].recall[1] == 100.0 and rep[d].MdR == 1.0 and rep[d].MnR == 1.0


def test_report_schema():
    rep = metrics_from_matrix(np.random.default_rng(1).normal(size=(4, 4)), ks=(1, 5))["t2v"].to_dict()
    assert set(rep) == {"direction", "R@1", "R@5", "MdR", "MnR", "B"}
    assert rep["B"] == 4


def test_matrix_validation():
    with pytest.raises(BatchError):
        ranks_from_matrix(np.zeros((2, 3)), "t2v")
    with pytest.raises(ConfigError):
        ranks_from_matrix(np.zeros((2, 2)), "x2y")


class _Stub:
    """Minimal model whose similarity is a fixed lookup, for the evaluate() plumbing."""

    def __init__(self, S):
        from vidtext.numerics import Tensor

        self.S, self.T = S, Tensor

    def encode_videos(self, clips):
        return list(clips)

    def encode_texts(self, caps):
        return self.T(np.array(caps, dtype=np.float64))

    def similarity(self, videos, W):
        idx = np.array(videos)
        return self.T(self.S[np.ix_(idx, W.data.astype(int))])


class _Item:
    def __init__(self, i):
        self.clip, self.caption = i, i


def test_evaluate_chunks_match_full_matrix():
    S = np.random.default_rng(2).normal(size=(7, 7))
    items = [_Item(i) for i in range(7)]
    rep, got = evaluate(_Stub(S), items, batch_size=3)
    np.testing.assert_array_equal(got, S)
    assert rep["t2v"].to_dict() == metrics_from_matrix(S)["t2v"].to_dict()
