from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tripletrec.embeddings import EmbeddingTable, random_table
from tripletrec.recommender import inverse_rank_draw, rank_items, recommend, recommend_all

from .conftest import make_store


def _table(items, user=(1.0, 0.0)):
    return EmbeddingTable(np.array([user]), np.array(items, dtype=float))


def test_identical_vector_ranks_first():
    tracks, dist = rank_items(_table([[0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]), 0)
    assert tracks[0] == 1
    assert dist[0] == pytest.approx(0.0, abs=1e-12)
    assert np.all(np.diff(dist) >= 0)


def test_tie_goes_to_lower_ordinal():
    tracks, _ = rank_items(_table([[0.0, 1.0], [1.0, 1.0], [1.0, 1.0]]), 0)
    assert tracks.tolist() == [1, 2, 0]


def test_exclusion():
    tracks, _ = rank_items(_table([[1.0, 0.0], [1.0, 0.1], [0.0, 1.0]]), 0, exclude=[0, 2])
    assert tracks.tolist() == [1]


def test_pool_equal_to_k_gives_top_set():
    table = random_table(1, 50, 4, np.random.default_rng(0))
    top, _ = rank_items(table, 0)
    rec = recommend(table, 0, k=7, candidate_pool=7, rng=3)
    assert set(rec.tracks.tolist()) == set(top[:7].tolist())


def test_rank_one_frequency_two_thirds():
    table = _table([[1.0, 0.0], [1.0, 0.5]])
    rng = np.random.default_rng(2024)
    first = sum(recommend(table, 0, k=1, candidate_pool=2, rng=rng).tracks[0] == 0 for _ in range(10_000))
    assert abs(first / 10_000 - 2 / 3) <= 0.02


def test_fixed_seed_repeatable():
    table = random_table(2, 300, 4, np.random.default_rng(0))
    a = recommend(table, 1, k=20, candidate_pool=100, rng=9)
    b = recommend(table, 1, k=20, candidate_pool=100, rng=9)
    np.testing.assert_array_equal(a.tracks, b.tracks)
    assert a.seed == 9


def test_errors():
    table = random_table(1, 5, 4, np.random.default_rng(0))
    with pytest.raises(ValueError):
        recommend(table, 0, k=0)
    with pytest.raises(ValueError):
        recommend(table, 0, k=5, candidate_pool=4)
    with pytest.raises(ValueError):
        recommend(table, 0, k=4, candidate_pool=10, exclude=[0, 1])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 15), st.integers(0, 15))
def test_list_invariants(seed, k, extra):
    table = random_table(1, 60, 4, np.random.default_rng(seed))
    history = np.random.default_rng(seed + 1).choice(60, size=10, replace=False)
    pool = k + extra
    rec = recommend(table, 0, k, pool, rng=seed, exclude=history)
    ranked, _ = rank_items(table, 0, exclude=history)
    assert len(rec) == k
    assert len(set(rec.tracks.tolist())) == k
    assert not set(rec.tracks.tolist()) & set(history.tolist())
    assert set(rec.tracks.tolist()) <= set(ranked[:pool].tolist())


def test_inclusion_decreases_with_rank():
    rng = np.random.default_rng(11)
    counts = np.zeros(10)
    for _ in range(10_000):
        counts[inverse_rank_draw(10, 3, rng)] += 1
    assert np.all(np.diff(counts) < 0)


def test_first_draw_distribution():
    rng = np.random.default_rng(3)
    firsts = np.bincount([inverse_rank_draw(4, 2, rng)[0] for _ in range(20_000)], minlength=4)
    expected = (1 / np.arange(1, 5)) / (1 / np.arange(1, 5)).sum()
    np.testing.assert_allclose(firsts / 20_000, expected, atol=0.015)


def test_second_draw_renormalises():
    # P(second = rank 2) = sum over first != 2 of p(first) * p(2 | first removed)
    w = 1 / np.arange(1, 4)
    p = w / w.sum()
    expected = p[0] * w[1] / (w[1] + w[2]) + p[2] * w[1] / (w[0] + w[1])
    rng = np.random.default_rng(8)
    seconds = [inverse_rank_draw(3, 2, rng)[1] for _ in range(20_000)]
    assert abs(np.mean(np.array(seconds) == 1) - expected) < 0.015


def test_recommend_all_matches_single_calls():
    store = make_store({"a": ["t0", "t1"], "b": ["t2"]}, extra_tracks=[f"t{i}" for i in range(3, 30)])
    table = random_table(2, store.num_tracks, 4, np.random.default_rng(0))
    recs = recommend_all(table, store, [0, 1], k=5, candidate_pool=10, seed=6, block_size=1)
    for u in (0, 1):
        single = recommend(table, u, 5, 10, np.random.default_rng([6, u]), exclude=store.user_tracks(u))
        np.testing.assert_array_equal(recs[u].tracks, single.tracks)
        np.testing.assert_allclose(recs[u].distances, single.distances)
        assert not set(recs[u].tracks.tolist()) & set(store.user_tracks(u).tolist())
