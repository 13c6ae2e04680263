from __future__ import annotations

import numpy as np
import pytest

from tripletrec.dataset import Gender, InteractionStore, Track, User
from tripletrec.skipgram import InitEmbeddings, build_corpus, extract_init, train_skipgram

from .conftest import make_store


def _cos(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


THREE_SONGS = [
    ["song=s1", "artist=a1"] + [f"user=u{i}" for i in range(5)],
    ["song=s2", "artist=a2"] + [f"user=u{i}" for i in range(5)],
    ["song=s3", "artist=a3"] + [f"user=u{i}" for i in range(5, 10)],
]


def test_sentence_tokens():
    store = InteractionStore.from_records(
        [User("u1", Gender.MALE, "IT")], [Track("t1", "a1", "b1")], [("u1", "t1", 1)]
    )
    assert build_corpus(store, 256, seed=0) == [["song=t1", "artist=a1", "album=b1", "user=u1"]]


def test_sentence_shape_rules():
    store = make_store({"u1": ["t1", "t2"], "u2": ["t1"]}, extra_tracks=["t9"])
    corpus = build_corpus(store, 256, seed=0)
    # t9 has no listener; albums are empty so no album token
    assert [s[0] for s in corpus] == ["song=t1", "song=t2"]
    for sentence in corpus:
        kinds = [tok.split("=")[0] for tok in sentence]
        assert kinds.count("song") == 1 and kinds.count("artist") == 1
        assert "album" not in kinds
    assert sorted(corpus[0][2:]) == ["user=u1", "user=u2"]


def test_one_sentence_per_heard_track():
    store = make_store({f"u{i}": [f"t{j:03d}" for j in range(i, 500, 7)] for i in range(7)})
    assert len(build_corpus(store)) == 500


def test_user_cap_and_seed():
    store = make_store({f"u{i:02d}": ["t1"] for i in range(40)})
    a = build_corpus(store, max_users_per_sentence=10, seed=1)
    assert len(a[0]) == 2 + 10
    assert a == build_corpus(store, max_users_per_sentence=10, seed=1)
    assert a != build_corpus(store, max_users_per_sentence=10, seed=2)


def test_empty_store_rejected():
    store = make_store({"u1": []}, extra_tracks=["t1"])
    with pytest.raises(ValueError):
        build_corpus(store)


def test_shared_listeners_give_closer_songs():
    emb = train_skipgram(THREE_SONGS, d=16, epochs=200, seed=0)
    gap = _cos(emb["song=s1"], emb["song=s2"]) - _cos(emb["song=s1"], emb["song=s3"])
    assert gap > 0.1


def test_dimension_and_finiteness():
    emb = train_skipgram(THREE_SONGS, d=128, epochs=3, seed=0)
    assert emb.d == 128
    assert emb.vectors.shape == (len(emb.tokens), 128)
    assert np.isfinite(emb.vectors).all()
    assert {"song=s1", "user=u9", "artist=a3"} <= set(emb.tokens)


def test_deterministic_single_worker():
    a = train_skipgram(THREE_SONGS, d=8, epochs=5, seed=3)
    b = train_skipgram(THREE_SONGS, d=8, epochs=5, seed=3)
    np.testing.assert_array_equal(a.vectors, b.vectors)
    c = train_skipgram(THREE_SONGS, d=8, epochs=5, seed=4)
    assert not np.array_equal(a.vectors, c.vectors)


def test_multi_worker_runs_finite():
    emb = train_skipgram(THREE_SONGS * 20, d=8, epochs=3, seed=0, workers=2)
    assert np.isfinite(emb.vectors).all()


def test_rejects_degenerate_inputs():
    with pytest.raises(ValueError):
        train_skipgram([["song=s1"]], d=8)
    with pytest.raises(ValueError):
        train_skipgram([], d=8)
    with pytest.raises(ValueError):
        train_skipgram(THREE_SONGS, d=1)


def test_extract_init_copies_and_fills():
    store = make_store({"u0": ["s1"], "stranger": ["s3"]}, extra_tracks=["s2"])
    emb = train_skipgram(THREE_SONGS, d=8, epochs=2, seed=0)
    table = extract_init(emb, store, 8, seed=0)
    np.testing.assert_array_equal(table.users[store.user_pos["u0"]], emb["user=u0"])
    np.testing.assert_array_equal(table.items[store.track_pos["s2"]], emb["song=s2"])
    bound = 1 / np.sqrt(8)
    assert np.all(np.abs(table.users[store.user_pos["stranger"]]) <= bound)


def test_extract_init_dimension_mismatch():
    emb = train_skipgram(THREE_SONGS, d=8, epochs=1, seed=0)
    with pytest.raises(ValueError):
        extract_init(emb, make_store({"u0": ["s1"]}), 16)


def test_save_load_round_trip(tmp_path):
    emb = train_skipgram(THREE_SONGS, d=8, epochs=2, seed=0)
    emb.save(tmp_path / "init.vec")
    back = InitEmbeddings.load(tmp_path / "init.vec")
    assert back.tokens == emb.tokens
    np.testing.assert_array_equal(back.vectors, emb.vectors)
