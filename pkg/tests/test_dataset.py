from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tripletrec.dataset import (
    DataError,
    Gender,
    InteractionStore,
    Track,
    User,
    generate_planted,
    load_store,
    load_store_dir,
    make_folds,
    write_store,
)

from .conftest import make_store


def _write(tmp_path, interactions, users, tracks):
    (tmp_path / "interactions.csv").write_text(interactions, encoding="utf-8")
    (tmp_path / "users.csv").write_text(users, encoding="utf-8")
    (tmp_path / "tracks.csv").write_text(tracks, encoding="utf-8")
    return (tmp_path / "interactions.csv", tmp_path / "users.csv", tmp_path / "tracks.csv")


USERS = "user_id,gender,country\nu1,m,IT\nu2,f,\n"
TRACKS = "track_id,artist_id,album_id\nt1,a1,b1\nt2,a1,\n"


def test_duplicate_rows_merge(tmp_path):
    paths = _write(tmp_path, "user_id,track_id,play_count\nu1,t1,2\nu1,t1,3\nu2,t1,1\n", USERS, TRACKS)
    store = load_store(*paths)
    assert store.num_interactions == 2
    plays = {(r.user_id, r.track_id): r.play_count for r in store.records()}
    assert plays == {("u1", "t1"): 5, ("u2", "t1"): 1}
    assert store.users[store.user_pos["u1"]].playcount_total == 5


def test_empty_interactions_file(tmp_path):
    store = load_store(*_write(tmp_path, "user_id,track_id,play_count\n", USERS, TRACKS))
    assert store.num_interactions == 0
    assert store.num_users == 2


def test_unknown_track_is_named(tmp_path):
    paths = _write(tmp_path, "user_id,track_id,play_count\nu1,tX,1\n", USERS, TRACKS)
    with pytest.raises(DataError, match="tX"):
        load_store(*paths)


def test_unknown_user_is_named(tmp_path):
    paths = _write(tmp_path, "user_id,track_id,play_count\nu9,t1,1\n", USERS, TRACKS)
    with pytest.raises(DataError, match="u9"):
        load_store(*paths)


def test_malformed_row_names_file_and_line(tmp_path):
    paths = _write(tmp_path, "user_id,track_id,play_count\nu1,t1,1\nu2,t1\n", USERS, TRACKS)
    with pytest.raises(DataError, match=r"interactions\.csv:3"):
        load_store(*paths)
    paths = _write(tmp_path, "user_id,track_id,play_count\nu1,t1,zero\n", USERS, TRACKS)
    with pytest.raises(DataError, match=r"interactions\.csv:2"):
        load_store(*paths)


def test_bad_header(tmp_path):
    paths = _write(tmp_path, "user,track,plays\n", USERS, TRACKS)
    with pytest.raises(DataError, match="header"):
        load_store(*paths)


def test_gender_mapping(tmp_path):
    users = "user_id,gender,country\nu1,m,IT\nu2,f,\nu3,n,\nu4,x,\n"
    store = load_store(*_write(tmp_path, "user_id,track_id,play_count\n", users, TRACKS))
    assert [u.gender for u in store.users] == [
        Gender.MALE, Gender.FEMALE, Gender.UNDISCLOSED, Gender.UNDISCLOSED,
    ]
    assert store.users[1].country == ""


def test_ordinals_sorted_by_id():
    store = make_store({"b": ["t2"], "a": ["t1", "t2"]})
    assert [u.user_id for u in store.users] == ["a", "b"]
    assert [t.track_id for t in store.tracks] == ["t1", "t2"]


def test_indices_are_inverse():
    store = make_store({"u1": ["t1", "t2"], "u2": ["t2"], "u3": ["t3"]},
                       artists={"t1": "x", "t2": "x", "t3": "y"})
    pairs = set(zip(store.user_idx.tolist(), store.track_idx.tolist()))
    assert {(u, t) for u in range(store.num_users) for t in store.user_tracks(u)} == pairs
    assert {(u, t) for t in range(store.num_tracks) for u in store.track_listeners(t)} == pairs
    assert store.artist_track_list(store.artist_pos["x"]).tolist() == [0, 1]


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 7), st.integers(1, 4)), max_size=40))
def test_indices_inverse_property(rows):
    users = [User(f"u{i}", Gender.UNDISCLOSED, "") for i in range(6)]
    tracks = [Track(f"t{i}", f"a{i % 3}", "") for i in range(8)]
    store = InteractionStore.from_records(users, tracks, [(f"u{u}", f"t{t}", p) for u, t, p in rows])
    expected: dict[tuple[int, int], int] = {}
    for u, t, p in rows:
        expected[(u, t)] = expected.get((u, t), 0) + p
    got = dict(zip(zip(store.user_idx.tolist(), store.track_idx.tolist()), store.play_count.tolist()))
    assert got == expected
    for u in range(6):
        assert set(store.user_tracks(u).tolist()) == {t for (uu, t) in expected if uu == u}
    for t in range(8):
        assert set(store.track_listeners(t).tolist()) == {u for (u, tt) in expected if tt == t}


def test_round_trip(tmp_path, small_planted):
    write_store(small_planted, tmp_path)
    back = load_store_dir(tmp_path)
    assert back.users == small_planted.users
    assert back.tracks == small_planted.tracks
    np.testing.assert_array_equal(back.user_idx, small_planted.user_idx)
    np.testing.assert_array_equal(back.track_idx, small_planted.track_idx)
    np.testing.assert_array_equal(back.play_count, small_planted.play_count)
    np.testing.assert_array_equal(back.user_items, small_planted.user_items)
    np.testing.assert_array_equal(back.track_users, small_planted.track_users)


# -- folds ---------------------------------------------------------------------


def test_single_track_user_never_held_out():
    store = make_store({"solo": ["t1"], "pair": ["t1", "t2"]})
    for fold in make_folds(store, 4, seed=0):
        assert store.user_pos["solo"] not in fold.heldout


def test_two_track_user_holds_out_one():
    store = make_store({"pair": ["t1", "t2"]})
    folds = make_folds(store, 4, seed=0)
    assert len(folds) == 4
    for fold in folds:
        held = fold.heldout[0]
        assert held in (0, 1)
        assert fold.train.user_tracks(0).tolist() == [1 - held]


def test_folds_deterministic(small_planted):
    a = make_folds(small_planted, 3, seed=7)
    b = make_folds(small_planted, 3, seed=7)
    for fa, fb in zip(a, b):
        assert fa.heldout == fb.heldout
        np.testing.assert_array_equal(fa.train.track_idx, fb.train.track_idx)


def test_folds_differ_and_fixed_seed_repeats(planted):
    folds = make_folds(planted, 2, seed=0)
    assert folds[0].heldout != folds[1].heldout
    same = make_folds(planted, 2, seed=0, vary_seed=False)
    assert same[0].heldout == same[1].heldout


def test_fold_partition_property(small_planted):
    original = small_planted.interaction_set()
    eligible = {u.user_id for i, u in enumerate(small_planted.users) if small_planted.user_degree[i] >= 2}
    for fold in make_folds(small_planted, 4, seed=2):
        train = fold.train.interaction_set()
        held = {(small_planted.users[u].user_id, small_planted.tracks[t].track_id)
                for u, t in fold.heldout.items()}
        assert not train & held
        assert train | held == original
        assert {u for u, _ in held} == eligible


def test_no_eligible_users():
    with pytest.raises(DataError):
        make_folds(make_store({"a": ["t1"], "b": ["t2"]}), 2, seed=0)
    with pytest.raises(ValueError):
        make_folds(make_store({"a": ["t1", "t2"]}), 0, seed=0)


# -- planted generator -------------------------------------------------------------


def _own_group_fraction(store, users_per_group):
    own = 0
    for r in store.records():
        user_group = int(r.user_id[1:]) // users_per_group
        track_group = int(r.track_id[1:].split("-")[0])
        own += user_group == track_group
    return own / store.num_interactions


def test_planted_no_crossover():
    store = generate_planted(num_groups=3, users_per_group=20, crossover_rate=0.0, seed=4)
    assert _own_group_fraction(store, 20) == 1.0


def test_planted_full_crossover_two_groups():
    store = generate_planted(num_groups=2, users_per_group=200, crossover_rate=1.0,
                             interactions_per_user=60, seed=5)
    assert store.num_interactions >= 10_000
    assert abs(_own_group_fraction(store, 200) - 0.5) <= 0.05


def test_planted_deterministic():
    a = generate_planted(num_groups=2, users_per_group=15, seed=9)
    b = generate_planted(num_groups=2, users_per_group=15, seed=9)
    assert a.users == b.users and a.tracks == b.tracks
    assert a.records() == b.records()


def test_planted_artist_ownership_exact(planted):
    owner = {}
    for t in planted.tracks:
        group = t.track_id[1:].split("-")[0]
        assert owner.setdefault(t.artist_id, group) == group
    assert len(planted.tracks) == 2000
    assert planted.num_users == 500


def test_planted_partitions_exercised(planted):
    assert len({u.gender for u in planted.users}) == 3
    assert len({u.country for u in planted.users}) >= 5


def test_planted_rejects_bad_arguments():
    with pytest.raises(ValueError):
        generate_planted(crossover_rate=1.5)
    with pytest.raises(ValueError):
        generate_planted(num_groups=0)
