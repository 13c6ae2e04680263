from __future__ import annotations

import numpy as np
import pytest

from tripletrec.dataset import Gender, InteractionStore, Track, User, generate_planted

# lines recorded by the acceptance module, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def make_store(
    histories: dict[str, list[str] | dict[str, int]],
    artists: dict[str, str] | None = None,
    genders: dict[str, str] | None = None,
    countries: dict[str, str] | None = None,
    extra_tracks: list[str] = (),
) -> InteractionStore:
    """Small store from ``{user: [tracks]}`` or ``{user: {track: plays}}``.

    Tracks default to artist ``a_<track>`` and users to gender ``n``, country ``XX``.
    """
    artists = artists or {}
    genders = genders or {}
    countries = countries or {}
    rows = []
    track_ids = set(extra_tracks)
    for uid, hist in histories.items():
        items = hist.items() if isinstance(hist, dict) else ((t, 1) for t in hist)
        for tid, plays in items:
            rows.append((uid, tid, plays))
            track_ids.add(tid)
    users = [
        User(uid, Gender.parse(genders.get(uid, "n")), countries.get(uid, "XX"))
        for uid in histories
    ]
    tracks = [Track(t, artists.get(t, f"a_{t}"), "") for t in sorted(track_ids)]
    return InteractionStore.from_records(users, tracks, rows)


@pytest.fixture(scope="session")
def planted():
    """The reference planted store: 4 groups x 125 users, 2000 tracks, seed 1."""
    return generate_planted(seed=1)


@pytest.fixture(scope="session")
def small_planted():
    """20 users over 40 tracks, for exhaustive checks."""
    return generate_planted(
        num_groups=2,
        users_per_group=10,
        artists_per_group=4,
        tracks_per_artist=5,
        interactions_per_user=8,
        crossover_rate=0.2,
        communities_per_group=2,
        seed=3,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
