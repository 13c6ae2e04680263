"""Interaction stores, CSV ingestion, leave-one-out folds and a planted-structure generator."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

_log = logging.getLogger(__name__)


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


class Gender(str, Enum):
    MALE = "male"
    FEMALE = "female"
    UNDISCLOSED = "undisclosed"

    @classmethod
    def parse(cls, code: str) -> "Gender":
        code = code.strip().lower()
        if code in ("m", "male"):
            return cls.MALE
        if code in ("f", "female"):
            return cls.FEMALE
        return cls.UNDISCLOSED

    @property
    def code(self) -> str:
        return {"male": "m", "female": "f", "undisclosed": "n"}[self.value]


@dataclass(frozen=True)
class User:
    user_id: str
    gender: Gender = Gender.UNDISCLOSED
    country: str = ""
    playcount_total: int = 0


@dataclass(frozen=True)
class Track:
    track_id: str
    artist_id: str
    album_id: str = ""


@dataclass(frozen=True)
class Interaction:
    user_id: str
    track_id: str
    play_count: int


def _csr(keys: np.ndarray, values: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((values, keys))
    ptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(ptr, keys + 1, 1)
    return np.cumsum(ptr), values[order]


class InteractionStore:
    """Immutable, ordinal-indexed store of users, tracks and merged interactions.

    Users and tracks are kept sorted by id so ordinals are deterministic.
    Interactions are held as parallel arrays ``user_idx``, ``track_idx`` and
    ``play_count``; per-user / per-track adjacency is exposed in CSR form
    (``user_ptr``/``user_items`` and ``track_ptr``/``track_users``) with the
    neighbour lists sorted ascending.
    """

    def __init__(
        self,
        users: Sequence[User],
        tracks: Sequence[Track],
        user_idx: np.ndarray,
        track_idx: np.ndarray,
        play_count: np.ndarray,
    ):
        self.users: tuple[User, ...] = tuple(users)
        self.tracks: tuple[Track, ...] = tuple(tracks)
        self.user_idx = np.asarray(user_idx, dtype=np.int64)
        self.track_idx = np.asarray(track_idx, dtype=np.int64)
        self.play_count = np.asarray(play_count, dtype=np.int64)
        for arr in (self.user_idx, self.track_idx, self.play_count):
            arr.flags.writeable = False

        self.user_pos = {u.user_id: i for i, u in enumerate(self.users)}
        self.track_pos = {t.track_id: i for i, t in enumerate(self.tracks)}
        if len(self.user_pos) != len(self.users):
            raise DataError("duplicate user_id in user list")
        if len(self.track_pos) != len(self.tracks):
            raise DataError("duplicate track_id in track list")

        artists = sorted({t.artist_id for t in self.tracks})
        self.artist_ids: tuple[str, ...] = tuple(artists)
        self.artist_pos = {a: i for i, a in enumerate(artists)}
        self.track_artist = np.array(
            [self.artist_pos[t.artist_id] for t in self.tracks], dtype=np.int64
        )

        nu, nt = len(self.users), len(self.tracks)
        self.user_ptr, self.user_items = _csr(self.user_idx, self.track_idx, nu)
        self.track_ptr, self.track_users = _csr(self.track_idx, self.user_idx, nt)
        self.artist_ptr, self.artist_tracks = _csr(
            self.track_artist, np.arange(nt, dtype=np.int64), len(artists)
        )

    # -- construction -------------------------------------------------------

    @classmethod
    def from_records(
        cls,
        users: Iterable[User],
        tracks: Iterable[Track],
        interactions: Iterable[tuple[str, str, int]],
    ) -> "InteractionStore":
        """Build a store, merging duplicate (user, track) rows by summing plays."""
        users = sorted(users, key=lambda u: u.user_id)
        tracks = sorted(tracks, key=lambda t: t.track_id)
        upos = {u.user_id: i for i, u in enumerate(users)}
        tpos = {t.track_id: i for i, t in enumerate(tracks)}

        merged: dict[tuple[int, int], int] = {}
        for uid, tid, plays in interactions:
            if uid not in upos:
                raise DataError(f"interaction references unknown user {uid!r}")
            if tid not in tpos:
                raise DataError(f"interaction references unknown track {tid!r}")
            if plays < 1:
                raise DataError(f"play_count must be >= 1 for ({uid!r}, {tid!r})")
            key = (upos[uid], tpos[tid])
            merged[key] = merged.get(key, 0) + int(plays)

        keys = sorted(merged)
        ui = np.array([k[0] for k in keys], dtype=np.int64)
        ti = np.array([k[1] for k in keys], dtype=np.int64)
        pc = np.array([merged[k] for k in keys], dtype=np.int64)

        totals = np.bincount(ui, weights=pc, minlength=len(users)).astype(np.int64)
        users = [
            User(u.user_id, u.gender, u.country, int(totals[i])) for i, u in enumerate(users)
        ]
        return cls(users, tracks, ui, ti, pc)

    def subset(self, keep: np.ndarray) -> "InteractionStore":
        """Store over the same users and tracks with only the masked interactions."""
        keep = np.asarray(keep, dtype=bool)
        ui, ti, pc = self.user_idx[keep], self.track_idx[keep], self.play_count[keep]
        totals = np.bincount(ui, weights=pc, minlength=self.num_users).astype(np.int64)
        users = [
            User(u.user_id, u.gender, u.country, int(totals[i]))
            for i, u in enumerate(self.users)
        ]
        return InteractionStore(users, self.tracks, ui, ti, pc)

    # -- accessors ----------------------------------------------------------

    @property
    def num_users(self) -> int:
        return len(self.users)

    @property
    def num_tracks(self) -> int:
        return len(self.tracks)

    @property
    def num_interactions(self) -> int:
        return len(self.user_idx)

    def __len__(self) -> int:
        return self.num_interactions

    def user_tracks(self, u: int) -> np.ndarray:
        return self.user_items[self.user_ptr[u] : self.user_ptr[u + 1]]

    def track_listeners(self, t: int) -> np.ndarray:
        return self.track_users[self.track_ptr[t] : self.track_ptr[t + 1]]

    def artist_track_list(self, a: int) -> np.ndarray:
        return self.artist_tracks[self.artist_ptr[a] : self.artist_ptr[a + 1]]

    @cached_property
    def user_degree(self) -> np.ndarray:
        """Distinct tracks per user."""
        return np.diff(self.user_ptr)

    @cached_property
    def track_degree(self) -> np.ndarray:
        """Distinct listeners per track."""
        return np.diff(self.track_ptr)

    @cached_property
    def track_user_keys(self) -> np.ndarray:
        """Sorted ``track * num_users + user`` keys aligned with ``track_users``."""
        tracks = np.repeat(np.arange(self.num_tracks, dtype=np.int64), self.track_degree)
        return tracks * self.num_users + self.track_users

    @cached_property
    def heard_tracks(self) -> np.ndarray:
        """Track ordinals with at least one listener."""
        return np.flatnonzero(self.track_degree > 0)

    @cached_property
    def track_plays(self) -> np.ndarray:
        return np.bincount(
            self.track_idx, weights=self.play_count, minlength=self.num_tracks
        ).astype(np.int64)

    @cached_property
    def artist_plays(self) -> np.ndarray:
        return np.bincount(
            self.track_artist, weights=self.track_plays, minlength=len(self.artist_ids)
        ).astype(np.int64)

    @cached_property
    def user_track_sets(self) -> list[frozenset[int]]:
        return [frozenset(self.user_tracks(u).tolist()) for u in range(self.num_users)]

    def interaction_set(self) -> set[tuple[str, str]]:
        return {
            (self.users[u].user_id, self.tracks[t].track_id)
            for u, t in zip(self.user_idx.tolist(), self.track_idx.tolist())
        }

    def records(self) -> list[Interaction]:
        return [
            Interaction(self.users[u].user_id, self.tracks[t].track_id, int(p))
            for u, t, p in zip(self.user_idx, self.track_idx, self.play_count)
        ]

    def __repr__(self) -> str:
        return (
            f"InteractionStore(users={self.num_users}, tracks={self.num_tracks}, "
            f"interactions={self.num_interactions})"
        )


# -- CSV I/O ------------------------------------------------------------------

INTERACTIONS_HEADER = ["user_id", "track_id", "play_count"]
USERS_HEADER = ["user_id", "gender", "country"]
TRACKS_HEADER = ["track_id", "artist_id", "album_id"]


def _read_csv(path: Path, header: list[str]) -> Iterable[tuple[int, list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            first = next(reader)
        except StopIteration:
            raise DataError(f"{path}:1: missing header {','.join(header)}") from None
        if [c.strip() for c in first] != header:
            raise DataError(f"{path}:1: expected header {','.join(header)}, got {','.join(first)}")
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise DataError(
                    f"{path}:{reader.line_num}: expected {len(header)} fields, got {len(row)}"
                )
            yield reader.line_num, [c.strip() for c in row]


def load_store(
    interactions_path: str | Path, users_path: str | Path, tracks_path: str | Path
) -> InteractionStore:
    """Load the three CSV files into an :class:`InteractionStore`."""
    users_path, tracks_path, interactions_path = (
        Path(users_path),
        Path(tracks_path),
        Path(interactions_path),
    )
    users = []
    for line, (uid, gender, country) in _read_csv(users_path, USERS_HEADER):
        if not uid:
            raise DataError(f"{users_path}:{line}: empty user_id")
        users.append(User(uid, Gender.parse(gender), country))

    tracks = []
    for line, (tid, artist, album) in _read_csv(tracks_path, TRACKS_HEADER):
        if not tid or not artist:
            raise DataError(f"{tracks_path}:{line}: track_id and artist_id must be non-empty")
        tracks.append(Track(tid, artist, album))

    rows = []
    for line, (uid, tid, plays) in _read_csv(interactions_path, INTERACTIONS_HEADER):
        try:
            n = int(plays)
        except ValueError:
            raise DataError(f"{interactions_path}:{line}: bad play_count {plays!r}") from None
        if n < 1:
            raise DataError(f"{interactions_path}:{line}: play_count must be >= 1")
        rows.append((uid, tid, n))

    store = InteractionStore.from_records(users, tracks, rows)
    _log.info("loaded %r", store)
    return store


def write_store(store: InteractionStore, out_dir: str | Path) -> dict[str, Path]:
    """Write ``interactions.csv``, ``users.csv`` and ``tracks.csv`` into *out_dir*."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "interactions": out / "interactions.csv",
        "users": out / "users.csv",
        "tracks": out / "tracks.csv",
    }
    with open(paths["users"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(USERS_HEADER)
        for u in store.users:
            w.writerow([u.user_id, u.gender.code, u.country])
    with open(paths["tracks"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACKS_HEADER)
        for t in store.tracks:
            w.writerow([t.track_id, t.artist_id, t.album_id])
    with open(paths["interactions"], "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(INTERACTIONS_HEADER)
        for r in store.records():
            w.writerow([r.user_id, r.track_id, r.play_count])
    return paths


def load_store_dir(data_dir: str | Path) -> InteractionStore:
    d = Path(data_dir)
    return load_store(d / "interactions.csv", d / "users.csv", d / "tracks.csv")


# -- folds --------------------------------------------------------------------


@dataclass
class FoldSplit:
    """One leave-one-out split; ``heldout`` maps user ordinal to track ordinal."""

    fold_id: int
    train: InteractionStore
    heldout: dict[int, int] = field(default_factory=dict)


def make_folds(
    store: InteractionStore, k_folds: int, seed: int, vary_seed: bool = True
) -> list[FoldSplit]:
    """Hold out one uniformly chosen track per user with at least two tracks.

    Fold ``f`` draws from ``default_rng([seed, f])``; with ``vary_seed=False``
    every fold reuses the same stream and the folds are identical.
    """
    if k_folds < 1:
        raise ValueError("k_folds must be >= 1")
    eligible = np.flatnonzero(store.user_degree >= 2)
    if len(eligible) == 0:
        raise DataError("no user has at least two distinct tracks; cannot hold out")

    folds = []
    for f in range(k_folds):
        rng = np.random.default_rng([seed, f if vary_seed else 0])
        pick = rng.integers(0, store.user_degree[eligible])
        rows = store.user_ptr[eligible] + pick
        tracks = store.user_items[rows]
        held = set(zip(eligible.tolist(), tracks.tolist()))
        keep = np.array(
            [(u, t) not in held for u, t in zip(store.user_idx.tolist(), store.track_idx.tolist())],
            dtype=bool,
        )
        folds.append(
            FoldSplit(f, store.subset(keep), dict(zip(eligible.tolist(), tracks.tolist())))
        )
    return folds


# -- planted generator ----------------------------------------------------------


def _zipf_weights(n: int, exponent: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** exponent
    return w / w.sum()


def generate_planted(
    num_groups: int = 4,
    users_per_group: int = 125,
    artists_per_group: int = 50,
    tracks_per_artist: int = 10,
    interactions_per_user: int = 40,
    crossover_rate: float = 0.1,
    seed: int = 0,
    *,
    communities_per_group: int = 25,
    taste_concentration: float = 5.0,
    artist_skew: float = 1.0,
    track_skew: float = 0.0,
    gender_probs: Sequence[float] = (0.6, 0.3, 0.1),
    num_countries: int = 12,
    country_skew: float = 1.2,
    albums_per_artist: int = 2,
) -> InteractionStore:
    """Synthesize a store with planted group and community structure.

    Artists are partitioned among groups, and each group's artists are split
    further into ``communities_per_group`` communities. User ``j`` of group
    ``g`` joins community ``j % communities_per_group`` and gets a Dirichlet
    taste over that community's artists (centred on a Zipf profile with
    exponent ``artist_skew``). A fraction ``1 - crossover_rate`` of draws
    picks an artist from the taste and then a track (Zipf, ``track_skew``);
    the rest pick uniformly over the whole catalogue, so with two groups and
    ``crossover_rate=1`` about half the draws still land in the own group.
    Each draw contributes a geometric play count; repeated draws merge.
    Gender and country follow skewed categorical distributions.
    """
    counts = dict(
        num_groups=num_groups,
        users_per_group=users_per_group,
        artists_per_group=artists_per_group,
        tracks_per_artist=tracks_per_artist,
        interactions_per_user=interactions_per_user,
        communities_per_group=communities_per_group,
        num_countries=num_countries,
    )
    for name, value in counts.items():
        if value < 1:
            raise ValueError(f"{name} must be >= 1, got {value}")
    if communities_per_group > artists_per_group:
        raise ValueError("communities_per_group cannot exceed artists_per_group")
    if not 0.0 <= crossover_rate <= 1.0:
        raise ValueError(f"crossover_rate must be in [0, 1], got {crossover_rate}")
    if taste_concentration <= 0:
        raise ValueError("taste_concentration must be > 0")
    gp = np.asarray(gender_probs, dtype=float)
    if gp.shape != (3,) or np.any(gp < 0) or gp.sum() <= 0:
        raise ValueError("gender_probs must be three non-negative numbers")
    gp = gp / gp.sum()

    rng = np.random.default_rng(seed)
    gw = len(str(num_groups - 1))
    aw = len(str(artists_per_group - 1))
    tw = len(str(tracks_per_artist - 1))
    uw = len(str(num_groups * users_per_group - 1))

    tracks: list[Track] = []
    # catalogue[g][a] -> track ids of artist a in group g
    catalogue: list[list[list[str]]] = []
    for g in range(num_groups):
        group = []
        for a in range(artists_per_group):
            artist = f"a{g:0{gw}d}-{a:0{aw}d}"
            ids = []
            for t in range(tracks_per_artist):
                tid = f"t{g:0{gw}d}-{a:0{aw}d}-{t:0{tw}d}"
                album = f"b{g:0{gw}d}-{a:0{aw}d}-{t % albums_per_artist}" if albums_per_artist else ""
                tracks.append(Track(tid, artist, album))
                ids.append(tid)
            group.append(ids)
        catalogue.append(group)
    all_ids = [t.track_id for t in tracks]

    communities = np.array_split(np.arange(artists_per_group), communities_per_group)
    track_pop = _zipf_weights(tracks_per_artist, track_skew)
    country_pop = _zipf_weights(num_countries, country_skew)
    genders = [Gender.MALE, Gender.FEMALE, Gender.UNDISCLOSED]

    users: list[User] = []
    rows: list[tuple[str, str, int]] = []
    for g in range(num_groups):
        for j in range(users_per_group):
            uid = f"u{g * users_per_group + j:0{uw}d}"
            gender = genders[rng.choice(3, p=gp)]
            country = f"C{rng.choice(num_countries, p=country_pop):02d}"
            users.append(User(uid, gender, country))

            members = communities[j % communities_per_group]
            base = _zipf_weights(len(members), artist_skew)
            taste = rng.dirichlet(taste_concentration * len(members) * base)
            for is_cross in rng.random(interactions_per_user) < crossover_rate:
                if is_cross:
                    tid = all_ids[rng.integers(len(all_ids))]
                else:
                    a = members[rng.choice(len(members), p=taste)]
                    tid = catalogue[g][a][rng.choice(tracks_per_artist, p=track_pop)]
                rows.append((uid, tid, int(rng.geometric(0.4))))

    return InteractionStore.from_records(users, tracks, rows)


def group_of(entity_id: str) -> int:
    """Group index encoded in a planted artist, album or track id."""
    return int(entity_id[1:].split("-")[0])
