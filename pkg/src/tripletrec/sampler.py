"""Nearest-neighbour index and hard-negative triplet sampling."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator

import numpy as np

from .dataset import InteractionStore
from .embeddings import EmbeddingTable, unit_rows
from .weighting import WeightModel


class SamplingError(RuntimeError):
    pass


@dataclass
class NeighborIndex:
    """Exact top-N cosine neighbours of every user, fixed for one epoch."""

    neighbors: np.ndarray  # (num_users, N) user ordinals
    epoch: int = 0
    _pools: dict = field(default_factory=dict, repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.neighbors)

    def pool(self, store: InteractionStore, user: int) -> np.ndarray:
        """Tracks heard by some neighbour of ``user`` but not by ``user``, sorted."""
        pool = self._pools.get(user)
        if pool is None:
            heard = [store.user_tracks(v) for v in self.neighbors[user]]
            union = np.unique(np.concatenate(heard)) if heard else np.empty(0, np.int64)
            pool = np.setdiff1d(union, store.user_tracks(user), assume_unique=True)
            self._pools[user] = pool
        return pool


def build_neighbor_index(
    embeddings: EmbeddingTable | np.ndarray, n: int, epoch: int = 0, block_size: int = 1024
) -> NeighborIndex:
    """Exact top-``n`` users by cosine similarity; ties go to the lower ordinal."""
    users = embeddings.users if isinstance(embeddings, EmbeddingTable) else np.asarray(embeddings)
    num = len(users)
    if n < 1:
        raise ValueError("n must be >= 1")
    if num < 2:
        raise ValueError("need at least two users to build a neighbour index")
    n = min(n, num - 1)
    unit = unit_rows(users)
    out = np.empty((num, n), dtype=np.int64)
    for lo in range(0, num, block_size):
        hi = min(lo + block_size, num)
        sims = unit[lo:hi] @ unit.T
        sims[np.arange(hi - lo), np.arange(lo, hi)] = -np.inf
        # stable sort keeps the lower ordinal first among equal similarities
        out[lo:hi] = np.argsort(-sims, axis=1, kind="stable")[:, :n]
    return NeighborIndex(out, epoch)


def _unlistened(store: InteractionStore, user: int, rng: np.random.Generator) -> int:
    # restricted to tracks someone has heard so the negative user is defined
    candidates = np.setdiff1d(store.heard_tracks, store.user_tracks(user), assume_unique=True)
    if len(candidates) == 0:
        raise SamplingError(f"user {user} has listened to every heard track; no negative exists")
    return int(candidates[rng.integers(len(candidates))])


def sample_negative(
    store: InteractionStore, index: NeighborIndex, u_a: int, rng: np.random.Generator
) -> int:
    """Uniform draw from the neighbours' pool.

    An empty pool falls back to a uniform draw over tracks the anchor has not
    heard (among tracks with at least one listener).
    """
    pool = index.pool(store, u_a)
    if len(pool):
        return int(pool[rng.integers(len(pool))])
    return _unlistened(store, u_a, rng)


@dataclass(frozen=True)
class TripletSample:
    u_a: int
    s_p: int
    s_n: int
    u_p: int
    u_n: int
    s_a: int
    weight: float


@dataclass
class TripletBatch:
    """Column-wise triplet batch; iterate to get :class:`TripletSample` rows."""

    u_a: np.ndarray
    s_p: np.ndarray
    s_n: np.ndarray
    u_p: np.ndarray
    u_n: np.ndarray
    s_a: np.ndarray
    weight: np.ndarray

    def __len__(self) -> int:
        return len(self.u_a)

    def __iter__(self) -> Iterator[TripletSample]:
        cols = (self.u_a, self.s_p, self.s_n, self.u_p, self.u_n, self.s_a)
        for i in range(len(self)):
            yield TripletSample(*(int(c[i]) for c in cols), float(self.weight[i]))

    @classmethod
    def from_samples(cls, samples) -> "TripletBatch":
        samples = list(samples)
        cols = [np.array([getattr(s, f) for s in samples], dtype=np.int64)
                for f in ("u_a", "s_p", "s_n", "u_p", "u_n", "s_a")]
        return cls(*cols, np.array([s.weight for s in samples], dtype=np.float64))


def _pick_excluding(ptr_lo, length, excluded_pos, r):
    """Uniform position in ``[0, length)`` skipping ``excluded_pos`` when length > 1."""
    alt = np.floor(r * np.maximum(length - 1, 1)).astype(np.int64)
    alt = alt + (alt >= excluded_pos)
    return ptr_lo + np.where(length > 1, alt, excluded_pos)


def sample_batch(
    store: InteractionStore,
    index: NeighborIndex,
    weight_model: WeightModel,
    batch_size: int,
    rng: np.random.Generator,
) -> TripletBatch:
    """Draw ``batch_size`` weighted triplets.

    The anchor user is uniform over users with history; the positive and the
    anchor song are distinct history items when possible; the positive user
    is a listener of the positive song other than the anchor when one exists;
    the negative user is any listener of the negative song.
    """
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    active = np.flatnonzero(store.user_degree > 0)
    if len(active) == 0:
        raise SamplingError("store has no interactions")

    u_a = active[rng.integers(len(active), size=batch_size)]
    deg = store.user_degree[u_a]
    lo = store.user_ptr[u_a]
    p_pos = np.floor(rng.random(batch_size) * deg).astype(np.int64)
    s_p = store.user_items[lo + p_pos]
    s_a = store.user_items[_pick_excluding(lo, deg, p_pos, rng.random(batch_size))]

    s_n = np.array([sample_negative(store, index, int(u), rng) for u in u_a], dtype=np.int64)

    t_lo = store.track_ptr[s_p]
    t_deg = store.track_degree[s_p]
    anchor_pos = np.searchsorted(store.track_user_keys, s_p * store.num_users + u_a) - t_lo
    u_p = store.track_users[_pick_excluding(t_lo, t_deg, anchor_pos, rng.random(batch_size))]

    n_pick = np.floor(rng.random(batch_size) * store.track_degree[s_n]).astype(np.int64)
    u_n = store.track_users[store.track_ptr[s_n] + n_pick]

    weight = weight_model.weights(u_a, s_p)
    return TripletBatch(u_a, s_p, s_n, u_p, u_n, s_a, weight)
