"""Ranking by cosine distance and stochastic inverse-rank selection."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .dataset import InteractionStore
from .embeddings import EmbeddingTable, unit_rows


@dataclass
class RecommendationList:
    user: int
    tracks: np.ndarray
    distances: np.ndarray
    seed: int | None = None

    def __len__(self) -> int:
        return len(self.tracks)


def _distances(table: EmbeddingTable, users: np.ndarray) -> np.ndarray:
    return 1.0 - unit_rows(table.users[users]) @ unit_rows(table.items).T


def rank_items(
    table: EmbeddingTable, user: int, exclude: Iterable[int] | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """All tracks by ascending cosine distance to ``user`` (ties: lower ordinal).

    Returns ``(tracks, distances)``; ``exclude`` tracks (typically the user's
    training history) are dropped.
    """
    dist = _distances(table, np.array([user]))[0]
    order = np.argsort(dist, kind="stable")
    if exclude is not None:
        drop = np.zeros(len(dist), dtype=bool)
        drop[np.fromiter(exclude, dtype=np.int64)] = True
        order = order[~drop[order]]
    return order, dist[order]


def inverse_rank_draw(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Positions (0-based) of ``k`` draws without replacement, P(pos) ~ 1/(pos+1).

    Uses Gumbel-top-k, whose ordering is distributed exactly like sequential
    draws with renormalisation after each pick.
    """
    if k > n:
        raise ValueError(f"cannot draw {k} items from {n}")
    keys = -np.log(np.arange(1, n + 1)) + rng.gumbel(size=n)
    top = np.argpartition(-keys, k - 1)[:k] if k < n else np.arange(n)
    return top[np.argsort(-keys[top], kind="stable")]


def recommend(
    table: EmbeddingTable,
    user: int,
    k: int,
    candidate_pool: int = 1000,
    rng: np.random.Generator | int | None = None,
    exclude: Iterable[int] | None = None,
) -> RecommendationList:
    """Draw ``k`` distinct tracks from the top ``candidate_pool`` of the ranking."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if candidate_pool < k:
        raise ValueError(f"candidate_pool ({candidate_pool}) must be >= k ({k})")
    seed = rng if isinstance(rng, int) else None
    rng = np.random.default_rng(rng)
    tracks, dist = rank_items(table, user, exclude)
    if len(tracks) < k:
        raise ValueError(f"only {len(tracks)} rankable tracks for user {user}, need {k}")
    pool = min(candidate_pool, len(tracks))
    pick = inverse_rank_draw(pool, k, rng)
    return RecommendationList(user, tracks[pick], dist[pick], seed)


def recommend_all(
    table: EmbeddingTable,
    store: InteractionStore,
    users: Iterable[int],
    k: int,
    candidate_pool: int = 1000,
    seed: int = 0,
    exclude_history: bool = True,
    block_size: int = 512,
) -> dict[int, RecommendationList]:
    """Recommend for many users; user ``u`` draws from ``default_rng([seed, u])``."""
    users = np.asarray(list(users), dtype=np.int64)
    out: dict[int, RecommendationList] = {}
    items_unit = unit_rows(table.items)
    for lo in range(0, len(users), block_size):
        block = users[lo : lo + block_size]
        dist = 1.0 - unit_rows(table.users[block]) @ items_unit.T
        for u, row in zip(block.tolist(), dist):
            order = np.argsort(row, kind="stable")
            if exclude_history:
                hist = store.user_tracks(u)
                mask = np.ones(len(row), dtype=bool)
                mask[hist] = False
                order = order[mask[order]]
            if len(order) < k:
                raise ValueError(f"only {len(order)} rankable tracks for user {u}, need {k}")
            rng = np.random.default_rng([seed, u])
            pool = min(candidate_pool, len(order))
            pick = order[inverse_rank_draw(pool, k, rng)]
            out[u] = RecommendationList(u, pick, row[pick], seed)
    return out
