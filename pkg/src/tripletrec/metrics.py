"""Accuracy, partition-fairness, cross-fold consistency and variance agreement."""

from __future__ import annotations

import math
import warnings
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .dataset import InteractionStore
from .recommender import RecommendationList

PARTITIONS = ("country", "user_activity", "track_popularity", "artist_popularity", "gender")


def _as_list(rec) -> list[int]:
    if isinstance(rec, RecommendationList):
        return rec.tracks.tolist()
    return [int(t) for t in rec]


def _check(recommendations, heldout):
    if not heldout:
        raise ValueError("heldout is empty")
    missing = [u for u in heldout if u not in recommendations]
    if missing:
        raise KeyError(f"no recommendations for users {missing[:5]}")


def hits(recommendations: Mapping, heldout: Mapping[int, int], k: int) -> dict[int, bool]:
    _check(recommendations, heldout)
    out = {}
    for u, target in heldout.items():
        recs = _as_list(recommendations[u])
        if len(recs) < k:
            raise ValueError(f"user {u} has {len(recs)} recommendations, need {k}")
        out[u] = target in recs[:k]
    return out


def hit_rate_at_k(recommendations: Mapping, heldout: Mapping[int, int], k: int) -> float:
    """Fraction of users whose held-out track is among their first ``k`` items."""
    h = hits(recommendations, heldout, k)
    return sum(h.values()) / len(h)


def mrr(recommendations: Mapping, heldout: Mapping[int, int]) -> float:
    """Mean reciprocal rank of the held-out track (0 when not recommended)."""
    _check(recommendations, heldout)
    total = 0.0
    for u, target in heldout.items():
        recs = _as_list(recommendations[u])
        if target in recs:
            total += 1.0 / (recs.index(target) + 1)
    return total / len(heldout)


def group_miss_rates(
    recommendations: Mapping,
    heldout: Mapping[int, int],
    partition: Mapping[int, Hashable],
    k: int,
) -> tuple[float, dict[Hashable, tuple[float, int]]]:
    """Overall miss rate and ``{group: (miss rate, size)}``."""
    h = hits(recommendations, heldout, k)
    missing = [u for u in h if u not in partition]
    if missing:
        raise KeyError(f"partition does not cover users {missing[:5]}")
    overall = 1.0 - sum(h.values()) / len(h)
    members: dict[Hashable, list[bool]] = {}
    for u, hit in h.items():
        members.setdefault(partition[u], []).append(hit)
    groups = {g: (1.0 - sum(v) / len(v), len(v)) for g, v in members.items()}
    return overall, groups


def mred(
    recommendations: Mapping,
    heldout: Mapping[int, int],
    partition: Mapping[int, Hashable],
    k: int,
    min_group_size: int = 10,
) -> float:
    """Miss Rate Equality Difference: ``-mean_g |MR_g - MR|`` over large-enough groups."""
    overall, groups = group_miss_rates(recommendations, heldout, partition, k)
    kept = [mr for mr, size in groups.values() if size >= min_group_size]
    if not kept:
        raise ValueError(f"no partition group has at least {min_group_size} users")
    return -float(np.mean([abs(mr - overall) for mr in kept]))


# -- partitions -----------------------------------------------------------------


def _deciles(values: Mapping[int, float]) -> dict[int, int]:
    arr = np.array(list(values.values()), dtype=float)
    edges = np.quantile(arr, np.linspace(0.1, 0.9, 9))
    return {u: int(np.searchsorted(edges, v, side="right")) for u, v in values.items()}


def build_partitions(
    train: InteractionStore, heldout: Mapping[int, int]
) -> dict[str, dict[int, Hashable]]:
    """The five user partitions, with popularity taken from the training fold only.

    Activity deciles use distinct training tracks per user; track and artist
    popularity deciles use training play counts of the held-out track and of
    its artist.
    """
    users = list(heldout)
    track_plays = train.track_plays
    artist_plays = train.artist_plays
    return {
        "country": {u: train.users[u].country for u in users},
        "gender": {u: train.users[u].gender.value for u in users},
        "user_activity": _deciles({u: float(train.user_degree[u]) for u in users}),
        "track_popularity": _deciles({u: float(track_plays[heldout[u]]) for u in users}),
        "artist_popularity": _deciles(
            {u: float(artist_plays[train.track_artist[heldout[u]]]) for u in users}
        ),
    }


# -- per-fold bundle --------------------------------------------------------------


@dataclass
class FoldMetrics:
    fold_id: int
    hit_rate: float
    mrr: float
    mred: dict[str, float] = field(default_factory=dict)
    miss_rates: dict[str, dict[str, float]] = field(default_factory=dict)
    variance_agreement: float | None = None

    def flat(self) -> dict[str, float]:
        out = {"hit_rate": self.hit_rate, "mrr": self.mrr}
        out.update({f"mred_{name}": v for name, v in self.mred.items()})
        return out


def evaluate_fold(
    fold_id: int,
    train: InteractionStore,
    heldout: Mapping[int, int],
    recommendations: Mapping,
    k: int,
    min_group_size: int = 10,
) -> FoldMetrics:
    parts = build_partitions(train, heldout)
    mreds, misses = {}, {}
    for name in PARTITIONS:
        mreds[name] = mred(recommendations, heldout, parts[name], k, min_group_size)
        _, groups = group_miss_rates(recommendations, heldout, parts[name], k)
        misses[name] = {str(g): mr for g, (mr, _) in sorted(groups.items(), key=lambda x: str(x[0]))}
    try:
        agreement = variance_agreement(train, {u: recommendations[u] for u in heldout})
    except ValueError:
        agreement = math.nan
    return FoldMetrics(
        fold_id,
        hit_rate_at_k(recommendations, heldout, k),
        mrr(recommendations, heldout),
        mreds,
        misses,
        None if math.isnan(agreement) else agreement,
    )


# -- consistency -----------------------------------------------------------------


@dataclass
class ConsistencyReport:
    per_metric: dict[str, float | None]
    overall: float
    k: int
    squared: bool = False

    @property
    def undefined(self) -> list[str]:
        return [m for m, v in self.per_metric.items() if v is None]


def consistency(
    fold_metrics: Sequence[FoldMetrics | Mapping[str, float]], squared: bool = False
) -> ConsistencyReport:
    """One minus the coefficient of variation of each metric across folds.

    Uses the population standard deviation and ``|mean|``. ``squared=True``
    penalises ``sigma^2 / mu^2`` instead. Metrics whose mean is ~0 are
    reported as ``None`` and left out of the overall mean.
    """
    if len(fold_metrics) < 2:
        raise ValueError("consistency needs at least two folds")
    rows = [fm.flat() if isinstance(fm, FoldMetrics) else dict(fm) for fm in fold_metrics]
    names = list(rows[0])
    if any(set(r) != set(names) for r in rows):
        raise ValueError("every fold must report the same metrics")

    per_metric: dict[str, float | None] = {}
    for name in names:
        values = np.array([r[name] for r in rows], dtype=float)
        mu = values.mean()
        if abs(mu) < 1e-12:
            warnings.warn(f"metric {name!r} has ~zero mean across folds; consistency undefined")
            per_metric[name] = None
            continue
        # the rounded mean of identical values can differ from them in the last bit
        sigma = 0.0 if np.ptp(values) == 0 else values.std()
        ratio = sigma**2 / mu**2 if squared else sigma / abs(mu)
        per_metric[name] = 1.0 - float(ratio)
    defined = [v for v in per_metric.values() if v is not None]
    overall = float(np.mean(defined)) if defined else math.nan
    return ConsistencyReport(per_metric, overall, len(rows), squared)


# -- variance agreement ------------------------------------------------------------


def gini_impurity(labels: Iterable[Hashable]) -> float:
    """``1 - sum_a p_a^2`` over the label distribution."""
    counts = np.array(list(Counter(labels).values()), dtype=float)
    if counts.sum() == 0:
        raise ValueError("impurity of an empty set is undefined")
    p = counts / counts.sum()
    return float(1.0 - np.sum(p * p))


@dataclass(frozen=True)
class ImpurityPair:
    user: int
    g_user: float
    g_model: float


def impurity_pairs(store: InteractionStore, recommendations: Mapping) -> list[ImpurityPair]:
    pairs = []
    for u, rec in recommendations.items():
        history = store.user_tracks(u)
        tracks = _as_list(rec)
        if len(history) == 0 or not tracks:
            continue
        pairs.append(
            ImpurityPair(
                u,
                gini_impurity(store.track_artist[history].tolist()),
                gini_impurity(store.track_artist[tracks].tolist()),
            )
        )
    return pairs


def variance_agreement(store: InteractionStore, recommendations: Mapping) -> float:
    """Pearson correlation between history and recommendation artist impurity.

    Returns NaN (with a warning) when either side has zero variance.
    """
    pairs = impurity_pairs(store, recommendations)
    if len(pairs) < 3:
        raise ValueError(f"variance agreement needs >= 3 users with history, got {len(pairs)}")
    gu = np.array([p.g_user for p in pairs])
    gm = np.array([p.g_model for p in pairs])
    if np.ptp(gu) == 0 or np.ptp(gm) == 0:
        warnings.warn("impurity has zero variance on one side; variance agreement undefined")
        return math.nan
    return float(stats.pearsonr(gu, gm)[0])
