"""Rarity coefficients and per-row training weights.

Five factors contribute: gender, country, artist popularity, song popularity
and user activity. Gender uses ``1/count``; the power-law factors use
``1 / (1 + ln count)`` so that a count of one stays finite. Each coefficient
map sums to one over its population, and the theta-weighted sum is rescaled
so the mean weight over the training rows is exactly one.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .dataset import Gender, InteractionStore

FACTORS = ("gender", "country", "artist", "song", "activity")

# best configuration reported for the challenge submission
DEFAULT_THETA = {
    "gender": 5.0,
    "country": 100.0,
    "artist": 1e4,
    "song": 1e5,
    "activity": 1e4,
}


def inverse_log(counts: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.log(np.asarray(counts, dtype=np.float64)))


def _normalized(keys, raw) -> dict:
    raw = np.asarray(raw, dtype=np.float64)
    return dict(zip(keys, (raw / raw.sum()).tolist()))


@dataclass
class WeightModel:
    gender_coef: dict[Gender, float]
    country_coef: dict[str, float]
    artist_coef: dict[str, float]
    song_coef: dict[str, float]
    activity_coef: dict[str, float]
    theta: dict[str, float]
    scale: float = 1.0
    # per-ordinal lookups for vectorised weighting; NaN marks "unknown"
    user_part: np.ndarray = field(default=None, repr=False)
    track_part: np.ndarray = field(default=None, repr=False)

    def weights(self, users: np.ndarray, tracks: np.ndarray) -> np.ndarray:
        w = (self.user_part[users] + self.track_part[tracks]) / self.scale
        if np.isnan(w).any():
            raise KeyError("weight requested for a user or track absent from the training data")
        return w


def _check_theta(theta: Mapping[str, float]) -> dict[str, float]:
    unknown = set(theta) - set(FACTORS)
    if unknown:
        raise ValueError(f"unknown theta keys: {sorted(unknown)}")
    full = {k: float(theta.get(k, 0.0)) for k in FACTORS}
    if any(v < 0 for v in full.values()):
        raise ValueError("theta values must be >= 0")
    if not any(v > 0 for v in full.values()):
        raise ValueError("at least one theta value must be positive")
    return full


def fit_weight_model(store: InteractionStore, theta: Mapping[str, float] | None = None) -> WeightModel:
    """Compute coefficient maps from *store* and the row-weight normaliser."""
    if store.num_interactions == 0:
        raise ValueError("cannot fit weights on an empty store")
    theta = _check_theta(DEFAULT_THETA if theta is None else theta)

    genders = [u.gender for u in store.users]
    g_keys = sorted(set(genders), key=lambda g: g.value)
    g_counts = [genders.count(g) for g in g_keys]
    gender_coef = _normalized(g_keys, 1.0 / np.array(g_counts, dtype=np.float64))

    countries = [u.country for u in store.users]
    c_keys = sorted(set(countries))
    c_counts = [countries.count(c) for c in c_keys]
    country_coef = _normalized(c_keys, inverse_log(c_counts))

    art_plays = store.artist_plays
    art_live = np.flatnonzero(art_plays > 0)
    artist_coef = _normalized(
        [store.artist_ids[a] for a in art_live], inverse_log(art_plays[art_live])
    )

    song_plays = store.track_plays
    song_live = np.flatnonzero(song_plays > 0)
    song_coef = _normalized(
        [store.tracks[t].track_id for t in song_live], inverse_log(song_plays[song_live])
    )

    activity = store.user_degree
    user_live = np.flatnonzero(activity > 0)
    activity_coef = _normalized(
        [store.users[u].user_id for u in user_live], inverse_log(activity[user_live])
    )

    user_part = np.full(store.num_users, np.nan)
    for u in user_live:
        user = store.users[u]
        user_part[u] = (
            theta["gender"] * gender_coef[user.gender]
            + theta["country"] * country_coef[user.country]
            + theta["activity"] * activity_coef[user.user_id]
        )
    track_part = np.full(store.num_tracks, np.nan)
    for t in song_live:
        track = store.tracks[t]
        track_part[t] = (
            theta["artist"] * artist_coef[track.artist_id]
            + theta["song"] * song_coef[track.track_id]
        )

    model = WeightModel(
        gender_coef, country_coef, artist_coef, song_coef, activity_coef, theta,
        user_part=user_part, track_part=track_part,
    )
    raw = model.weights(store.user_idx, store.track_idx)
    model.scale = float(raw.mean())
    return model


def row_weight(model: WeightModel, user: int, track: int) -> float:
    """Training weight of the interaction (user ordinal, track ordinal)."""
    if not (0 <= user < len(model.user_part)) or not (0 <= track < len(model.track_part)):
        raise KeyError(f"unknown user {user} or track {track}")
    return float(model.weights(np.array([user]), np.array([track]))[0])


def uniform_weight_model(store: InteractionStore) -> WeightModel:
    """Model giving every known row weight one (the no-weighting ablation)."""
    user_part = np.where(store.user_degree > 0, 0.5, np.nan)
    track_part = np.where(store.track_degree > 0, 0.5, np.nan)
    return WeightModel({}, {}, {}, {}, {}, {k: 0.0 for k in FACTORS},
                       user_part=user_part, track_part=track_part)
