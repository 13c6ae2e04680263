"""Skip-gram (negative sampling) initialisation of user and song vectors.

Every track with at least one listener becomes a "sentence" of typed tokens
(``song=<id>``, ``artist=<id>``, ``album=<id>``, ``user=<id>``...). Tokens that
co-occur in sentences end up close, so songs sharing listeners or an artist,
and users sharing songs, start training near one another.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from numba import njit

from .dataset import InteractionStore
from .embeddings import EmbeddingTable, read_vectors, write_vectors

_log = logging.getLogger(__name__)


@dataclass
class InitEmbeddings:
    """Token vocabulary and its learned input vectors (one row per token)."""

    tokens: list[str]
    vectors: np.ndarray

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.tokens)}

    @property
    def d(self) -> int:
        return self.vectors.shape[1]

    def __contains__(self, token: str) -> bool:
        return token in self.index

    def __getitem__(self, token: str) -> np.ndarray:
        return self.vectors[self.index[token]]

    def save(self, path) -> None:
        write_vectors(path, dict(zip(self.tokens, self.vectors)))

    @classmethod
    def load(cls, path) -> "InitEmbeddings":
        d, vecs = read_vectors(path)
        tokens = list(vecs)
        mat = np.array([vecs[t] for t in tokens]).reshape(len(tokens), d)
        return cls(tokens, mat)


def build_corpus(
    store: InteractionStore, max_users_per_sentence: int = 256, seed: int = 0
) -> list[list[str]]:
    """One sentence per track with listeners: song, artist, optional album, users."""
    if store.num_interactions == 0:
        raise ValueError("cannot build a corpus from an empty store")
    rng = np.random.default_rng(seed)
    corpus = []
    for t, track in enumerate(store.tracks):
        listeners = store.track_listeners(t)
        if len(listeners) == 0:
            continue
        sentence = [f"song={track.track_id}", f"artist={track.artist_id}"]
        if track.album_id:
            sentence.append(f"album={track.album_id}")
        listeners = rng.permutation(listeners)[:max_users_per_sentence]
        sentence.extend(f"user={store.users[u].user_id}" for u in listeners)
        corpus.append(sentence)
    return corpus


def _sentence_pairs(ids: np.ndarray, window: int | None) -> tuple[np.ndarray, np.ndarray]:
    n = len(ids)
    c, o = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    mask = c != o
    if window is not None:
        mask &= np.abs(c - o) <= window
    return ids[c[mask]], ids[o[mask]]


@njit(cache=True, nogil=True)
def _sgns_kernel(w_in, w_out, centers, contexts, negs, lr0, base, total):
    d = w_in.shape[1]
    grad = np.empty(d)
    for p in range(len(centers)):
        lr = lr0 * max(1.0 - (base + p) / total, 1e-4)
        c = centers[p]
        grad[:] = 0.0
        for k in range(negs.shape[1] + 1):
            if k == 0:
                o = contexts[p]
                label = 1.0
            else:
                o = negs[p, k - 1]
                label = 0.0
            s = 0.0
            for j in range(d):
                s += w_in[c, j] * w_out[o, j]
            g = (label - 1.0 / (1.0 + np.exp(-s))) * lr
            for j in range(d):
                grad[j] += g * w_out[o, j]
                w_out[o, j] += g * w_in[c, j]
        for j in range(d):
            w_in[c, j] += grad[j]


def train_skipgram(
    corpus: list[list[str]],
    d: int = 128,
    window: int | None = None,
    negatives: int = 5,
    epochs: int = 20,
    lr: float = 0.025,
    seed: int = 0,
    *,
    workers: int = 1,
) -> InitEmbeddings:
    """Train skip-gram with negative sampling over ``corpus``.

    ``window=None`` uses the whole sentence as context. Negatives are drawn
    from the unigram distribution raised to 3/4; the learning rate decays
    linearly to ``1e-4 * lr`` and updates are applied pair by pair. With
    ``workers=1`` the result is fully determined by ``seed``; more workers
    split each epoch's pairs and update the shared matrices without locking.
    """
    if d < 2:
        raise ValueError("d must be >= 2")
    if not corpus:
        raise ValueError("corpus is empty")
    tokens = sorted({tok for sent in corpus for tok in sent})
    if len(tokens) < 2:
        raise ValueError("vocabulary needs at least two tokens")
    index = {t: i for i, t in enumerate(tokens)}
    sentences = [np.array([index[t] for t in s], dtype=np.int64) for s in corpus]

    counts = np.zeros(len(tokens))
    for s in sentences:
        np.add.at(counts, s, 1)
    noise = counts**0.75
    noise_cdf = np.cumsum(noise / noise.sum())
    noise_cdf[-1] = 1.0

    rng = np.random.default_rng(seed)
    w_in = (rng.random((len(tokens), d)) - 0.5) / d
    w_out = np.zeros((len(tokens), d))

    pairs_per_epoch = sum(
        len(s) * (len(s) - 1) if window is None else len(_sentence_pairs(s, window)[0])
        for s in sentences
    )
    total = max(pairs_per_epoch * epochs, 1)
    _log.info("skip-gram: %d tokens, %d pairs/epoch", len(tokens), pairs_per_epoch)

    seen = 0
    for epoch in range(epochs):
        order = rng.permutation(len(sentences))
        centers, contexts = zip(*(_sentence_pairs(sentences[i], window) for i in order))
        centers = np.concatenate(centers)
        contexts = np.concatenate(contexts)
        negs_all = np.searchsorted(noise_cdf, rng.random((len(centers), negatives)), side="right")

        if workers <= 1:
            _sgns_kernel(w_in, w_out, centers, contexts, negs_all, lr, seen, total)
        else:
            bounds = np.linspace(0, len(centers), workers + 1).astype(np.int64)
            with ThreadPoolExecutor(workers) as pool:
                futures = [
                    pool.submit(
                        _sgns_kernel, w_in, w_out,
                        centers[lo:hi], contexts[lo:hi], negs_all[lo:hi],
                        lr, seen + lo, total,
                    )
                    for lo, hi in zip(bounds[:-1], bounds[1:])
                ]
                for f in futures:
                    f.result()
        seen += len(centers)
        _log.debug("skip-gram epoch %d done", epoch)

    if not np.isfinite(w_in).all():
        raise FloatingPointError("skip-gram training produced non-finite vectors")
    return InitEmbeddings(tokens, w_in)


def extract_init(
    init: InitEmbeddings, store: InteractionStore, d: int, seed: int = 0
) -> EmbeddingTable:
    """Copy user/song vectors into a table; missing entities get random rows."""
    if init.d != d:
        raise ValueError(f"init embeddings have dimension {init.d}, expected {d}")
    rng = np.random.default_rng(seed)
    bound = 1.0 / np.sqrt(d)
    users = rng.uniform(-bound, bound, size=(store.num_users, d))
    items = rng.uniform(-bound, bound, size=(store.num_tracks, d))
    missing = 0
    for i, u in enumerate(store.users):
        tok = f"user={u.user_id}"
        if tok in init:
            users[i] = init[tok]
        else:
            missing += 1
    for i, t in enumerate(store.tracks):
        tok = f"song={t.track_id}"
        if tok in init:
            items[i] = init[tok]
        else:
            missing += 1
    if missing:
        _log.info("%d entities absent from the skip-gram vocabulary; randomly initialised", missing)
    return EmbeddingTable(users, items)
