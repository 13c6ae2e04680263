"""Embedding tables and the plain-text vector file format.

File layout::

    <count> <d>
    <type>=<id> <f1> ... <fd>

Floats are written with ``repr`` so they round-trip exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

EPS = 1e-12


@dataclass
class EmbeddingTable:
    """User and item vectors in a shared ``d``-dimensional space."""

    users: np.ndarray
    items: np.ndarray

    def __post_init__(self):
        self.users = np.ascontiguousarray(self.users, dtype=np.float64)
        self.items = np.ascontiguousarray(self.items, dtype=np.float64)
        if self.users.ndim != 2 or self.items.ndim != 2:
            raise ValueError("embedding matrices must be 2-D")
        if self.users.shape[1] != self.items.shape[1]:
            raise ValueError(
                f"user dim {self.users.shape[1]} != item dim {self.items.shape[1]}"
            )

    @property
    def d(self) -> int:
        return self.users.shape[1]

    def copy(self) -> "EmbeddingTable":
        return EmbeddingTable(self.users.copy(), self.items.copy())

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.users).all() and np.isfinite(self.items).all())

    def __eq__(self, other) -> bool:
        if not isinstance(other, EmbeddingTable):
            return NotImplemented
        return np.array_equal(self.users, other.users) and np.array_equal(self.items, other.items)


def random_table(num_users: int, num_items: int, d: int, rng: np.random.Generator) -> EmbeddingTable:
    """Uniform entries in ``[-1/sqrt(d), 1/sqrt(d)]``."""
    bound = 1.0 / np.sqrt(d)
    return EmbeddingTable(
        rng.uniform(-bound, bound, size=(num_users, d)),
        rng.uniform(-bound, bound, size=(num_items, d)),
    )


def cosine_distance(x, y) -> float:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    denom = max(float(np.linalg.norm(x) * np.linalg.norm(y)), EPS)
    return 1.0 - float(x @ y) / denom


def row_cosine_distance(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Row-wise cosine distance between two ``(n, d)`` arrays."""
    denom = np.maximum(np.linalg.norm(x, axis=1) * np.linalg.norm(y, axis=1), EPS)
    return 1.0 - np.einsum("ij,ij->i", x, y) / denom


def scatter_add(target: np.ndarray, rows: np.ndarray, values: np.ndarray) -> None:
    """``target[rows] += values`` with repeated rows accumulated (like ``np.add.at``)."""
    rows = np.asarray(rows).ravel()
    if len(rows) == 0:
        return
    order = np.argsort(rows, kind="stable")
    srows = rows[order]
    starts = np.flatnonzero(np.r_[True, srows[1:] != srows[:-1]])
    target[srows[starts]] += np.add.reduceat(values[order], starts, axis=0)


def unit_rows(m: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    return m / np.maximum(norms, EPS)


# -- persistence --------------------------------------------------------------


def write_vectors(path: str | Path, vectors: Mapping[str, np.ndarray]) -> None:
    items = list(vectors.items())
    d = len(items[0][1]) if items else 0
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{len(items)} {d}\n")
        for key, vec in items:
            if len(vec) != d:
                raise ValueError(f"vector {key!r} has length {len(vec)}, expected {d}")
            fh.write(key)
            for v in vec:
                fh.write(" ")
                fh.write(repr(float(v)))
            fh.write("\n")


def read_vectors(path: str | Path) -> tuple[int, dict[str, np.ndarray]]:
    with open(path, encoding="utf-8") as fh:
        head = fh.readline().split()
        if len(head) != 2:
            raise ValueError(f"{path}:1: expected '<count> <d>' header")
        count, d = int(head[0]), int(head[1])
        out: dict[str, np.ndarray] = {}
        for lineno, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split(" ")
            if len(parts) != d + 1:
                raise ValueError(f"{path}:{lineno}: expected {d} values, got {len(parts) - 1}")
            out[parts[0]] = np.array([float(p) for p in parts[1:]], dtype=np.float64)
    if len(out) != count:
        raise ValueError(f"{path}: header says {count} vectors, found {len(out)}")
    return d, out


def save_table(path: str | Path, table: EmbeddingTable, user_ids, track_ids) -> None:
    vectors = {f"user={u}": table.users[i] for i, u in enumerate(user_ids)}
    vectors.update({f"song={t}": table.items[i] for i, t in enumerate(track_ids)})
    write_vectors(path, vectors)


def load_table(path: str | Path, user_ids, track_ids) -> EmbeddingTable:
    """Load a checkpoint; every listed user and track must be present."""
    d, vectors = read_vectors(path)
    users, items = [], []
    for kind, ids, dest in (("user", user_ids, users), ("song", track_ids, items)):
        for i in ids:
            key = f"{kind}={i}"
            if key not in vectors:
                raise KeyError(f"{path}: missing vector for {key}")
            dest.append(vectors[key])
    users_m = np.array(users).reshape(len(users), d)
    items_m = np.array(items).reshape(len(items), d)
    return EmbeddingTable(users_m, items_m)
