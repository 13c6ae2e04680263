"""Weighted three-term triplet loss and its SGD trainer.

For every sample ``i`` the loss is::

    w_i * ( [d(u_a, s_p) - d(u_a, s_n) + m]_+
          + lambda1 * [d(u_a, u_p) - d(u_a, u_n) + m]_+
          + lambda2 * [d(s_a, s_p) - d(s_a, s_n) + m]_+ )

with ``d`` the cosine distance. The batch loss is the sum over samples.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .dataset import InteractionStore
from .embeddings import EPS, EmbeddingTable, scatter_add
from .sampler import TripletBatch, build_neighbor_index, sample_batch
from .weighting import WeightModel

_log = logging.getLogger(__name__)


class DivergenceError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    dim: int = 128
    lambda1: float = 2.5
    lambda2: float = 2.5
    margin: float = 0.25
    lr: float = 0.05
    epochs: int = 10
    batch_size: int = 256
    neighbors_n: int = 10
    no_user_loss: bool = False
    no_item_loss: bool = False
    no_w2v_init: bool = False
    uniform_weights: bool = False

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.margin < 0:
            raise ValueError("margin must be >= 0")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("lambda1 and lambda2 must be >= 0")
        if not self.lr > 0:
            raise ValueError("lr must be > 0")
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")

    @property
    def effective_lambdas(self) -> tuple[float, float]:
        return (
            0.0 if self.no_user_loss else self.lambda1,
            0.0 if self.no_item_loss else self.lambda2,
        )


@dataclass
class LossBreakdown:
    total: float = 0.0
    term_user_item: float = 0.0
    term_user_user: float = 0.0
    term_item_item: float = 0.0
    active_fraction: float = 0.0
    samples: int = 0

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _cos_parts(x: np.ndarray, y: np.ndarray):
    """Row-wise cosine distance and its gradients w.r.t. x and y."""
    nx = np.linalg.norm(x, axis=1)
    ny = np.linalg.norm(y, axis=1)
    dot = np.einsum("ij,ij->i", x, y)
    prod = nx * ny
    guarded = prod <= EPS
    denom = np.where(guarded, EPS, prod)
    dist = 1.0 - dot / denom
    # d/dx [x.y / (|x||y|)] = y/(|x||y|) - (x.y) x / (|x|^3 |y|); below EPS the
    # denominator is the constant EPS
    with np.errstate(divide="ignore", invalid="ignore"):
        gx = np.where(
            guarded[:, None],
            -y / EPS,
            -(y / denom[:, None] - (dot / (nx**2 * denom))[:, None] * x),
        )
        gy = np.where(
            guarded[:, None],
            -x / EPS,
            -(x / denom[:, None] - (dot / (ny**2 * denom))[:, None] * y),
        )
    return dist, gx, gy


def _forward_backward(table: EmbeddingTable, batch: TripletBatch, config: TrainConfig, grads: bool):
    U, S = table.users, table.items
    ua, up, un = U[batch.u_a], U[batch.u_p], U[batch.u_n]
    sp, sn, sa = S[batch.s_p], S[batch.s_n], S[batch.s_a]
    w = np.ones(len(batch)) if config.uniform_weights else np.asarray(batch.weight, dtype=float)
    lam1, lam2 = config.effective_lambdas
    m = config.margin

    d_ap, g_ap_u, g_ap_s = _cos_parts(ua, sp)
    d_an, g_an_u, g_an_s = _cos_parts(ua, sn)
    d_up, g_up_a, g_up_p = _cos_parts(ua, up)
    d_un, g_un_a, g_un_n = _cos_parts(ua, un)
    d_sp, g_sp_a, g_sp_p = _cos_parts(sa, sp)
    d_sn, g_sn_a, g_sn_n = _cos_parts(sa, sn)

    h0 = d_ap - d_an + m
    h1 = d_up - d_un + m
    h2 = d_sp - d_sn + m
    a0, a1, a2 = h0 > 0, h1 > 0, h2 > 0
    t0 = w * np.where(a0, h0, 0.0)
    t1 = w * lam1 * np.where(a1, h1, 0.0)
    t2 = w * lam2 * np.where(a2, h2, 0.0)
    active = a0 | (a1 & (lam1 > 0)) | (a2 & (lam2 > 0))

    loss = LossBreakdown(
        total=float(t0.sum() + t1.sum() + t2.sum()),
        term_user_item=float(t0.sum()),
        term_user_user=float(t1.sum()),
        term_item_item=float(t2.sum()),
        active_fraction=float(active.mean()) if len(batch) else 0.0,
        samples=len(batch),
    )
    if not grads:
        return loss, None

    c0 = (w * a0)[:, None]
    c1 = (w * lam1 * a1)[:, None]
    c2 = (w * lam2 * a2)[:, None]
    user_rows = np.concatenate([batch.u_a, batch.u_p, batch.u_n])
    user_grad = np.concatenate([
        c0 * (g_ap_u - g_an_u) + c1 * (g_up_a - g_un_a),
        c1 * g_up_p,
        -c1 * g_un_n,
    ])
    item_rows = np.concatenate([batch.s_p, batch.s_n, batch.s_a])
    item_grad = np.concatenate([
        c0 * g_ap_s + c2 * g_sp_p,
        -c0 * g_an_s - c2 * g_sn_n,
        c2 * (g_sp_a - g_sn_a),
    ])
    return loss, (user_rows, user_grad, item_rows, item_grad)


def loss_on_batch(table: EmbeddingTable, batch: TripletBatch, config: TrainConfig) -> LossBreakdown:
    return _forward_backward(table, batch, config, grads=False)[0]


def batch_gradients(table: EmbeddingTable, batch: TripletBatch, config: TrainConfig) -> EmbeddingTable:
    """Dense gradient of the summed batch loss (mostly for checking)."""
    _, (ur, ug, ir, ig) = _forward_backward(table, batch, config, grads=True)
    gu = np.zeros_like(table.users)
    gi = np.zeros_like(table.items)
    scatter_add(gu, ur, ug)
    scatter_add(gi, ir, ig)
    return EmbeddingTable(gu, gi)


def sgd_step(
    table: EmbeddingTable,
    batch: TripletBatch,
    config: TrainConfig,
    rng: np.random.Generator | None = None,
) -> tuple[EmbeddingTable, LossBreakdown]:
    """One in-place SGD step on the rows touched by ``batch``.

    The returned loss is evaluated before the update. Rows that land exactly
    on zero are re-jittered; a non-finite row raises :class:`DivergenceError`.
    """
    loss, (ur, ug, ir, ig) = _forward_backward(table, batch, config, grads=True)
    # overflow surfaces as a non-finite row below, reported as divergence
    with np.errstate(over="ignore", invalid="ignore"):
        scatter_add(table.users, ur, -config.lr * ug)
        scatter_add(table.items, ir, -config.lr * ig)

    for mat, rows, name in ((table.users, ur, "user"), (table.items, ir, "item")):
        rows = np.unique(rows)
        block = mat[rows]
        if not np.isfinite(block).all():
            bad = rows[~np.isfinite(block).all(axis=1)]
            raise DivergenceError(
                f"non-finite {name} embedding after SGD step (rows {bad[:5].tolist()}); "
                f"lower lr (currently {config.lr})"
            )
        zero = ~block.any(axis=1)
        if zero.any():
            rng = rng or np.random.default_rng(0)
            bound = 1e-3 / math.sqrt(table.d)
            mat[rows[zero]] = rng.uniform(-bound, bound, size=(int(zero.sum()), table.d))
    return table, loss


def _mean_breakdown(parts: list[LossBreakdown]) -> LossBreakdown:
    n = sum(p.samples for p in parts)
    if n == 0:
        return LossBreakdown()
    return LossBreakdown(
        total=sum(p.total for p in parts) / n,
        term_user_item=sum(p.term_user_item for p in parts) / n,
        term_user_user=sum(p.term_user_user for p in parts) / n,
        term_item_item=sum(p.term_item_item for p in parts) / n,
        active_fraction=sum(p.active_fraction * p.samples for p in parts) / n,
        samples=n,
    )


def train(
    store: InteractionStore,
    init_table: EmbeddingTable,
    weight_model: WeightModel,
    config: TrainConfig,
    seed: int = 0,
    workers: int = 1,
) -> tuple[EmbeddingTable, list[LossBreakdown]]:
    """Run ``config.epochs`` epochs of triplet SGD starting from ``init_table``.

    Each epoch rebuilds the user neighbour index from the current vectors and
    then draws ``ceil(num_interactions / batch_size)`` batches. The trace holds
    per-sample mean losses for each epoch. With ``workers > 1`` batches are
    split among threads that update the shared table without locking
    (Hogwild); only ``workers=1`` is bit-reproducible.
    """
    if init_table.d != config.dim:
        raise ValueError(f"init table has dimension {init_table.d}, config says {config.dim}")
    table = init_table.copy()
    trace: list[LossBreakdown] = []
    n_batches = max(1, math.ceil(store.num_interactions / config.batch_size))
    seq = np.random.SeedSequence(seed)

    for epoch in range(config.epochs):
        index = build_neighbor_index(table, config.neighbors_n, epoch=epoch)
        epoch_seq = seq.spawn(1)[0]

        def run(rng: np.random.Generator, count: int) -> list[LossBreakdown]:
            parts = []
            for _ in range(count):
                batch = sample_batch(store, index, weight_model, config.batch_size, rng)
                parts.append(sgd_step(table, batch, config, rng)[1])
            return parts

        if workers <= 1:
            parts = run(np.random.default_rng(epoch_seq), n_batches)
        else:
            counts = [len(range(w, n_batches, workers)) for w in range(workers)]
            rngs = [np.random.default_rng(s) for s in epoch_seq.spawn(workers)]
            with ThreadPoolExecutor(workers) as pool:
                parts = [p for ps in pool.map(run, rngs, counts) for p in ps]

        summary = _mean_breakdown(parts)
        trace.append(summary)
        _log.info(
            "epoch %d: loss %.4f (ui %.4f, uu %.4f, ii %.4f), active %.3f",
            epoch, summary.total, summary.term_user_item, summary.term_user_user,
            summary.term_item_item, summary.active_fraction,
        )
    return table, trace
