"""End-to-end fitting, cross-fold evaluation and the ablation sweep."""

from __future__ import annotations

import json
import logging
import math
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .config import RunConfig
from .dataset import InteractionStore, make_folds
from .embeddings import EmbeddingTable, load_table, random_table, save_table
from .metrics import PARTITIONS, consistency, evaluate_fold
from .recommender import recommend_all
from .skipgram import InitEmbeddings, build_corpus, extract_init, train_skipgram
from .trainer import LossBreakdown, train
from .weighting import fit_weight_model, uniform_weight_model

_log = logging.getLogger(__name__)

ABLATIONS = [
    ("No user-user loss", {"no_user_loss": True}),
    ("No item-item loss", {"no_item_loss": True}),
    ("No word2vec initialization", {"no_w2v_init": True}),
    ("No weighting scheme", {"uniform_weights": True}),
    ("Full approach", {}),
]

METRIC_COLUMNS = ["hit_rate", "mrr"] + [f"mred_{p}" for p in PARTITIONS]


def fit_skipgram(store: InteractionStore, cfg: RunConfig) -> InitEmbeddings:
    corpus = build_corpus(store, cfg.max_users_per_sentence, cfg.seed)
    return train_skipgram(
        corpus,
        d=cfg.dim,
        window=cfg.w2v_window or None,
        negatives=cfg.w2v_negatives,
        epochs=cfg.w2v_epochs,
        lr=cfg.w2v_lr,
        seed=cfg.seed,
        workers=cfg.workers,
    )


def initial_table(
    store: InteractionStore, cfg: RunConfig, init: InitEmbeddings | None = None
) -> EmbeddingTable:
    if cfg.no_w2v_init:
        return random_table(store.num_users, store.num_tracks, cfg.dim, np.random.default_rng(cfg.seed))
    if init is None:
        init = fit_skipgram(store, cfg)
    return extract_init(init, store, cfg.dim, cfg.seed)


def fit_model(
    store: InteractionStore, cfg: RunConfig, init: InitEmbeddings | None = None
) -> tuple[EmbeddingTable, EmbeddingTable, list[LossBreakdown]]:
    """Initialise and train on ``store``; returns (initial table, trained table, trace)."""
    table0 = initial_table(store, cfg, init)
    weights = uniform_weight_model(store) if cfg.uniform_weights else fit_weight_model(store, cfg.theta)
    table, trace = train(store, table0, weights, cfg.train_config(), seed=cfg.seed, workers=cfg.workers)
    return table0, table, trace


def _clean(x: Any) -> Any:
    if isinstance(x, float) and not math.isfinite(x):
        return None
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.generic):
        return _clean(x.item())
    return x


def evaluate(
    store: InteractionStore,
    cfg: RunConfig,
    checkpoints: str | Path | None = None,
    save_checkpoints: str | Path | None = None,
) -> dict:
    """Leave-one-out evaluation over ``cfg.k_folds`` folds; returns the report dict.

    With ``checkpoints`` the per-fold tables ``fold<i>.vec`` are loaded instead
    of trained.
    """
    folds = make_folds(store, cfg.k_folds, cfg.seed, vary_seed=not cfg.fixed_fold_seed)
    if checkpoints is not None:
        found = sorted(Path(checkpoints).glob("fold*.vec"))
        if len(found) != len(folds):
            raise ValueError(
                f"{checkpoints}: found {len(found)} fold checkpoints, config has {len(folds)} folds"
            )

    fold_reports, fold_metrics = [], []
    for fold in folds:
        user_ids = [u.user_id for u in store.users]
        track_ids = [t.track_id for t in store.tracks]
        if checkpoints is not None:
            path = Path(checkpoints) / f"fold{fold.fold_id}.vec"
            if not path.exists():
                raise ValueError(f"missing checkpoint {path}")
            table = load_table(path, user_ids, track_ids)
            if table.d != cfg.dim:
                raise ValueError(f"{path}: dimension {table.d} does not match dim={cfg.dim}")
            trace = []
        else:
            _, table, trace = fit_model(fold.train, cfg)
        if save_checkpoints is not None:
            Path(save_checkpoints).mkdir(parents=True, exist_ok=True)
            save_table(Path(save_checkpoints) / f"fold{fold.fold_id}.vec", table, user_ids, track_ids)

        recs = recommend_all(table, fold.train, fold.heldout, cfg.k, cfg.candidate_pool, cfg.seed)
        fm = evaluate_fold(fold.fold_id, fold.train, fold.heldout, recs, cfg.k, cfg.min_group_size)
        fold_metrics.append(fm)
        fold_reports.append(
            {
                "fold_id": fm.fold_id,
                "users_evaluated": len(fold.heldout),
                "hit_rate": fm.hit_rate,
                "mrr": fm.mrr,
                "mred": fm.mred,
                "miss_rates": fm.miss_rates,
                "variance_agreement": fm.variance_agreement,
                "final_loss": trace[-1].total if trace else None,
            }
        )
        _log.info("fold %d: hit rate %.4f, mrr %.4f", fm.fold_id, fm.hit_rate, fm.mrr)

    report: dict[str, Any] = {
        "k": cfg.k,
        "k_folds": cfg.k_folds,
        "folds": fold_reports,
    }
    if len(fold_metrics) >= 2:
        cons = consistency(fold_metrics, squared=cfg.consistency_squared)
        report["consistency"] = {
            "per_metric": cons.per_metric,
            "overall": cons.overall,
            "k": cons.k,
            "squared": cons.squared,
        }
    else:
        report["consistency"] = None
    agreements = [f.variance_agreement for f in fold_metrics if f.variance_agreement is not None]
    report["variance_agreement"] = {
        "per_fold": [f.variance_agreement for f in fold_metrics],
        "mean": float(np.mean(agreements)) if agreements else None,
    }
    return _clean(report)


def mean_metrics(report: dict) -> dict[str, float]:
    rows = [
        {"hit_rate": f["hit_rate"], "mrr": f["mrr"], **{f"mred_{p}": f["mred"][p] for p in PARTITIONS}}
        for f in report["folds"]
    ]
    return {c: float(np.mean([r[c] for r in rows])) for c in METRIC_COLUMNS}


def ablate(store: InteractionStore, cfg: RunConfig) -> list[dict]:
    """Evaluate the full approach and the four single-component ablations."""
    base = cfg.replace(no_user_loss=False, no_item_loss=False, no_w2v_init=False, uniform_weights=False)
    rows = []
    for label, changes in ABLATIONS:
        report = evaluate(store, base.replace(**changes))
        cons = report["consistency"]
        rows.append(
            {
                "variant": label,
                **mean_metrics(report),
                "consistency": cons["overall"] if cons else None,
                "variance_agreement": report["variance_agreement"]["mean"],
            }
        )
    return rows


# -- report files -------------------------------------------------------------------


def report_schema() -> dict:
    return json.loads(resources.files("tripletrec").joinpath("report_schema.json").read_text())


def write_report(report: dict, out_dir: str | Path) -> tuple[Path, Path]:
    """Write ``report.json`` and the flat ``report.csv`` (``scope,metric,value``)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    jpath, cpath = out / "report.json", out / "report.csv"
    jpath.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    lines = ["scope,metric,value"]

    def add(scope, metric, value):
        lines.append(f"{scope},{metric},{'' if value is None else repr(float(value))}")

    for f in report["folds"]:
        scope = f"fold{f['fold_id']}"
        add(scope, "hit_rate", f["hit_rate"])
        add(scope, "mrr", f["mrr"])
        for p, v in f["mred"].items():
            add(scope, f"mred_{p}", v)
        add(scope, "variance_agreement", f["variance_agreement"])
    if report["consistency"]:
        for m, v in report["consistency"]["per_metric"].items():
            add("consistency", m, v)
        add("consistency", "overall", report["consistency"]["overall"])
    add("overall", "variance_agreement", report["variance_agreement"]["mean"])
    cpath.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return jpath, cpath
