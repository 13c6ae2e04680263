"""Command-line entry point: ``tripletrec <subcommand> [flags]``.

Subcommands: synth, init, train, recommend, eval, ablate. Every run writes
its fully resolved configuration to ``<out>/config.txt``, which can be fed
back with ``--config`` to repeat the run.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from dataclasses import fields
from pathlib import Path


from . import config as config_mod
from .config import RunConfig
from .dataset import DataError, generate_planted, load_store_dir, write_store
from .embeddings import load_table, save_table
from .pipeline import ABLATIONS, METRIC_COLUMNS, ablate, evaluate, fit_model, fit_skipgram, write_report
from .recommender import recommend, recommend_all
from .sampler import SamplingError
from .skipgram import InitEmbeddings
from .trainer import DivergenceError

_log = logging.getLogger("tripletrec")

SYNTH_KEYS = [
    "groups", "users_per_group", "artists_per_group", "tracks_per_artist",
    "interactions_per_user", "crossover_rate", "communities_per_group", "taste_concentration",
]
INIT_KEYS = ["dim", "w2v_negatives", "w2v_epochs", "w2v_lr", "w2v_window", "max_users_per_sentence"]
TRAIN_KEYS = INIT_KEYS + [
    "lambda1", "lambda2", "margin", "lr", "epochs", "batch_size", "neighbors_n",
    "no_user_loss", "no_item_loss", "no_w2v_init", "uniform_weights",
    "theta_gender", "theta_country", "theta_artist", "theta_song", "theta_activity",
]
EVAL_KEYS = TRAIN_KEYS + [
    "k", "candidate_pool", "k_folds", "min_group_size", "consistency_squared", "fixed_fold_seed",
]

_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {value}")
    return value


def _non_negative_int(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {value}")
    return value


def _unit_float(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise argparse.ArgumentTypeError(f"must be within [0, 1], got {value}")
    return value


_SPECIAL = {
    "crossover_rate": _unit_float,
    "epochs": _non_negative_int,
    "w2v_epochs": _non_negative_int,
    "w2v_window": _non_negative_int,
    "seed": int,
}


def _add_keys(parser: argparse.ArgumentParser, keys: list[str]) -> None:
    for key in keys:
        flag = "--" + key.replace("_", "-")
        kind = _TYPES[key]
        if kind == "bool":
            parser.add_argument(flag, dest=key, action="store_true", default=None)
        else:
            conv = _SPECIAL.get(key) or (_positive_int if kind == "int" else float)
            parser.add_argument(flag, dest=key, type=conv, default=None, metavar=kind.upper())


def _common(parser: argparse.ArgumentParser, need_data: bool = True, need_out: bool = True) -> None:
    parser.add_argument("--config", type=Path, help="flat 'key = value' config file")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--workers", type=_positive_int, default=None)
    if need_data:
        parser.add_argument("--data", type=Path, required=True,
                            help="directory holding interactions.csv, users.csv, tracks.csv")
    parser.add_argument("--out", type=Path, required=need_out, help="run output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tripletrec", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a planted-structure dataset")
    _common(p, need_data=False)
    _add_keys(p, SYNTH_KEYS)

    p = sub.add_parser("init", help="train skip-gram initial vectors")
    _common(p)
    _add_keys(p, INIT_KEYS)

    p = sub.add_parser("train", help="train the triplet model and write a checkpoint")
    _common(p)
    p.add_argument("--init", type=Path, help="reuse vectors written by 'init'")
    _add_keys(p, TRAIN_KEYS)

    p = sub.add_parser("recommend", help="recommend tracks from a checkpoint")
    _common(p, need_out=False)
    p.add_argument("--checkpoint", type=Path, required=True)
    who = p.add_mutually_exclusive_group(required=True)
    who.add_argument("--user", help="single user id; prints 'track_id distance' lines")
    who.add_argument("--users-file", type=Path, help="one user id per line; writes recommendations.csv")
    p.add_argument("--include-history", action="store_true",
                   help="allow tracks from the user's own history")
    _add_keys(p, ["k", "candidate_pool"])

    p = sub.add_parser("eval", help="cross-fold evaluation report")
    _common(p)
    p.add_argument("--checkpoints", type=Path, help="directory of fold<i>.vec tables to load")
    _add_keys(p, EVAL_KEYS)

    p = sub.add_parser("ablate", help="full approach vs. the four ablations")
    _common(p)
    _add_keys(p, EVAL_KEYS)
    return parser


def _resolve(args: argparse.Namespace) -> RunConfig:
    overrides = {k: v for k, v in vars(args).items() if k in _TYPES and v is not None}
    return config_mod.resolve(args.config, overrides)


def _setup_logging() -> None:
    level = os.environ.get("TRIPLETREC_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _prepare_out(out: Path | None, cfg: RunConfig) -> None:
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        cfg.write(out / "config.txt")


def cmd_synth(args, cfg: RunConfig) -> int:
    store = generate_planted(
        num_groups=cfg.groups,
        users_per_group=cfg.users_per_group,
        artists_per_group=cfg.artists_per_group,
        tracks_per_artist=cfg.tracks_per_artist,
        interactions_per_user=cfg.interactions_per_user,
        crossover_rate=cfg.crossover_rate,
        seed=cfg.seed,
        communities_per_group=cfg.communities_per_group,
        taste_concentration=cfg.taste_concentration,
    )
    write_store(store, args.out)
    print(f"wrote {store!r} to {args.out}")
    return 0


def cmd_init(args, cfg: RunConfig) -> int:
    store = load_store_dir(args.data)
    init = fit_skipgram(store, cfg)
    init.save(args.out / "init.vec")
    print(f"wrote {len(init.tokens)} token vectors (d={init.d}) to {args.out / 'init.vec'}")
    return 0


def cmd_train(args, cfg: RunConfig) -> int:
    store = load_store_dir(args.data)
    init = InitEmbeddings.load(args.init) if args.init and not cfg.no_w2v_init else None
    table0, table, trace = fit_model(store, cfg, init)
    user_ids = [u.user_id for u in store.users]
    track_ids = [t.track_id for t in store.tracks]
    save_table(args.out / "initial.vec", table0, user_ids, track_ids)
    save_table(args.out / "checkpoint.vec", table, user_ids, track_ids)
    with open(args.out / "loss_trace.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "total", "term_user_item", "term_user_user", "term_item_item", "active_fraction"])
        for epoch, lb in enumerate(trace):
            w.writerow([epoch, repr(lb.total), repr(lb.term_user_item), repr(lb.term_user_user),
                        repr(lb.term_item_item), repr(lb.active_fraction)])
    if trace:
        print(f"epoch 0 loss {trace[0].total:.4f} -> epoch {len(trace) - 1} loss {trace[-1].total:.4f}")
    print(f"wrote checkpoint to {args.out / 'checkpoint.vec'}")
    return 0


def cmd_recommend(args, cfg: RunConfig) -> int:
    store = load_store_dir(args.data)
    table = load_table(args.checkpoint, [u.user_id for u in store.users],
                       [t.track_id for t in store.tracks])
    if args.user is not None:
        if args.user not in store.user_pos:
            raise DataError(f"unknown user {args.user!r}")
        u = store.user_pos[args.user]
        exclude = None if args.include_history else store.user_tracks(u)
        rec = recommend(table, u, cfg.k, cfg.candidate_pool, cfg.seed, exclude)
        for t, dist in zip(rec.tracks, rec.distances):
            print(f"{store.tracks[t].track_id} {float(dist)!r}")
        return 0

    wanted = [line.strip() for line in args.users_file.read_text(encoding="utf-8").splitlines() if line.strip()]
    unknown = [w for w in wanted if w not in store.user_pos]
    if unknown:
        raise DataError(f"unknown users {unknown[:5]}")
    users = [store.user_pos[w] for w in wanted]
    recs = recommend_all(table, store, users, cfg.k, cfg.candidate_pool, cfg.seed,
                         exclude_history=not args.include_history)
    out_dir = args.out or Path(".")
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "recommendations.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["user_id", "rank", "track_id", "distance"])
        for u in users:
            for rank, (t, dist) in enumerate(zip(recs[u].tracks, recs[u].distances), start=1):
                w.writerow([store.users[u].user_id, rank, store.tracks[t].track_id, repr(float(dist))])
    print(f"wrote {path}")
    return 0


def cmd_eval(args, cfg: RunConfig) -> int:
    store = load_store_dir(args.data)
    save = None if args.checkpoints else args.out / "checkpoints"
    report = evaluate(store, cfg, checkpoints=args.checkpoints, save_checkpoints=save)
    jpath, _ = write_report(report, args.out)
    cons = report["consistency"]
    for f in report["folds"]:
        print(f"fold {f['fold_id']}: hit_rate {f['hit_rate']:.4f} mrr {f['mrr']:.4f}")
    if cons and cons["overall"] is not None:
        print(f"overall consistency {cons['overall']:.4f}")
    print(f"wrote {jpath}")
    return 0


def cmd_ablate(args, cfg: RunConfig) -> int:
    store = load_store_dir(args.data)
    rows = ablate(store, cfg)
    columns = ["variant"] + METRIC_COLUMNS + ["consistency", "variance_agreement"]
    with open(args.out / "ablation.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([row["variant"]] + ["" if row[c] is None else repr(row[c]) for c in columns[1:]])
    (args.out / "ablation.json").write_text(json.dumps(rows, indent=2) + "\n", encoding="utf-8")
    width = max(len(label) for label, _ in ABLATIONS)
    print(f"{'variant':<{width}}  hit_rate    mrr  consistency")
    for row in rows:
        cons = "n/a" if row["consistency"] is None else f"{row['consistency']:.4f}"
        print(f"{row['variant']:<{width}}  {row['hit_rate']:.4f}  {row['mrr']:.4f}  {cons}")
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "init": cmd_init,
    "train": cmd_train,
    "recommend": cmd_recommend,
    "eval": cmd_eval,
    "ablate": cmd_ablate,
}


def main(argv: list[str] | None = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = _resolve(args)
    except (ValueError, KeyError, OSError) as exc:
        parser.error(str(exc))
    _prepare_out(args.out, cfg)
    try:
        return COMMANDS[args.command](args, cfg)
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return 1
    except (DataError, SamplingError, ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
