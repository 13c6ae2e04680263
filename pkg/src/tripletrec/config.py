"""Flat run configuration: defaults < ``key = value`` file < command-line flags."""

from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Any, Mapping

from .trainer import TrainConfig
from .weighting import DEFAULT_THETA


@dataclass
class RunConfig:
    seed: int = 0
    workers: int = 1

    # trainer
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

    # weighting
    theta_gender: float = DEFAULT_THETA["gender"]
    theta_country: float = DEFAULT_THETA["country"]
    theta_artist: float = DEFAULT_THETA["artist"]
    theta_song: float = DEFAULT_THETA["song"]
    theta_activity: float = DEFAULT_THETA["activity"]

    # skip-gram initialisation; w2v_window = 0 means the whole sentence
    w2v_negatives: int = 5
    w2v_epochs: int = 20
    w2v_lr: float = 0.025
    w2v_window: int = 0
    max_users_per_sentence: int = 256

    # recommendation and evaluation
    k: int = 100
    candidate_pool: int = 1000
    k_folds: int = 4
    min_group_size: int = 10
    consistency_squared: bool = False
    fixed_fold_seed: bool = False

    # synthetic data
    groups: int = 4
    users_per_group: int = 125
    artists_per_group: int = 50
    tracks_per_artist: int = 10
    interactions_per_user: int = 40
    crossover_rate: float = 0.1
    communities_per_group: int = 25
    taste_concentration: float = 5.0

    @property
    def theta(self) -> dict[str, float]:
        return {
            "gender": self.theta_gender,
            "country": self.theta_country,
            "artist": self.theta_artist,
            "song": self.theta_song,
            "activity": self.theta_activity,
        }

    def train_config(self) -> TrainConfig:
        names = {f.name for f in fields(TrainConfig)}
        return TrainConfig(**{n: getattr(self, n) for n in names})

    def replace(self, **changes) -> "RunConfig":
        return RunConfig(**{**asdict(self), **changes})

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in asdict(self).items())

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_text(), encoding="utf-8")


def _fmt(v: Any) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


_TYPES = {f.name: f.type for f in fields(RunConfig)}


def coerce(key: str, raw: Any) -> Any:
    if key not in _TYPES:
        raise KeyError(f"unknown config key {key!r}")
    kind = _TYPES[key]
    if not isinstance(raw, str):
        return raw
    raw = raw.strip()
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    out = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (p.strip() for p in line.split("=", 1))
        try:
            out[key] = coerce(key, value)
        except (KeyError, ValueError) as exc:
            raise ValueError(f"{source}:{lineno}: {exc}") from None
    return out


def resolve(file: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> RunConfig:
    values: dict[str, Any] = {}
    if file is not None:
        values.update(parse_config_text(Path(file).read_text(encoding="utf-8"), str(file)))
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = coerce(key, value)
    return RunConfig(**values)
