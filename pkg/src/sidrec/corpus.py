"""Interaction-log ingestion, leave-one-out splits, and sliding-window instances.

Interaction files are UTF-8 TSV lines ``user_id<TAB>item_id<TAB>timestamp``;
the catalog is a JSON list of item id strings. Per user, the most recent
item is held out for test, the second most recent for validation, and the
rest form the train prefix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ConfigError, ContractViolation, DataError

MIN_INTERACTIONS = 3  # leave-one-out needs at least train/valid/test


@dataclass(frozen=True)
class TrainingInstance:
    history: tuple[str, ...]
    target: str


@dataclass
class InteractionLog:
    """Per-user item sequences, timestamp-ascending, ties in input order."""

    sequences: dict[str, list[str]]  # user -> items, chronological

    @property
    def users(self) -> list[str]:
        return list(self.sequences)

    @property
    def n_records(self) -> int:
        return sum(len(s) for s in self.sequences.values())


@dataclass
class SplitSpec:
    """Leave-one-out partition: train prefix, validation target, test target."""

    train: dict[str, list[str]]
    valid: dict[str, str]
    test: dict[str, str]


def load_catalog(path: str | Path) -> list[str]:
    """JSON list of item ids; order defines the canonical catalog order."""
    try:
        ids = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise DataError(f"catalog {path} is not valid JSON: {e}") from e
    if not isinstance(ids, list) or not all(isinstance(i, str) for i in ids):
        raise DataError(f"catalog {path} must be a JSON list of item id strings")
    if len(set(ids)) != len(ids):
        raise DataError(f"catalog {path} contains duplicate item ids")
    return ids


def load_interactions(path: str | Path, catalog: set[str] | list[str]) -> InteractionLog:
    """Parse a TSV log, group by user, sort by timestamp (input order on ties),
    and drop users with fewer than MIN_INTERACTIONS records."""
    catalog = set(catalog)
    raw: dict[str, list[tuple[int, int, str]]] = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 3:
                raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
            user, item, ts_str = parts
            try:
                ts = int(ts_str)
            except ValueError:
                raise DataError(f"{path}:{lineno}: timestamp {ts_str!r} is not an integer") from None
            if item not in catalog:
                raise DataError(f"{path}:{lineno}: item {item!r} not in catalog")
            raw.setdefault(user, []).append((ts, lineno, item))

    sequences: dict[str, list[str]] = {}
    for user, recs in raw.items():
        if len(recs) < MIN_INTERACTIONS:
            continue
        recs.sort(key=lambda r: (r[0], r[1]))  # stable tie-break by input line
        sequences[user] = [item for _, _, item in recs]
    return InteractionLog(sequences=sequences)


def build_splits(log: InteractionLog) -> SplitSpec:
    """Per user: all-but-last-two train, second-most-recent valid, most-recent test."""
    train: dict[str, list[str]] = {}
    valid: dict[str, str] = {}
    test: dict[str, str] = {}
    for user, seq in log.sequences.items():
        if len(seq) < MIN_INTERACTIONS:
            raise ContractViolation(f"user {user!r} has {len(seq)} interactions; expected >= {MIN_INTERACTIONS}")
        train[user] = list(seq[:-2])
        valid[user] = seq[-2]
        test[user] = seq[-1]
    return SplitSpec(train=train, valid=valid, test=test)


def make_training_instances(log: InteractionLog, split: SplitSpec, max_history: int) -> list[TrainingInstance]:
    """Sliding-window next-item instances over each user's train prefix.

    Every proper prefix [x1..xk] (k < n), truncated to its last ``max_history``
    items, targets x(k+1).
    """
    if max_history < 1:
        raise ConfigError("max_history must be >= 1")
    instances: list[TrainingInstance] = []
    for user in split.train:
        prefix = split.train[user]
        for k in range(1, len(prefix)):
            history = tuple(prefix[max(0, k - max_history):k])
            instances.append(TrainingInstance(history=history, target=prefix[k]))
    return instances


def make_eval_instances(split: SplitSpec, max_history: int, which: str) -> dict[str, TrainingInstance]:
    """Validation/test instances: the full train prefix (last ``max_history``
    items) with the held-out target. Keyed by user."""
    if max_history < 1:
        raise ConfigError("max_history must be >= 1")
    if which not in ("valid", "test"):
        raise ConfigError("which must be 'valid' or 'test'")
    targets = split.valid if which == "valid" else split.test
    out: dict[str, TrainingInstance] = {}
    for user, target in targets.items():
        prefix = split.train[user]
        out[user] = TrainingInstance(history=tuple(prefix[-max_history:]), target=target)
    return out
