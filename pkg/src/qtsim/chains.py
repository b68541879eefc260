"""Flight-chain extraction, ordinal labelling, splitting and the .qtc file format."""

from __future__ import annotations

import bisect
import json
import logging
import math
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, DataError, SchemaError
from .harmonise import (
    CATEGORICAL_COLUMNS,
    DATE_COLUMNS,
    IDENTIFIER_COLUMNS,
    TARGET_COLUMN,
    TIMESTAMP_COLUMNS,
    Batch,
    read_csv,
)

log = logging.getLogger(__name__)

LABEL_BINS = (15, 60, 120, 240)
N_CLASSES = len(LABEL_BINS) + 1
MAGIC = "QTCHAIN1"
PARTITIONS = ("train", "val", "test")
SPLIT_MODES = ("stratified", "tail-day-disjoint")
_EXCLUDED = set(IDENTIFIER_COLUMNS) | {TARGET_COLUMN}
_EPOCH_ORDINAL = date(1970, 1, 1).toordinal()


@dataclass
class ChainConfig:
    length: int = 3
    tau_min: float = 15.0
    tau_max: float = 720.0
    ratios: tuple[int, int, int] = (70, 15, 15)
    split_mode: str = "stratified"
    seed: int = 42

    def validate(self) -> None:
        if self.length < 2:
            raise ConfigError("chain.length must be >= 2")
        if not 0 < self.tau_min < self.tau_max:
            raise ConfigError(f"need 0 < tau_min < tau_max, got {self.tau_min}, {self.tau_max}")
        if len(self.ratios) != 3 or sum(self.ratios) != 100 or min(self.ratios) < 0:
            raise ConfigError(f"chain.ratios must be three non-negative numbers summing to 100, got {self.ratios}")
        if self.split_mode not in SPLIT_MODES:
            raise ConfigError(f"chain.split_mode must be one of {SPLIT_MODES}")


def bin_label(delay_minutes: float) -> int:
    """Ordinal class of an arrival delay: (-inf,15], (15,60], (60,120], (120,240], (240,inf)."""
    return bisect.bisect_left(LABEL_BINS, delay_minutes)


# -- legs ------------------------------------------------------------------------------


@dataclass
class Leg:
    tail: str
    day: str
    sched_dep: int
    actual_dep: int
    sched_arr: int
    arr_delay: float
    features: np.ndarray
    order: int = 0

    @property
    def dep(self) -> int:
        # imputed (zero) actual times fall back to the schedule
        return self.actual_dep if self.actual_dep else self.sched_dep

    @property
    def arr(self) -> float:
        return self.sched_arr + self.arr_delay


def feature_registry(columns: Sequence[str]) -> list[str]:
    """Model input columns in harmonised order: everything but the identifier and the target."""
    return [c for c in columns if c not in _EXCLUDED]


def _feature_value(col: str, row: dict, day_start: int) -> float:
    value = row[col]
    if col in DATE_COLUMNS:
        return float(date.fromisoformat(value).toordinal() - _EPOCH_ORDINAL)
    if col in TIMESTAMP_COLUMNS:
        # minutes after the operating day's midnight keeps float32 exact
        return float(int(value) - day_start) if value else 0.0
    return float(value)


def legs_from_batch(batch: Batch, feature_names: Sequence[str]) -> list[Leg]:
    needed = ("tail_number", "flight_date", "scheduled_departure_utc", "actual_departure_utc",
              "scheduled_arrival_utc", TARGET_COLUMN)
    missing = [c for c in needed if c not in batch.columns]
    if missing:
        raise SchemaError(f"harmonised batch lacks columns {missing}")
    legs = []
    for i, row in enumerate(batch.rows):
        day = row["flight_date"]
        day_start = (date.fromisoformat(day).toordinal() - _EPOCH_ORDINAL) * 1440
        feats = np.array([_feature_value(c, row, day_start) for c in feature_names], dtype=np.float64)
        legs.append(Leg(
            tail=str(row["tail_number"]),
            day=day,
            sched_dep=int(row["scheduled_departure_utc"]),
            actual_dep=int(row["actual_departure_utc"]),
            sched_arr=int(row["scheduled_arrival_utc"]),
            arr_delay=float(row[TARGET_COLUMN]),
            features=feats,
            order=i,
        ))
    return legs


def group_sort(legs: Iterable[Leg]) -> dict[tuple[str, str], list[Leg]]:
    """Blocks keyed by (tail, date) in key order; legs by scheduled then actual departure."""
    blocks: dict[tuple[str, str], list[Leg]] = defaultdict(list)
    for leg in legs:
        blocks[(leg.tail, leg.day)].append(leg)
    return {
        key: sorted(blocks[key], key=lambda g: (g.sched_dep, g.dep, g.order))
        for key in sorted(blocks)
    }


# -- chains ------------------------------------------------------------------------------


@dataclass
class FlightChain:
    X: np.ndarray
    y: int
    provenance: tuple[str, str, int]


def turnaround_ok(prev: Leg, nxt: Leg, cfg: ChainConfig) -> bool:
    ground = nxt.dep - prev.arr
    return ground >= cfg.tau_min and ground <= cfg.tau_max


def extract_chains(block: Sequence[Leg], cfg: ChainConfig | None = None) -> list[FlightChain]:
    """Every stride-1 window of ``cfg.length`` legs whose turnarounds are all feasible."""
    cfg = cfg or ChainConfig()
    ok = [turnaround_ok(block[k], block[k + 1], cfg) for k in range(len(block) - 1)]
    chains = []
    for j in range(len(block) - cfg.length + 1):
        if not all(ok[j:j + cfg.length - 1]):
            continue
        window = block[j:j + cfg.length]
        chains.append(FlightChain(
            X=np.stack([leg.features for leg in window]),
            y=bin_label(window[-1].arr_delay),
            provenance=(window[0].tail, window[0].day, j),
        ))
    return chains


@dataclass
class ChainSet:
    X: np.ndarray  # (N, L, p) float32
    y: np.ndarray  # (N,) uint8
    feature_names: list[str]
    provenance: list[tuple[str, str, int]]
    splits: dict[str, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.y)

    def subset(self, idx: Sequence[int]) -> "ChainSet":
        idx = np.asarray(idx, dtype=np.int64)
        return ChainSet(self.X[idx], self.y[idx], list(self.feature_names), [self.provenance[i] for i in idx])

    def partition(self, name: str) -> "ChainSet":
        if name == "all":
            return self.subset(range(len(self)))
        if name not in PARTITIONS:
            raise ConfigError(f"unknown partition {name!r}")
        if not self.splits:
            raise DataError("chain set carries no split information")
        start = 0
        for part in PARTITIONS:
            n = self.splits.get(part, 0)
            if part == name:
                return self.subset(range(start, start + n))
            start += n
        raise AssertionError("unreachable")

    @classmethod
    def from_chains(cls, chains: Sequence[FlightChain], feature_names: Sequence[str]) -> "ChainSet":
        p = len(feature_names)
        if chains:
            X = np.stack([c.X for c in chains]).astype(np.float32)
        else:
            X = np.zeros((0, 3, p), dtype=np.float32)
        y = np.array([c.y for c in chains], dtype=np.uint8)
        return cls(X, y, list(feature_names), [c.provenance for c in chains])

    @classmethod
    def concat_partitions(cls, train: "ChainSet", val: "ChainSet", test: "ChainSet") -> "ChainSet":
        parts = (train, val, test)
        return cls(
            np.concatenate([p.X for p in parts]),
            np.concatenate([p.y for p in parts]),
            list(train.feature_names),
            [prov for p in parts for prov in p.provenance],
            {name: len(p) for name, p in zip(PARTITIONS, parts)},
        )


def build_chains(batch: Batch, cfg: ChainConfig | None = None) -> ChainSet:
    cfg = cfg or ChainConfig()
    cfg.validate()
    names = feature_registry(batch.columns)
    chains = []
    for block in group_sort(legs_from_batch(batch, names)).values():
        chains.extend(extract_chains(block, cfg))
    return ChainSet.from_chains(chains, names)


# -- splitting ---------------------------------------------------------------------------


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def split(chains: ChainSet, cfg: ChainConfig | None = None) -> tuple[ChainSet, ChainSet, ChainSet]:
    """Seeded train/val/test partition; disjoint and exhaustive."""
    cfg = cfg or ChainConfig()
    cfg.validate()
    if len(chains) == 0:
        raise DataError("cannot split an empty chain set")
    rng = np.random.default_rng(cfg.seed)
    r_train, r_val, _ = cfg.ratios
    parts: dict[str, list[int]] = {p: [] for p in PARTITIONS}
    if cfg.split_mode == "stratified":
        for label in range(N_CLASSES):
            members = np.flatnonzero(chains.y == label)
            if len(members) == 0:
                continue
            if len(members) < 3:
                log.warning("label %d has only %d chains; keeping all of them in train", label, len(members))
                parts["train"].extend(members.tolist())
                continue
            members = rng.permutation(members)
            n_train = _round_half_up(len(members) * r_train / 100)
            n_val = min(_round_half_up(len(members) * r_val / 100), len(members) - n_train)
            parts["train"].extend(members[:n_train].tolist())
            parts["val"].extend(members[n_train:n_train + n_val].tolist())
            parts["test"].extend(members[n_train + n_val:].tolist())
    else:
        groups: dict[tuple[str, str], list[int]] = defaultdict(list)
        for i, (tail, day, _) in enumerate(chains.provenance):
            groups[(tail, day)].append(i)
        keys = sorted(groups)
        order = rng.permutation(len(keys))
        n = len(chains)
        train_cut = n * r_train / 100
        val_cut = n * (r_train + r_val) / 100
        assigned = 0
        for k in order:
            members = groups[keys[k]]
            if assigned < train_cut:
                target = "train"
            elif assigned < val_cut:
                target = "val"
            else:
                target = "test"
            parts[target].extend(members)
            assigned += len(members)
    return tuple(chains.subset(sorted(parts[p])) for p in PARTITIONS)  # type: ignore[return-value]


# -- .qtc file format ------------------------------------------------------------------------


def dumps(chains: ChainSet) -> bytes:
    n, seq_len, p = chains.X.shape
    header = {
        "magic": MAGIC,
        "n_chains": int(n),
        "seq_len": int(seq_len),
        "n_features": int(p),
        "feature_names": list(chains.feature_names),
        "label_bins": list(LABEL_BINS),
        "splits": {k: int(v) for k, v in chains.splits.items()},
        "provenance": [list(prov) for prov in chains.provenance],
    }
    line = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = np.ascontiguousarray(chains.X, dtype="<f4").tobytes()
    labels = np.ascontiguousarray(chains.y, dtype=np.uint8).tobytes()
    return line + b"\n" + payload + labels


def loads(blob: bytes) -> ChainSet:
    newline = blob.find(b"\n")
    try:
        header = json.loads(blob[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise SchemaError("chain file header is not valid JSON") from None
    if header.get("magic") != MAGIC:
        raise SchemaError(f"not a chain dataset (magic={header.get('magic')!r})")
    n, seq_len, p = header["n_chains"], header["seq_len"], header["n_features"]
    if len(header["feature_names"]) != p:
        raise SchemaError("feature_names length disagrees with n_features")
    body = blob[newline + 1:]
    n_float = n * seq_len * p
    if len(body) != n_float * 4 + n:
        raise DataError(f"chain payload has {len(body)} bytes, expected {n_float * 4 + n}")
    X = np.frombuffer(body[:n_float * 4], dtype="<f4").reshape(n, seq_len, p).astype(np.float32)
    y = np.frombuffer(body[n_float * 4:], dtype=np.uint8).copy()
    if y.size and y.max() >= N_CLASSES:
        raise DataError(f"label {y.max()} outside 0..{N_CLASSES - 1}")
    prov = [(str(t), str(d), int(j)) for t, d, j in header.get("provenance", [])] or [("", "", i) for i in range(n)]
    return ChainSet(X, y, list(header["feature_names"]), prov, dict(header.get("splits", {})))


def save(path: str | Path, chains: ChainSet) -> None:
    Path(path).write_bytes(dumps(chains))


def load(path: str | Path) -> ChainSet:
    return loads(Path(path).read_bytes())


# -- harmonised CSV reader ------------------------------------------------------------------------


def read_harmonised(path: str | Path) -> Batch:
    """Load a harmonised CSV written by the harmonise stage, restoring value types."""
    batch = read_csv(path)
    rows = []
    for raw in batch.rows:
        row = {}
        for col in batch.columns:
            value = raw[col]
            if value is None:
                raise DataError(f"{path}: harmonised file has a gap in column {col!r}")
            if col in DATE_COLUMNS or col in IDENTIFIER_COLUMNS:
                row[col] = value
            elif col in TIMESTAMP_COLUMNS or col in CATEGORICAL_COLUMNS:
                try:
                    row[col] = int(value)
                except ValueError:
                    raise DataError(f"{path}: column {col!r} holds non-integer {value!r}") from None
            else:
                try:
                    row[col] = float(value)
                except ValueError:
                    raise DataError(f"{path}: column {col!r} holds non-numeric {value!r}") from None
        rows.append(row)
    return Batch(batch.columns, rows)
