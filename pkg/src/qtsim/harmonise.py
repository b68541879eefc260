"""Region CSV ingest: column mapping, schema intersection, imputation, label encoding.

Rows are kept as plain dicts keyed by harmonised column name; a missing cell
is ``None`` until :func:`impute` fills it.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError, SchemaError, UsageError

log = logging.getLogger(__name__)

# Core feature catalogue shared by both regions.
CORE_COLUMNS = (
    "distance",
    "flight_date",
    "tail_number",
    "airline",
    "depart_from_iata",
    "arrive_at_iata",
    "scheduled_departure_utc",
    "actual_departure_utc",
    "departure_delay_minutes",
    "scheduled_arrival_utc",
    "scheduled_estimated_time",
    "arrival_delay_minutes",
)
WEATHER_COLUMN = "weather_delay"
TARGET_COLUMN = "arrival_delay_minutes"
TIMESTAMP_COLUMNS = ("scheduled_departure_utc", "actual_departure_utc", "scheduled_arrival_utc")
DATE_COLUMNS = ("flight_date",)
CATEGORICAL_COLUMNS = ("airline", "depart_from_iata", "arrive_at_iata")
IDENTIFIER_COLUMNS = ("tail_number",)
UNK_TOKEN = "<UNK>"
UNK_ID = 0

_EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)


@dataclass
class SchemaProfile:
    """How one region's raw export maps onto harmonised column names."""

    region: str
    mapping: dict[str, str]
    present: list[str] = field(default_factory=list)
    shared: list[str] | None = None

    @classmethod
    def load(cls, path: str | Path) -> "SchemaProfile":
        try:
            raw = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: schema profile is not valid JSON: {exc}") from None
        try:
            return cls(
                region=raw["region"],
                mapping=dict(raw["mapping"]),
                present=list(raw.get("present", raw["mapping"].keys())),
                shared=raw.get("shared"),
            )
        except KeyError as exc:
            raise SchemaError(f"{path}: schema profile lacks key {exc}") from None

    def save(self, path: str | Path) -> None:
        body = {"region": self.region, "mapping": self.mapping, "present": self.present}
        if self.shared is not None:
            body["shared"] = self.shared
        Path(path).write_text(json.dumps(body, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def harmonised_columns(self) -> list[str]:
        return [self.mapping.get(c, c) for c in self.present]


def intersect_schemas(us_cols: Sequence[str], eu_cols: Sequence[str]) -> list[str]:
    """Sorted shared columns; the one-sided weather column never enters the result."""
    if not us_cols or not eu_cols:
        raise SchemaError("both schemas must list at least one column")
    shared = (set(us_cols) & set(eu_cols)) - {WEATHER_COLUMN}
    if not shared:
        raise SchemaError("schemas share no columns")
    return sorted(shared)


@dataclass
class Batch:
    columns: list[str]
    rows: list[dict]

    def __len__(self) -> int:
        return len(self.rows)

    def column(self, name: str) -> list:
        return [r[name] for r in self.rows]


# -- CSV -----------------------------------------------------------------------


def read_csv(path: str | Path) -> Batch:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file or missing header row")
        rows = [{k: (v if v != "" else None) for k, v in row.items()} for row in reader]
    return Batch(list(reader.fieldnames), rows)


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isfinite(value) and value == int(value):
            return str(int(value))
        return repr(value)
    return str(value)


def write_csv(batch: Batch, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(batch.columns)
        for row in batch.rows:
            writer.writerow([_format(row[c]) for c in batch.columns])


# -- parsing -----------------------------------------------------------------------


def parse_timestamp(value) -> int | None:
    """Minutes since the Unix epoch (UTC). Accepts integers or ISO-8601 strings."""
    if value is None:
        return None
    if isinstance(value, (int, float)):
        return int(value)
    text = str(value).strip()
    try:
        return int(float(text))
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        raise DataError(f"unparseable timestamp {value!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int((dt - _EPOCH).total_seconds() // 60)


def parse_date(value) -> str | None:
    if value is None:
        return None
    text = str(value).strip()
    try:
        return date.fromisoformat(text[:10]).isoformat()
    except ValueError:
        raise DataError(f"unparseable date {value!r}") from None


def parse_number(value) -> float | None:
    if value is None:
        return None
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise DataError(f"non-numeric value {value!r}") from None
    if not math.isfinite(number):
        return None
    return number


def column_kind(name: str) -> str:
    if name in TIMESTAMP_COLUMNS:
        return "timestamp"
    if name in DATE_COLUMNS:
        return "date"
    if name in CATEGORICAL_COLUMNS:
        return "categorical"
    if name in IDENTIFIER_COLUMNS:
        return "identifier"
    return "numeric"


_PARSERS = {
    "timestamp": parse_timestamp,
    "date": parse_date,
    "numeric": parse_number,
    "categorical": lambda v: None if v is None else str(v).strip() or None,
    "identifier": lambda v: None if v is None else str(v).strip() or None,
}


# -- harmonisation -------------------------------------------------------------------


def harmonise(
    raw: Batch,
    profile: SchemaProfile,
    shared: Sequence[str] | None = None,
    keep_weather: bool = False,
) -> Batch:
    """Rename, restrict to the shared schema, parse types and impute gaps.

    ``shared`` defaults to the profile's ``shared`` list, else the core
    columns. With ``keep_weather`` the weather column is appended and
    zero-filled when the region has none.
    """
    renamed = {profile.mapping.get(c, c): c for c in raw.columns}
    sigma = sorted(shared if shared is not None else (profile.shared or CORE_COLUMNS))
    missing = [c for c in sigma if c not in renamed]
    if missing:
        raise SchemaError(f"region {profile.region!r} lacks shared columns {missing}")
    columns = list(sigma) + ([WEATHER_COLUMN] if keep_weather else [])
    parsers = {c: _PARSERS[column_kind(c)] for c in columns}
    rows = []
    for raw_row in raw.rows:
        row = {}
        for col in columns:
            src = renamed.get(col)
            row[col] = parsers[col](raw_row.get(src)) if src is not None else None
        rows.append(row)
    out = impute(Batch(columns, rows))
    bad = check_departure_consistency(out)
    if bad:
        log.warning("%d rows have actual - scheduled departure != departure delay", bad)
    return out


def impute(batch: Batch) -> Batch:
    """Fill every gap: 0 for continuous columns, the UNK token for categoricals.

    A missing flight date is taken from the scheduled departure. Rows are
    never dropped and present values never change.
    """
    rows = []
    for row in batch.rows:
        filled = dict(row)
        for col in batch.columns:
            if filled[col] is not None:
                continue
            kind = column_kind(col)
            if kind in ("categorical", "identifier"):
                filled[col] = UNK_TOKEN
            elif kind == "date":
                sched = filled.get("scheduled_departure_utc") or row.get("scheduled_departure_utc")
                if sched is None:
                    raise DataError("row has neither flight_date nor scheduled departure")
                filled[col] = date.fromordinal(date(1970, 1, 1).toordinal() + int(sched) // 1440).isoformat()
            elif kind == "timestamp":
                filled[col] = 0
            else:
                filled[col] = 0.0
        rows.append(filled)
    return Batch(list(batch.columns), rows)


def check_departure_consistency(batch: Batch) -> int:
    needed = ("scheduled_departure_utc", "actual_departure_utc", "departure_delay_minutes")
    if not all(c in batch.columns for c in needed):
        return 0
    bad = 0
    for r in batch.rows:
        s, a, d = (r[c] for c in needed)
        if s and a and d is not None and a - s != d:
            bad += 1
    return bad


# -- vocabulary ----------------------------------------------------------------------


class Vocabulary:
    """Per-column token -> id maps; id 0 is reserved for unknown tokens."""

    def __init__(self, maps: dict[str, dict[str, int]] | None = None):
        self.maps = maps

    @property
    def fitted(self) -> bool:
        return self.maps is not None

    @classmethod
    def fit(cls, batch: Batch, columns: Iterable[str] = CATEGORICAL_COLUMNS) -> "Vocabulary":
        maps: dict[str, dict[str, int]] = {}
        for col in columns:
            if col not in batch.columns:
                continue
            ids: dict[str, int] = {}
            for token in batch.column(col):
                if token is None or token == UNK_TOKEN or token in ids:
                    continue
                ids[token] = len(ids) + 1
            maps[col] = ids
        return cls(maps)

    def encode_token(self, column: str, token) -> int:
        if not self.fitted:
            raise UsageError("vocabulary must be fitted before encoding")
        return self.maps[column].get(token, UNK_ID)

    def decode(self, column: str, idx: int) -> str:
        if not self.fitted:
            raise UsageError("vocabulary must be fitted before decoding")
        for token, i in self.maps[column].items():
            if i == idx:
                return token
        return UNK_TOKEN

    def encode(self, batch: Batch) -> Batch:
        if not self.fitted:
            raise UsageError("vocabulary must be fitted before encoding")
        cols = [c for c in self.maps if c in batch.columns]
        rows = []
        for row in batch.rows:
            enc = dict(row)
            for c in cols:
                enc[c] = self.maps[c].get(row[c], UNK_ID)
            rows.append(enc)
        return Batch(list(batch.columns), rows)

    def to_json(self) -> str:
        return json.dumps(self.maps, indent=2, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        return cls({col: {tok: int(i) for tok, i in m.items()} for col, m in json.loads(text).items()})

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))
