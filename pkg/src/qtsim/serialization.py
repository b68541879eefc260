"""Parameter checkpoint format.

Layout: one line of JSON (the manifest), a newline, then every tensor as
little-endian float32, concatenated in manifest order. Each manifest entry
records ``name``, ``shape`` and the byte ``offset`` into the payload.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import SchemaError

MAGIC = "QTPARAM1"
_LE_F32 = np.dtype("<f4")


def dumps(tensors: Mapping[str, np.ndarray], meta: Mapping[str, Any] | None = None) -> bytes:
    entries = []
    chunks = []
    offset = 0
    for name, arr in tensors.items():
        buf = np.ascontiguousarray(arr, dtype=_LE_F32).tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        chunks.append(buf)
        offset += len(buf)
    header = {"format": MAGIC, "tensors": entries, "meta": dict(meta or {})}
    line = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return line + b"\n" + b"".join(chunks)


def loads(blob: bytes) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    newline = blob.find(b"\n")
    if newline < 0:
        raise SchemaError("checkpoint has no manifest line")
    try:
        header = json.loads(blob[:newline].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise SchemaError(f"checkpoint manifest is not valid JSON: {exc}") from None
    if header.get("format") != MAGIC:
        raise SchemaError(f"not a parameter checkpoint (format={header.get('format')!r})")
    payload = memoryview(blob)[newline + 1:]
    tensors = {}
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape, dtype=np.int64))
        start = entry["offset"]
        end = start + count * 4
        if end > len(payload):
            raise SchemaError(f"checkpoint payload truncated at tensor {entry['name']!r}")
        tensors[entry["name"]] = np.frombuffer(payload[start:end], dtype=_LE_F32).reshape(shape).astype(np.float32)
    return tensors, header.get("meta", {})


def save(path: str | Path, tensors: Mapping[str, np.ndarray], meta: Mapping[str, Any] | None = None) -> None:
    Path(path).write_bytes(dumps(tensors, meta))


def load(path: str | Path) -> tuple[dict[str, np.ndarray], dict[str, Any]]:
    return loads(Path(path).read_bytes())
