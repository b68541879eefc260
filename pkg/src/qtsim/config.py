"""Flat ``section.key`` run configuration shared by every CLI stage.

A config file is either a JSON object (flat dotted keys or one level of
sections) or ``key = value`` lines. Flags override file values, unknown keys
are rejected, and :meth:`RunConfig.to_json` gives the resolved echo written
next to every run's outputs.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path
from typing import Any, Mapping

from .attention import AttentionConfig
from .chains import ChainConfig
from .errors import ConfigError
from .models import ModelConfig
from .queue import QueueConfig
from .recurrent import LSTMConfig
from .synthetic import SynthConfig
from .train import TrainConfig


@dataclasses.dataclass
class HarmoniseConfig:
    keep_weather: bool = False


_NESTED_MODEL_FIELDS = {"lstm", "attention", "queue"}

SECTIONS: dict[str, type] = {
    "synth": SynthConfig,
    "harmonise": HarmoniseConfig,
    "chain": ChainConfig,
    "queue": QueueConfig,
    "attention": AttentionConfig,
    "lstm": LSTMConfig,
    "model": ModelConfig,
    "train": TrainConfig,
}


def _defaults() -> dict[str, Any]:
    out = {}
    for section, cls in SECTIONS.items():
        for f in dataclasses.fields(cls()):
            if section == "model" and f.name in _NESTED_MODEL_FIELDS:
                continue
            out[f"{section}.{f.name}"] = getattr(cls(), f.name)
    return out


def _coerce(key: str, value: Any, default: Any) -> Any:
    try:
        if isinstance(default, bool):
            if isinstance(value, bool):
                return value
            text = str(value).strip().lower()
            if text in ("1", "true", "yes", "on"):
                return True
            if text in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, tuple):
            items = value if isinstance(value, (list, tuple)) else [v for v in str(value).split(",") if v.strip()]
            kind = type(default[0]) if default else int
            return tuple(kind(v) for v in items)
        return str(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: cannot interpret {value!r} as {type(default).__name__}") from None


class RunConfig:
    def __init__(self, values: Mapping[str, Any] | None = None):
        self._defaults = _defaults()
        self.values = dict(self._defaults)
        self.explicit: set[str] = set()
        self.update(values or {})

    @property
    def keys(self) -> list[str]:
        return sorted(self._defaults)

    def set(self, key: str, value: Any) -> None:
        if key not in self._defaults:
            raise ConfigError(f"unknown config key {key!r}")
        self.values[key] = _coerce(key, value, self._defaults[key])
        self.explicit.add(key)

    def update(self, values: Mapping[str, Any]) -> None:
        for key, value in values.items():
            if isinstance(value, dict):
                for sub, v in value.items():
                    self.set(f"{key}.{sub}", v)
            else:
                self.set(key, value)

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @classmethod
    def from_file(cls, path: str | Path) -> "RunConfig":
        text = Path(path).read_text(encoding="utf-8")
        stripped = text.lstrip()
        if stripped.startswith("{"):
            try:
                data = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"{path}: invalid JSON: {exc}") from None
            return cls(data)
        data = {}
        for n, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{n}: expected key = value")
            key, value = (part.strip() for part in line.split("=", 1))
            data[key] = value
        return cls(data)

    def section(self, name: str) -> dict[str, Any]:
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in self.values.items() if k.startswith(prefix)}

    def build(self, name: str):
        obj = SECTIONS[name](**self.section(name))
        if name == "model":
            obj = dataclasses.replace(
                obj, lstm=self.build("lstm"), attention=self.build("attention"), queue=self.build("queue")
            )
        if hasattr(obj, "validate"):
            obj.validate()
        return obj

    def to_dict(self) -> dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in sorted(self.values.items())}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
