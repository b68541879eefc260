"""The three flight-chain classifiers, their shared config and checkpoint I/O."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from . import serialization
from .attention import CBAM, AttentionConfig, qt_simam, simam
from .errors import ConfigError, SchemaError
from .nn import ConvBlock, Linear, Module
from .queue import QueueConfig, QueueProxies, residual_delay, resolve_columns
from .recurrent import LSTMConfig, LSTMStack
from .tensor import (
    Tensor,
    concat,
    div,
    dropout,
    global_avg_pool,
    mul,
    softplus,
    sub,
    transpose,
)

N_CLASSES = 5
MODEL_KINDS = ("cbam_cnn", "simam_cnn_lstm", "qtsim", "qtsim_bidir")


@dataclass
class ModelConfig:
    kind: str = "qtsim"
    channels: tuple[int, ...] = (64, 128, 256)
    kernel: int = 3
    lstm: LSTMConfig = field(default_factory=LSTMConfig)
    attention: AttentionConfig = field(default_factory=AttentionConfig)
    queue: QueueConfig = field(default_factory=QueueConfig)
    use_softmp: bool = False
    softmp_tau: float = 1.0
    aux_delay_head: bool = False
    mogrify: bool = True
    queue_bias: bool = True
    init_seed: int = 0

    def validate(self) -> None:
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"model.kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        if len(self.channels) == 0 or any(c <= 0 for c in self.channels):
            raise ConfigError(f"model.channels must be positive widths, got {self.channels}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ConfigError("model.kernel must be a positive odd integer")
        if self.softmp_tau <= 0:
            raise ConfigError("model.softmp_tau must be > 0")
        self.lstm.validate()
        self.attention.validate()
        self.queue.validate()

    def effective_lstm(self) -> LSTMConfig:
        if self.kind == "qtsim":
            return dataclasses.replace(self.lstm, bidirectional=False)
        if self.kind == "qtsim_bidir":
            return dataclasses.replace(self.lstm, bidirectional=True)
        return self.lstm

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["channels"] = list(self.channels)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        nested = {"lstm": LSTMConfig, "attention": AttentionConfig, "queue": QueueConfig}
        for key, sub_cls in nested.items():
            if key in d and isinstance(d[key], dict):
                d[key] = sub_cls(**d[key])
        if "channels" in d:
            d["channels"] = tuple(int(c) for c in d["channels"])
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(f"bad model config: {exc}") from None


class ModelOutput(NamedTuple):
    logits: Tensor
    delay: Tensor | None = None


def soft_max_plus(v, tau: float = 1.0) -> Tensor:
    """Smooth hinge tau * ln(1 + exp(v / tau)); tends to max(v, 0) as tau -> 0."""
    if tau <= 0:
        raise ConfigError(f"soft_max_plus temperature must be > 0, got {tau}")
    return mul(softplus(div(v, tau)), tau)


class DelayModel(Module):
    """Common plumbing: per-feature standardisation buffers and shape checks.

    Inputs are raw chain tensors (B, S, p). Standardisation happens inside the
    forward pass so the queue layer can read raw distances and times.
    """

    def __init__(self, cfg: ModelConfig, feature_names: Sequence[str]):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.feature_names = list(feature_names)
        p = len(self.feature_names)
        self.norm_mean = self.add_buffer("norm.mean", np.zeros((1, 1, p)))
        self.norm_std = self.add_buffer("norm.std", np.ones((1, 1, p)))
        self.rng = np.random.default_rng(cfg.init_seed)

    @property
    def n_features(self) -> int:
        return len(self.feature_names)

    def fit_normaliser(self, x: np.ndarray) -> None:
        """Set standardisation statistics from training chains (N, S, p)."""
        flat = np.asarray(x, dtype=np.float64).reshape(-1, self.n_features)
        mu = flat.mean(axis=0)
        sd = flat.std(axis=0)
        sd[sd < 1e-9] = 1.0
        self.norm_mean.data[...] = mu.reshape(1, 1, -1)
        self.norm_std.data[...] = sd.reshape(1, 1, -1)

    def _input(self, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x, dtype=self.dtype)
        if x.ndim != 3 or x.shape[2] != self.n_features:
            raise SchemaError(
                f"feature-count mismatch: model expects (B, S, {self.n_features}) input, got {x.shape}"
            )
        return x

    def _standardise(self, x: Tensor) -> Tensor:
        return div(sub(x, self.norm_mean), self.norm_std)

    def __call__(self, x, training: bool = False, rng: np.random.Generator | None = None) -> ModelOutput:
        return self.forward(self._input(x), training, rng)

    def forward(self, x: Tensor, training: bool, rng) -> ModelOutput:  # pragma: no cover
        raise NotImplementedError


class CBAMCNN(DelayModel):
    def __init__(self, cfg: ModelConfig, feature_names: Sequence[str]):
        super().__init__(cfg, feature_names)
        width = self.n_features
        self.stages = []
        for i, ch in enumerate(cfg.channels):
            conv = self.add_child(f"conv{i}", ConvBlock(width, ch, cfg.kernel, self.rng))
            gate = self.add_child(
                f"cbam{i}",
                CBAM(ch, self.rng, cfg.attention.cbam_reduction, cfg.attention.cbam_spatial_kernel),
            )
            self.stages.append((conv, gate))
            width = ch
        self.head = self.add_child("head", Linear(width, N_CLASSES, self.rng))

    def forward(self, x, training, rng):
        z = transpose(self._standardise(x), (0, 2, 1))
        for conv, gate in self.stages:
            z = gate(conv(z))
        return ModelOutput(self.head(global_avg_pool(z, axis=2)))


class SimAMCNNLSTM(DelayModel):
    def __init__(self, cfg: ModelConfig, feature_names: Sequence[str], extra_inputs: int = 0, mogrify: bool = False):
        super().__init__(cfg, feature_names)
        width = self.n_features + extra_inputs
        self.convs = []
        for i, ch in enumerate(cfg.channels):
            self.convs.append(self.add_child(f"conv{i}", ConvBlock(width, ch, cfg.kernel, self.rng)))
            width = ch
        self.lstm_cfg = cfg.effective_lstm()
        self.lstm = self.add_child("lstm", LSTMStack(width, self.lstm_cfg, self.rng, mogrify=mogrify))
        self.head = self.add_child("head", Linear(self.lstm_cfg.output_size, N_CLASSES, self.rng))

    def _gate(self, z: Tensor, proxies: QueueProxies | None) -> Tensor:
        return simam(z, self.cfg.attention.simam_lambda)

    def _recurrent(self, z: Tensor, proxies, training, rng) -> Tensor:
        h = self.lstm(transpose(z, (0, 2, 1)), proxies, training, rng)
        return dropout(h, self.lstm_cfg.dropout, rng, training)

    def forward(self, x, training, rng):
        z = transpose(self._standardise(x), (0, 2, 1))
        for conv in self.convs:
            z = self._gate(conv(z), None)
        return ModelOutput(self.head(self._recurrent(z, None, training, rng)))


class QTSim(SimAMCNNLSTM):
    """Queue-aware SimAM CNN followed by a QMogrifier LSTM."""

    def __init__(self, cfg: ModelConfig, feature_names: Sequence[str]):
        self.queue_cols = resolve_columns(feature_names)
        super().__init__(cfg, feature_names, extra_inputs=int(cfg.use_softmp), mogrify=cfg.mogrify)
        self.aux = None
        if cfg.aux_delay_head:
            self.aux = self.add_child("aux", Linear(self.lstm_cfg.output_size, 1, self.rng))

    def proxies(self, x) -> QueueProxies:
        return residual_delay(self._input(x), *self.queue_cols, self.cfg.queue)

    def forward(self, x, training, rng):
        proxies = residual_delay(x, *self.queue_cols, self.cfg.queue)
        xs = self._standardise(x)
        if self.cfg.use_softmp:
            xs = concat([xs, soft_max_plus(mul(proxies.W_n, proxies.L_n), self.cfg.softmp_tau)], axis=2)
        z = transpose(xs, (0, 2, 1))
        if self.cfg.queue_bias:
            w_bar, l_bar = proxies.chain_means()
        else:
            w_bar = l_bar = Tensor(np.zeros((x.shape[0], 1, 1)), dtype=self.dtype)
        for conv in self.convs:
            z = qt_simam(conv(z), w_bar, l_bar, self.cfg.attention)
        h = self._recurrent(z, proxies if self.cfg.mogrify else None, training, rng)
        return ModelOutput(self.head(h), self.aux(h) if self.aux is not None else None)


def build_model(cfg: ModelConfig, feature_names: Sequence[str]) -> DelayModel:
    cfg.validate()
    if cfg.kind == "cbam_cnn":
        return CBAMCNN(cfg, feature_names)
    if cfg.kind == "simam_cnn_lstm":
        return SimAMCNNLSTM(cfg, feature_names)
    return QTSim(cfg, feature_names)


def save_model(path: str | Path, model: DelayModel, extra: dict | None = None) -> None:
    meta = {"config": model.cfg.to_dict(), "feature_names": model.feature_names}
    if extra:
        meta.update(extra)
    serialization.save(path, model.state_dict(), meta)


def load_model(path: str | Path) -> tuple[DelayModel, dict]:
    state, meta = serialization.load(path)
    if "config" not in meta or "feature_names" not in meta:
        raise SchemaError(f"{path}: checkpoint lacks model config echo")
    model = build_model(ModelConfig.from_dict(meta["config"]), meta["feature_names"])
    model.load_state_dict(state)
    return model, meta
