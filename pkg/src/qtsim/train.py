"""Mini-batch training, evaluation and cross-region transfer evaluation."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .chains import ChainSet
from .errors import ConfigError, NumericError, SchemaError
from .metrics import MetricsReport, classification_report
from .models import DelayModel, save_model
from .optim import Adam
from .tensor import Tensor, add, mse, mul, softmax_cross_entropy

log = logging.getLogger(__name__)

HISTORY_COLUMNS = ("epoch", "train_loss", "train_acc", "val_loss", "val_acc")


@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-5
    batch_size: int = 32
    max_epochs: int = 50
    seed: int = 0
    checkpoint_every: int = 0  # 0 = only best and final
    patience: int = 0  # 0 = no early stopping
    aux_weight: float = 0.0
    eval_batch_size: int = 256

    def validate(self) -> None:
        if self.lr < 0 or self.weight_decay < 0 or self.aux_weight < 0:
            raise ConfigError("train.lr, train.weight_decay and train.aux_weight must be >= 0")
        if self.batch_size < 1 or self.max_epochs < 1 or self.eval_batch_size < 1:
            raise ConfigError("train.batch_size, train.max_epochs and train.eval_batch_size must be >= 1")
        if self.checkpoint_every < 0 or self.patience < 0:
            raise ConfigError("train.checkpoint_every and train.patience must be >= 0")


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)
    best_epoch: int = 0
    best_state: dict[str, np.ndarray] = field(default_factory=dict)
    final_state: dict[str, np.ndarray] = field(default_factory=dict)

    def history_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(HISTORY_COLUMNS)
        for row in self.history:
            writer.writerow([row["epoch"]] + [repr(float(row[c])) for c in HISTORY_COLUMNS[1:]])
        return buf.getvalue()


def _loss(model: DelayModel, x: np.ndarray, y: np.ndarray, aux_weight: float, training: bool, rng) -> tuple[Tensor, np.ndarray]:
    out = model(x, training=training, rng=rng)
    loss = softmax_cross_entropy(out.logits, y)
    if aux_weight and out.delay is not None:
        target = Tensor(y.reshape(-1, 1).astype(np.float64), dtype=model.dtype)
        loss = add(loss, mul(mse(out.delay, target), aux_weight))
    return loss, out.logits.data


def predict_logits(model: DelayModel, X: np.ndarray, batch_size: int = 256) -> np.ndarray:
    outs = [model(X[i:i + batch_size]).logits.data for i in range(0, len(X), batch_size)]
    if not outs:
        return np.zeros((0, 5), dtype=model.dtype)
    return np.concatenate(outs)


def _score(model: DelayModel, data: ChainSet, batch_size: int) -> tuple[float, float]:
    if len(data) == 0:
        return math.nan, math.nan
    total = 0.0
    correct = 0
    for i in range(0, len(data), batch_size):
        xb, yb = data.X[i:i + batch_size], data.y[i:i + batch_size]
        out = model(xb)
        total += softmax_cross_entropy(out.logits, yb).item() * len(yb)
        correct += int((out.logits.data.argmax(axis=1) == yb).sum())
    return total / len(data), correct / len(data)


def _check_features(model: DelayModel, data: ChainSet) -> None:
    if list(model.feature_names) != list(data.feature_names):
        raise SchemaError(
            f"feature-set mismatch: model was trained on {model.feature_names}, data provides {data.feature_names}"
        )


def train(
    model: DelayModel,
    train_set: ChainSet,
    val_set: ChainSet,
    cfg: TrainConfig,
    out_dir: str | Path | None = None,
) -> TrainResult:
    """Fit ``model`` with Adam, recording per-epoch loss/accuracy.

    Standardisation statistics are fitted on ``train_set`` first. The state
    with the lowest validation loss is kept alongside the final state (train
    loss stands in when there is no validation data).
    """
    cfg.validate()
    _check_features(model, train_set)
    _check_features(model, val_set)
    if len(train_set) == 0:
        raise ConfigError("training set is empty")
    model.fit_normaliser(train_set.X)
    shuffle_rng, dropout_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(cfg.seed).spawn(2))
    params = model.named_parameters()
    opt = Adam(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    result = TrainResult()
    best = math.inf
    stale = 0
    n = len(train_set)
    for epoch in range(1, cfg.max_epochs + 1):
        order = shuffle_rng.permutation(n)
        total = 0.0
        correct = 0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            xb, yb = train_set.X[idx], train_set.y[idx]
            opt.zero_grad()
            loss, logits = _loss(model, xb, yb, cfg.aux_weight, True, dropout_rng)
            value = loss.item()
            if not math.isfinite(value):
                raise NumericError(f"non-finite loss {value} at epoch {epoch}, batch {b} (lr={cfg.lr})")
            loss.backward()
            opt.step()
            total += value * len(idx)
            correct += int((logits.argmax(axis=1) == yb).sum())
        val_loss, val_acc = _score(model, val_set, cfg.eval_batch_size)
        row = {
            "epoch": epoch,
            "train_loss": total / n,
            "train_acc": correct / n,
            "val_loss": val_loss,
            "val_acc": val_acc,
        }
        result.history.append(row)
        log.info("epoch %d train_loss %.4f train_acc %.4f val_loss %.4f val_acc %.4f", *row.values())
        criterion = val_loss if math.isfinite(val_loss) else row["train_loss"]
        if criterion < best:
            best = criterion
            result.best_epoch = epoch
            result.best_state = model.state_dict()
            stale = 0
        else:
            stale += 1
        if out_dir is not None and cfg.checkpoint_every and epoch % cfg.checkpoint_every == 0:
            save_model(Path(out_dir) / f"epoch{epoch:03d}.qtm", model, {"epoch": epoch})
        if cfg.patience and stale >= cfg.patience:
            log.info("early stop after %d epochs without improvement", stale)
            break
    result.final_state = model.state_dict()
    return result


def evaluate(model: DelayModel, data: ChainSet, tags: dict | None = None, batch_size: int = 256) -> MetricsReport:
    """Score ``data`` in eval mode: confusion matrix, P/R/F1 and mean loss."""
    _check_features(model, data)
    logits = predict_logits(model, data.X, batch_size)
    loss = None
    if len(data):
        loss = softmax_cross_entropy(Tensor(logits, dtype=logits.dtype), data.y).item()
    return classification_report(data.y, logits.argmax(axis=1), loss, tags)


def transfer_evaluate(model: DelayModel, target: ChainSet, source_region: str = "A", target_region: str = "B") -> MetricsReport:
    """Evaluate a model trained on one region on another region's chains.

    ``target`` must be harmonised to the same feature set and encoded with the
    source region's vocabulary. No parameters change.
    """
    _check_features(model, target)
    variant = "with_weather" if "weather_delay" in model.feature_names else "without_weather"
    return evaluate(model, target, tags={
        "protocol": "transfer",
        "source": source_region,
        "target": target_region,
        "feature_set": variant,
    })
