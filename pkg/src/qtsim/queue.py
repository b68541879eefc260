"""M/M/1 residual-delay surrogates computed per flight leg.

Each leg is treated as a single-server queue: service time grows with the
great-circle distance and the arrival rate falls with the planned airborne
time. The resulting waiting time and queue length are min-max normalised
over the legs of each chain, so only their relative shape matters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .errors import ConfigError, SchemaError
from .tensor import Tensor, add, as_tensor, clampmax, div, mul, sub, tmax, tmin

DISTANCE_COLUMN = "distance"
AIRBORNE_COLUMN = "scheduled_estimated_time"


@dataclass
class QueueConfig:
    k_s: float = 0.01  # service time per km
    k_a: float = 1.0  # arrival-rate scale
    eps: float = 1e-6
    rho_cap: float = 0.99

    def validate(self) -> None:
        if min(self.k_s, self.k_a, self.eps, self.rho_cap) <= 0:
            raise ConfigError(f"queue parameters must be positive: {self}")
        if self.rho_cap >= 1:
            raise ConfigError(f"queue.rho_cap must be < 1, got {self.rho_cap}")


@dataclass
class QueueProxies:
    """Normalised waiting time and queue length, each shaped (B, S, 1)."""

    W_n: Tensor
    L_n: Tensor

    def chain_means(self) -> tuple[Tensor, Tensor]:
        """Per-sample averages over the legs, shaped (B, 1, 1)."""
        return self.W_n.mean(axis=1, keepdims=True), self.L_n.mean(axis=1, keepdims=True)


def resolve_columns(
    feature_names: Sequence[str],
    distance: str = DISTANCE_COLUMN,
    airborne: str = AIRBORNE_COLUMN,
) -> tuple[int, int]:
    names = list(feature_names)
    missing = [c for c in (distance, airborne) if c not in names]
    if missing:
        raise ConfigError(f"queue layer needs feature columns {missing}, registry has {names}")
    return names.index(distance), names.index(airborne)


def _minmax(q: Tensor, eps: float) -> Tensor:
    lo = tmin(q, axis=1, keepdims=True)
    hi = tmax(q, axis=1, keepdims=True)
    return div(sub(q, lo), add(sub(hi, lo), eps))


def utilisation(d: Tensor, a: Tensor, cfg: QueueConfig) -> tuple[Tensor, Tensor, Tensor]:
    """Service time E_S, arrival rate lambda and capped utilisation rho."""
    service = add(mul(d, cfg.k_s), cfg.eps)
    rate = div(cfg.k_a, add(a, cfg.eps))
    return service, rate, clampmax(mul(rate, service), cfg.rho_cap)


def mm1_surrogates(d: Tensor, a: Tensor, cfg: QueueConfig) -> tuple[Tensor, Tensor]:
    """Raw waiting time W_q and queue length L_q from distance and airborne time."""
    service, rate, rho = utilisation(d, a, cfg)
    wait = div(mul(rho, service), add(sub(1.0, rho), cfg.eps))
    return wait, mul(rate, wait)


def residual_delay(x, distance_idx: int, airborne_idx: int, cfg: QueueConfig | None = None) -> QueueProxies:
    """Queue proxies for a raw (unnormalised) chain batch ``x`` of shape (B, S, p)."""
    cfg = cfg or QueueConfig()
    x = as_tensor(x)
    if x.ndim != 3:
        raise SchemaError(f"residual_delay expects (B, S, p) input, got {x.shape}")
    d = x[:, :, distance_idx:distance_idx + 1]
    a = x[:, :, airborne_idx:airborne_idx + 1]
    wait, length = mm1_surrogates(d, a, cfg)
    return QueueProxies(_minmax(wait, cfg.eps), _minmax(length, cfg.eps))
