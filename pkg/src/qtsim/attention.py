"""Attention gates for (B, C, S) feature maps: CBAM, SimAM and queue-aware SimAM."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import Module
from .tensor import (
    Tensor,
    add,
    as_tensor,
    concat,
    conv1d,
    div,
    matmul,
    mean,
    mul,
    relu,
    reshape,
    sigmoid,
    square,
    sub,
    tmax,
)


@dataclass
class AttentionConfig:
    cbam_reduction: int = 8
    cbam_spatial_kernel: int = 3
    simam_lambda: float = 1e-4
    qt_eps: float = 1e-4
    qt_lq_weight: float = 0.5

    def validate(self) -> None:
        if self.cbam_reduction < 1:
            raise ConfigError("attention.cbam_reduction must be >= 1")
        if self.cbam_spatial_kernel < 1 or self.cbam_spatial_kernel % 2 == 0:
            raise ConfigError("attention.cbam_spatial_kernel must be a positive odd integer")
        if self.simam_lambda <= 0:
            raise ConfigError("attention.simam_lambda must be > 0")
        if self.qt_eps < 0:
            raise ConfigError("attention.qt_eps must be >= 0")


class CBAM(Module):
    """Channel gate from pooled descriptors, then a spatial gate along S."""

    def __init__(self, channels: int, rng: np.random.Generator, reduction: int = 8, kernel: int = 3):
        super().__init__()
        hidden = max(1, channels // reduction)
        b1 = 1.0 / np.sqrt(channels)
        b2 = 1.0 / np.sqrt(hidden)
        self.w1 = self.add_param("mlp_w1", rng.uniform(-b1, b1, (channels, hidden)))
        self.b1 = self.add_param("mlp_b1", np.zeros((1, hidden)))
        self.w2 = self.add_param("mlp_w2", rng.uniform(-b2, b2, (hidden, channels)))
        self.b2 = self.add_param("mlp_b2", np.zeros((1, channels)))
        bs = 1.0 / np.sqrt(2 * kernel)
        self.ws = self.add_param("spatial_w", rng.uniform(-bs, bs, (1, 2, kernel)))
        self.bs = self.add_param("spatial_b", np.zeros((1,)))
        self.padding = (kernel - 1) // 2

    def _mlp(self, v: Tensor) -> Tensor:
        return add(matmul(relu(add(matmul(v, self.w1), self.b1)), self.w2), self.b2)

    def __call__(self, z: Tensor, return_maps: bool = False):
        b, c, _ = z.shape
        avg = mean(z, axis=2)
        mx = tmax(z, axis=2)
        channel_map = reshape(sigmoid(add(self._mlp(avg), self._mlp(mx))), (b, c, 1))
        z1 = mul(z, channel_map)
        pooled = concat([mean(z1, axis=1, keepdims=True), tmax(z1, axis=1, keepdims=True)], axis=1)
        spatial_map = sigmoid(conv1d(pooled, self.ws, self.bs, padding=self.padding))
        out = mul(z1, spatial_map)
        if return_maps:
            return out, channel_map, spatial_map
        return out


def simam_energy(z, lam: float = 1e-4) -> Tensor:
    """Per-neuron energy (x - mu)^2 / (4 (var + lam)) + 0.5 with statistics over S."""
    z = as_tensor(z)
    if z.ndim != 3:
        raise ShapeError(f"SimAM expects a (B, C, S) map, got {z.shape}")
    dev2 = square(sub(z, mean(z, axis=2, keepdims=True)))
    var = mean(dev2, axis=2, keepdims=True)
    return add(div(dev2, mul(add(var, lam), 4.0)), 0.5)


def simam(z, lam: float = 1e-4) -> Tensor:
    z = as_tensor(z)
    return mul(sigmoid(simam_energy(z, lam)), z)


def queue_bias(w_bar, l_bar, eps: float = 1e-4, lq_weight: float = 0.5) -> Tensor:
    """Per-sample additive energy offset W̄ + 0.5·L̄ + eps, shaped (B, 1, 1)."""
    w_bar, l_bar = as_tensor(w_bar), as_tensor(l_bar)
    if w_bar.size != w_bar.shape[0] or l_bar.size != l_bar.shape[0]:
        raise ShapeError(f"queue scalars must hold one value per sample, got {w_bar.shape} and {l_bar.shape}")
    w_bar = reshape(w_bar, (w_bar.shape[0], 1, 1))
    l_bar = reshape(l_bar, (l_bar.shape[0], 1, 1))
    return add(add(w_bar, mul(l_bar, lq_weight)), eps)


def qt_simam(z, w_bar, l_bar, cfg: AttentionConfig | None = None) -> Tensor:
    """SimAM whose energy is shifted upward by the chain's average queue load."""
    cfg = cfg or AttentionConfig()
    z = as_tensor(z)
    bias = queue_bias(w_bar, l_bar, cfg.qt_eps, cfg.qt_lq_weight)
    if bias.shape[0] != z.shape[0]:
        raise ShapeError(f"queue scalars have batch {bias.shape[0]}, feature map has batch {z.shape[0]}")
    energy = add(simam_energy(z, cfg.simam_lambda), bias)
    return mul(sigmoid(energy), z)
