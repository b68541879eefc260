"""Adam with classic (coupled) L2 weight decay."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import ShapeError
from .tensor import Tensor

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    weight_decay: float = 0.0,
) -> AdamState:
    """Apply one Adam update to ``params`` in place.

    The L2 term ``weight_decay * theta`` is added to the gradient before the
    moment updates. Parameters with no gradient entry are left untouched but
    still share the global step counter.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - BETA1**t
    c2 = 1.0 - BETA2**t
    for name, theta in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != theta.shape:
            raise ShapeError(f"adam: gradient shape {g.shape} != parameter {name!r} shape {theta.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(theta)
            v = state.v[name] = np.zeros_like(theta)
        elif m.shape != theta.shape or v.shape != theta.shape:
            raise ShapeError(f"adam: state for {name!r} has shape {m.shape}, parameter has {theta.shape}")
        if weight_decay:
            g = g + weight_decay * theta
        m *= BETA1
        m += (1.0 - BETA1) * g
        v *= BETA2
        v += (1.0 - BETA2) * np.square(g)
        denom = np.sqrt(v / c2)
        denom += EPS
        update = m / c1
        update /= denom
        update *= lr
        theta -= update
    return state


class Adam:
    """Thin stateful wrapper binding :func:`adam_step` to named parameter tensors."""

    def __init__(self, params: Mapping[str, Tensor], lr: float = 1e-4, weight_decay: float = 0.0):
        self.params = dict(params)
        self.lr = lr
        self.weight_decay = weight_decay
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None

    def step(self) -> None:
        data = {k: p.data for k, p in self.params.items()}
        grads = {k: p.grad for k, p in self.params.items() if p.grad is not None}
        adam_step(data, grads, self.state, self.lr, self.weight_decay)
