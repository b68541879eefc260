"""Central finite-difference gradient verification.

All checks run on float64 tensors; float32 round-off would swamp ``h=1e-5``.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, mul, tsum

# Denominator floor for relative error; keeps near-zero gradients from
# turning finite-difference round-off into huge ratios.
REL_FLOOR = 1e-6


def relative_error(analytic: float, numeric: float, floor: float = REL_FLOOR) -> float:
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def project(out: Tensor, seed: int = 0) -> Tensor:
    """Reduce a non-scalar output to a scalar with fixed random weights."""
    weights = np.random.default_rng(seed).standard_normal(out.shape)
    return tsum(mul(out, Tensor(weights, dtype=out.dtype)))


def gradient_check(
    fn: Callable[[], Tensor],
    inputs: Sequence[Tensor],
    h: float = 1e-5,
    max_entries: int | None = None,
    seed: int = 0,
) -> float:
    """Return the worst relative error between backprop and finite differences.

    ``fn`` must rebuild the graph from ``inputs`` on every call and return a
    scalar. When ``max_entries`` is set, at most that many coordinates per
    input are sampled.
    """
    for t in inputs:
        if t.data.dtype != np.float64:
            raise TypeError("gradient_check needs float64 tensors; build them under precision('float64')")
        t.grad = None
    fn().backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for t, grad in zip(inputs, analytic):
        flat = t.data.reshape(-1)  # view: perturbations write through
        positions = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            positions = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        for pos in positions:
            orig = flat[pos]
            flat[pos] = orig + h
            up = fn().item()
            flat[pos] = orig - h
            down = fn().item()
            flat[pos] = orig
            numeric = (up - down) / (2 * h)
            worst = max(worst, relative_error(grad.reshape(-1)[pos], numeric))
    for t in inputs:
        t.grad = None
    return worst
