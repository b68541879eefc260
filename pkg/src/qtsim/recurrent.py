"""LSTM stack with optional bidirectionality and queue-gated input masking."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ShapeError
from .nn import Module
from .queue import QueueProxies
from .tensor import Tensor, add, concat, dropout, matmul, mul, sigmoid, tanh


@dataclass
class LSTMConfig:
    hidden_size: int = 256
    layers: int = 2
    bidirectional: bool = False
    dropout: float = 0.2

    def validate(self) -> None:
        if self.hidden_size <= 0 or self.layers <= 0:
            raise ConfigError("lstm.hidden_size and lstm.layers must be positive")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"lstm.dropout must lie in [0, 1), got {self.dropout}")

    @property
    def output_size(self) -> int:
        return self.hidden_size * (2 if self.bidirectional else 1)


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, w_x: Tensor, w_h: Tensor, b: Tensor) -> tuple[Tensor, Tensor]:
    """One step of a standard LSTM; gate columns are ordered i, f, g, o."""
    hidden = h.shape[1]
    if w_x.shape != (x.shape[1], 4 * hidden) or w_h.shape != (hidden, 4 * hidden):
        raise ShapeError(
            f"lstm_cell: x {x.shape}, h {h.shape} incompatible with W_x {w_x.shape}, W_h {w_h.shape}"
        )
    gates = add(add(matmul(x, w_x), matmul(h, w_h)), b)
    i = sigmoid(gates[:, 0:hidden])
    f = sigmoid(gates[:, hidden:2 * hidden])
    g = tanh(gates[:, 2 * hidden:3 * hidden])
    o = sigmoid(gates[:, 3 * hidden:])
    c_next = add(mul(f, c), mul(i, g))
    return mul(o, tanh(c_next)), c_next


def qmogrifier_mask(h: Tensor, w_n: Tensor, l_n: Tensor, w_m: Tensor, b_m: Tensor) -> Tensor:
    """sigmoid([h; W_n; L_n] W_m + b_m), one mask entry per input feature."""
    mixed = concat([h, w_n, l_n], axis=1)
    if w_m.shape[0] != mixed.shape[1]:
        raise ShapeError(f"qmogrifier: [h; W_n; L_n] has width {mixed.shape[1]}, W_m is {w_m.shape}")
    return sigmoid(add(matmul(mixed, w_m), b_m))


def qmogrifier_step(x: Tensor, h: Tensor, w_n: Tensor, l_n: Tensor, w_m: Tensor, b_m: Tensor) -> Tensor:
    mask = qmogrifier_mask(h, w_n, l_n, w_m, b_m)
    if mask.shape != x.shape:
        raise ShapeError(f"qmogrifier: mask {mask.shape} does not match input {x.shape}")
    return mul(mask, x)


class LSTMCell(Module):
    def __init__(self, n_in: int, hidden: int, rng: np.random.Generator, mogrify: bool = False):
        super().__init__()
        bound = 1.0 / np.sqrt(hidden)
        self.hidden = hidden
        self.w_x = self.add_param("W_x", rng.uniform(-bound, bound, (n_in, 4 * hidden)))
        self.w_h = self.add_param("W_h", rng.uniform(-bound, bound, (hidden, 4 * hidden)))
        bias = rng.uniform(-bound, bound, (1, 4 * hidden))
        bias[:, hidden:2 * hidden] = 1.0  # forget gate starts open
        self.b = self.add_param("b", bias)
        self.mogrify = mogrify
        if mogrify:
            bm = 1.0 / np.sqrt(hidden + 2)
            self.w_m = self.add_param("W_m", rng.uniform(-bm, bm, (hidden + 2, n_in)))
            self.b_m = self.add_param("b_m", np.zeros((1, n_in)))

    def run(self, steps: list[Tensor], w_n: list[Tensor] | None, l_n: list[Tensor] | None) -> list[Tensor]:
        """Feed ``steps`` in the given order; returns the hidden state after each."""
        batch = steps[0].shape[0]
        h = Tensor(np.zeros((batch, self.hidden)), dtype=self.dtype)
        c = Tensor(np.zeros((batch, self.hidden)), dtype=self.dtype)
        outs = []
        for t, x in enumerate(steps):
            if self.mogrify:
                x = qmogrifier_step(x, h, w_n[t], l_n[t], self.w_m, self.b_m)
            h, c = lstm_cell(x, h, c, self.w_x, self.w_h, self.b)
            outs.append(h)
        return outs


class LSTMStack(Module):
    """Multi-layer (optionally bidirectional) LSTM returning the final hidden state.

    With ``mogrify`` each layer/direction gates its own input with a mask
    computed from its previous hidden state and the current leg's proxies.
    The reverse direction sees the proxies in reverse order alongside the
    reversed sequence.
    """

    def __init__(self, n_in: int, cfg: LSTMConfig, rng: np.random.Generator, mogrify: bool = False):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.mogrify = mogrify
        self.cells: list[tuple[LSTMCell, LSTMCell | None]] = []
        width = n_in
        for layer in range(cfg.layers):
            fwd = self.add_child(f"l{layer}.fwd", LSTMCell(width, cfg.hidden_size, rng, mogrify))
            bwd = None
            if cfg.bidirectional:
                bwd = self.add_child(f"l{layer}.bwd", LSTMCell(width, cfg.hidden_size, rng, mogrify))
            self.cells.append((fwd, bwd))
            width = cfg.output_size

    def __call__(
        self,
        seq: Tensor,
        proxies: QueueProxies | None = None,
        training: bool = False,
        rng: np.random.Generator | None = None,
    ) -> Tensor:
        if seq.ndim != 3:
            raise ShapeError(f"LSTM stack expects (B, S, C), got {seq.shape}")
        steps = [seq[:, t, :] for t in range(seq.shape[1])]
        w_n = l_n = None
        if self.mogrify:
            if proxies is None:
                raise ShapeError("mogrifier stack needs queue proxies")
            if proxies.W_n.shape[1] != len(steps):
                raise ShapeError(f"proxies cover {proxies.W_n.shape[1]} legs, sequence has {len(steps)}")
            w_n = [proxies.W_n[:, t, :] for t in range(len(steps))]
            l_n = [proxies.L_n[:, t, :] for t in range(len(steps))]
        final = None
        for layer, (fwd, bwd) in enumerate(self.cells):
            if layer > 0:
                steps = [dropout(s, self.cfg.dropout, rng, training) for s in steps]
            out_f = fwd.run(steps, w_n, l_n)
            if bwd is None:
                steps = out_f
                final = out_f[-1]
                continue
            rev = lambda xs: None if xs is None else xs[::-1]  # noqa: E731
            out_b = bwd.run(steps[::-1], rev(w_n), rev(l_n))[::-1]
            steps = [concat([a, b], axis=1) for a, b in zip(out_f, out_b)]
            final = concat([out_f[-1], out_b[0]], axis=1)
        return final
