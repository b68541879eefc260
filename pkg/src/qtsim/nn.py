"""Parameter containers and the two affine layers every model uses."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from .errors import SchemaError
from .tensor import Tensor, add, conv1d, default_dtype, matmul, relu


class Module:
    """Owns named parameters (trainable) and buffers (saved, not trained)."""

    def __init__(self):
        self._params: dict[str, Tensor] = {}
        self._buffers: dict[str, Tensor] = {}
        self._children: dict[str, Module] = {}
        self.dtype = default_dtype()

    def add_param(self, name: str, value: np.ndarray) -> Tensor:
        t = Tensor(value, requires_grad=True, name=name, dtype=self.dtype)
        self._params[name] = t
        return t

    def add_buffer(self, name: str, value: np.ndarray) -> Tensor:
        t = Tensor(value, name=name, dtype=self.dtype)
        self._buffers[name] = t
        return t

    def add_child(self, name: str, module: "Module") -> "Module":
        self._children[name] = module
        return module

    def _walk(self, attr: str, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, t in getattr(self, attr).items():
            yield prefix + name, t
        for cname, child in self._children.items():
            yield from child._walk(attr, f"{prefix}{cname}.")

    def named_parameters(self) -> dict[str, Tensor]:
        return dict(self._walk("_params"))

    def named_buffers(self) -> dict[str, Tensor]:
        return dict(self._walk("_buffers"))

    def num_parameters(self) -> int:
        return sum(p.size for p in self.named_parameters().values())

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {k: t.data.copy() for k, t in self.named_parameters().items()}
        state.update({k: t.data.copy() for k, t in self.named_buffers().items()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        own = {**self.named_parameters(), **self.named_buffers()}
        if strict:
            missing = sorted(set(own) - set(state))
            extra = sorted(set(state) - set(own))
            if missing or extra:
                raise SchemaError(f"state mismatch: missing {missing}, unexpected {extra}")
        for name, t in own.items():
            if name not in state:
                continue
            value = np.asarray(state[name])
            if value.shape != t.shape:
                raise SchemaError(f"parameter {name!r}: checkpoint shape {value.shape} != model shape {t.shape}")
            t.data[...] = value

    def zero_grad(self) -> None:
        for p in self.named_parameters().values():
            p.grad = None


class Linear(Module):
    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, zero: bool = False):
        super().__init__()
        bound = 1.0 / np.sqrt(n_in)
        w = np.zeros((n_in, n_out)) if zero else rng.uniform(-bound, bound, (n_in, n_out))
        self.weight = self.add_param("weight", w)
        self.bias = self.add_param("bias", np.zeros((1, n_out)))

    def __call__(self, x: Tensor) -> Tensor:
        return add(matmul(x, self.weight), self.bias)


class ConvBlock(Module):
    """Same-padded 1-D convolution followed by ReLU."""

    def __init__(self, c_in: int, c_out: int, kernel: int, rng: np.random.Generator):
        super().__init__()
        if kernel % 2 == 0:
            raise ValueError("conv kernel must be odd for same-padding")
        bound = 1.0 / np.sqrt(c_in * kernel)
        self.padding = (kernel - 1) // 2
        self.weight = self.add_param("weight", rng.uniform(-bound, bound, (c_out, c_in, kernel)))
        self.bias = self.add_param("bias", rng.uniform(-bound, bound, (c_out,)))

    def __call__(self, z: Tensor) -> Tensor:
        return relu(conv1d(z, self.weight, self.bias, padding=self.padding))
