"""Parameter containers shared by the scorer, codec and classifiers."""
from __future__ import annotations

import hashlib

import numpy as np

from . import tensor as T
from .tensor import Tensor


def uniform_fan_in(rng: np.random.Generator, shape, fan_in: int) -> Tensor:
    bound = 1.0 / np.sqrt(fan_in)
    return T.parameter(rng.uniform(-bound, bound, size=shape), dtype=np.float32)


def zeros(shape) -> Tensor:
    return T.parameter(np.zeros(shape), dtype=np.float32)


class Module:
    """Ordered named parameters with flat (de)serialization."""

    names: tuple[str, ...] = ()

    def parameters(self) -> list[Tensor]:
        return [getattr(self, n) for n in self.names]

    def named_parameters(self):
        return [(n, getattr(self, n)) for n in self.names]

    def zero_grad(self) -> None:
        T.zero_grad(self.parameters())

    def flat(self) -> np.ndarray:
        return np.concatenate([p.data.reshape(-1) for p in self.parameters()]).astype(np.float32)

    def load_flat(self, vec: np.ndarray) -> None:
        vec = np.asarray(vec, dtype=np.float32).reshape(-1)
        total = sum(p.size for p in self.parameters())
        if vec.size != total:
            raise ValueError(f"{type(self).__name__}: expected {total} values, got {vec.size}")
        i = 0
        for p in self.parameters():
            p.data[...] = vec[i:i + p.size].reshape(p.shape)
            i += p.size

    def digest(self) -> str:
        h = hashlib.sha256()
        for name, p in self.named_parameters():
            h.update(name.encode())
            h.update(np.asarray(p.shape, dtype=np.int64).tobytes())
            h.update(np.ascontiguousarray(p.data, dtype=np.float32).tobytes())
        return h.hexdigest()

    def to(self, dtype) -> "Module":
        """Cast parameters in place (used by float64 gradient checks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self
