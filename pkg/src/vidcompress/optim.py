"""Adam and SGD-with-momentum, operating in place on ``Tensor.data``."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .tensor import NonFiniteError, ShapeError, Tensor


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


@dataclass
class SgdMomentumState:
    lr: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 0.0
    velocity: list[np.ndarray] = field(default_factory=list)


def _check(params: Sequence[Tensor], grads: Sequence[np.ndarray], buffers: list[np.ndarray], name: str):
    if len(params) != len(grads):
        raise ShapeError(f"{name}: {len(params)} params but {len(grads)} grads")
    for i, (p, g) in enumerate(zip(params, grads)):
        if np.shape(g) != p.shape:
            raise ShapeError(f"{name}: grad {i} has shape {np.shape(g)}, param has {p.shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"{name}: grad {i} is not finite")
    if not buffers:
        buffers.extend(np.zeros(p.shape, dtype=np.float64) for p in params)
    elif len(buffers) != len(params) or any(b.shape != p.shape for b, p in zip(buffers, params)):
        raise ShapeError(f"{name}: optimizer state does not match parameter shapes")


def adam_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: AdamState) -> None:
    """One bias-corrected Adam update, applied in place."""
    _check(params, grads, state.m, "adam_step")
    _check(params, grads, state.v, "adam_step")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = np.asarray(g, dtype=np.float64)
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        step = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        p.data -= step.astype(p.data.dtype)


def sgd_momentum_step(params: Sequence[Tensor], grads: Sequence[np.ndarray], state: SgdMomentumState) -> None:
    """v <- mu*v + (g + wd*theta); theta <- theta - lr*v."""
    _check(params, grads, state.velocity, "sgd_momentum_step")
    for p, g, v in zip(params, grads, state.velocity):
        v *= state.momentum
        v += np.asarray(g, dtype=np.float64) + state.weight_decay * p.data
        p.data -= (state.lr * v).astype(p.data.dtype)


class _Optimizer:
    def __init__(self, params: Sequence[Tensor]):
        self.params = list(params)
        for p in self.params:
            if not p.requires_grad:
                raise ValueError(f"optimizer given a tensor that does not require grad: {p!r}")

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def _grads(self):
        return [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]


class Adam(_Optimizer):
    def __init__(self, params, lr=1e-3, betas=(0.9, 0.999), eps=1e-8):
        super().__init__(params)
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)

    def step(self) -> None:
        adam_step(self.params, self._grads(), self.state)


class SGD(_Optimizer):
    def __init__(self, params, lr=0.01, momentum=0.9, weight_decay=0.0):
        super().__init__(params)
        self.state = SgdMomentumState(lr=lr, momentum=momentum, weight_decay=weight_decay)

    def step(self) -> None:
        sgd_momentum_step(self.params, self._grads(), self.state)
