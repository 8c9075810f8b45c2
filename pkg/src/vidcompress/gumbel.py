"""Gumbel noise, Gumbel-Softmax frame weights, soft aggregation and top-K."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .tensor import ShapeError, Tensor

UNIFORM_EPS = 1e-12


def gumbel_from_uniform(u) -> np.ndarray:
    u = np.clip(np.asarray(u, dtype=np.float64), UNIFORM_EPS, 1.0 - UNIFORM_EPS)
    return -np.log(-np.log(u))


def sample_gumbel(shape, rng: np.random.Generator, dtype=None) -> Tensor:
    """Standard Gumbel noise via inverse-CDF of clamped uniforms."""
    g = gumbel_from_uniform(rng.random(shape))
    return Tensor(g, dtype=dtype)


def gumbel_softmax(q: Tensor, noise: Tensor, tau: float = 1.0) -> Tensor:
    """Soft selection weights, one row per noise draw.

    Row k is ``softmax((q + noise[k]) / tau)``; ``q`` has shape (T,) and
    ``noise`` (K, T). A batch of videos uses ``q`` (B, T) with ``noise``
    (B, K, T). The result is differentiable with respect to ``q``.
    """
    if not tau > 0:
        raise ValueError(f"gumbel_softmax: temperature must be positive, got {tau}")
    if q.ndim not in (1, 2) or noise.ndim != q.ndim + 1 or noise.shape[-1] != q.shape[-1] \
            or (q.ndim == 2 and noise.shape[0] != q.shape[0]):
        raise ShapeError(f"gumbel_softmax: logits {q.shape} vs noise {noise.shape}, expected (T,)/(K, T) or (B, T)/(B, K, T)")
    z = T.add(T.reshape(q, q.shape[:-1] + (1, q.shape[-1])), noise)
    if tau != 1.0:
        z = T.mul(z, 1.0 / tau)
    return T.softmax(z)


def soft_aggregate(frames: Tensor, weights: Tensor) -> Tensor:
    """Expected frame per selection row: out[k] = sum_t weights[k, t] * frames[t].

    Also accepts a batch: ``frames`` (B, T, ...) with ``weights`` (B, K, T).
    """
    lead = weights.ndim - 2
    if weights.ndim not in (2, 3) or frames.ndim < lead + 2 or weights.shape[-1] != frames.shape[lead]:
        raise ShapeError(f"soft_aggregate: weights {weights.shape} do not match frames {frames.shape}")
    return T.weighted_sum(weights, frames)


def top_k(q, k: int) -> np.ndarray:
    """Indices of the ``k`` largest scores in ascending temporal order.

    Ties go to the earlier frame.
    """
    q = np.asarray(q.data if isinstance(q, Tensor) else q, dtype=np.float64).reshape(-1)
    if k > q.size:
        raise ValueError(f"top_k: asked for {k} of {q.size} frames")
    if k < 1:
        raise ValueError(f"top_k: k must be positive, got {k}")
    order = np.argsort(-q, kind="stable")[:k]
    return np.sort(order)


def gumbel_max_frequency(q, trials: int, rng: np.random.Generator, chunk: int = 20000) -> np.ndarray:
    """Empirical distribution of argmax(q + g) over ``trials`` independent draws."""
    q = np.asarray(q, dtype=np.float64).reshape(-1)
    counts = np.zeros(q.size, dtype=np.int64)
    done = 0
    while done < trials:
        n = min(chunk, trials - done)
        g = gumbel_from_uniform(rng.random((n, q.size)))
        counts += np.bincount(np.argmax(q + g, axis=1), minlength=q.size)
        done += n
    return counts / trials


def softmax_np(q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    e = np.exp(q - q.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


# ---------------------------------------------------------------- soft vs straight-through

def straight_through(soft: Tensor) -> Tensor:
    """Hard one-hot(argmax) in the forward pass, identity Jacobian onto ``soft``."""
    hard = np.zeros_like(soft.data)
    hard[np.arange(soft.shape[0]), np.argmax(soft.data, axis=1)] = 1.0
    return T.add(soft, Tensor(hard - soft.data, dtype=soft.data.dtype))


def _flat_grads(params: Sequence[Tensor]) -> np.ndarray:
    return np.concatenate([
        (p.grad if p.grad is not None else np.zeros_like(p.data)).reshape(-1) for p in params
    ]).astype(np.float64)


def gradient_gap(
    params: Sequence[Tensor],
    logits_fn: Callable[[], Tensor],
    loss_fn: Callable[[Tensor], Tensor],
    tau: float,
    noise: np.ndarray,
) -> float:
    """Mean ||g_soft - g_st|| over noise draws.

    ``noise`` is (draws, K, T). For each draw the parameter gradient is taken
    once with the soft weights in the loss and once with the straight-through
    hard sample (hard forward, soft Jacobian backward); both share the draw.
    """
    noise = np.asarray(noise)
    if noise.ndim == 2:
        noise = noise[:, None, :]
    gaps = []
    for draw in noise:
        g = Tensor(draw, dtype=T.default_dtype())
        grads = []
        for hard in (False, True):
            T.zero_grad(params)
            w = gumbel_softmax(logits_fn(), g, tau)
            if hard:
                w = straight_through(w)
            loss_fn(w).backward()
            grads.append(_flat_grads(params))
        gaps.append(np.linalg.norm(grads[0] - grads[1]))
    T.zero_grad(params)
    return float(np.mean(gaps))


@dataclass
class GapInstance:
    """Small linear scorer + linear classifier problem for gradient-gap studies."""

    features: Tensor  # (T, D) per-frame features
    scorer_w: Tensor  # (D, 1)
    classifier_w: Tensor  # (K*D, C)
    label: int

    @property
    def params(self) -> list[Tensor]:
        return [self.scorer_w]

    def logits(self) -> Tensor:
        return T.reshape(T.matmul(self.features, self.scorer_w), (-1,))

    def loss(self, weights: Tensor) -> Tensor:
        agg = soft_aggregate(self.features, weights)
        logits = T.matmul(T.reshape(agg, (1, -1)), self.classifier_w)
        return T.cross_entropy(logits, [self.label])


def random_gap_instance(
    rng: np.random.Generator, frames: int = 6, dim: int = 4, k: int = 1, classes: int = 3, margin: float | None = 4.0
) -> GapInstance:
    """Random micro instance; with ``margin`` set, the scorer is rescaled so the
    best frame's logit leads the runner-up by exactly that much."""
    features = rng.uniform(-1, 1, (frames, dim))
    w = rng.normal(0, 1.5, (dim, 1))
    if margin is not None:
        top2 = np.sort((features @ w).ravel())[-2:]
        w *= margin / (top2[1] - top2[0])
    return GapInstance(
        features=Tensor(features),
        scorer_w=T.parameter(w),
        classifier_w=Tensor(rng.normal(0, 1.5, (k * dim, classes))),
        label=int(rng.integers(classes)),
    )


def gap_vs_tau(
    taus: Sequence[float], instances: int = 50, draws: int = 100, seed: int = 0, k: int = 1, margin: float | None = 4.0
) -> dict[float, float]:
    """Mean gradient gap per temperature; instances and noise are shared across temperatures."""
    rng = np.random.default_rng(seed)
    problems = [random_gap_instance(rng, k=k, margin=margin) for _ in range(instances)]
    noise = [gumbel_from_uniform(rng.random((draws, k, p.features.shape[0]))) for p in problems]
    out = {}
    for tau in taus:
        out[tau] = float(np.mean([
            gradient_gap(p.params, p.logits, p.loss, tau, n) for p, n in zip(problems, noise)
        ]))
    return out
