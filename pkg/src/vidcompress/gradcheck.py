"""Central finite-difference checking of tape gradients."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, trace_relu, zero_grad


@dataclass
class GradCheckReport:
    max_rel_error: float
    n_checked: int
    tol: float
    # (param index, flat entry, tape grad, numeric grad, rel error)
    flagged: list[tuple[int, int, float, float, float]] = field(default_factory=list)
    # (param index, flat entry) whose +-h probes flip a relu; the loss is not
    # differentiable across that interval, so the difference quotient is moot
    kinks: list[tuple[int, int]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.flagged


def rel_error(a: float, b: float, floor: float = 1e-6) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def grad_check(
    fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-3,
    tol: float = 1e-3,
    max_entries: int | None = None,
    rng: np.random.Generator | None = None,
    floor: float = 1e-6,
    skip_kinks: bool = False,
) -> GradCheckReport:
    """Compare tape gradients of ``fn()`` against central differences.

    ``fn`` must rebuild its graph from the current contents of ``params`` on
    every call. With ``max_entries`` set, that many entries per parameter are
    sampled with ``rng``; otherwise every entry is checked. Run under
    ``precision(np.float64)`` for meaningful tolerances. With ``skip_kinks``
    an entry whose probes change any relu activity pattern is recorded in
    ``kinks`` instead of being compared.
    """
    params = list(params)
    zero_grad(params)
    fn().backward()
    tape_grads = [p.grad.copy() if p.grad is not None else np.zeros_like(p.data) for p in params]
    zero_grad(params)

    rng = rng or np.random.default_rng(0)
    worst, count, flagged, kinks = 0.0, 0, [], []
    if skip_kinks:
        with trace_relu() as base_masks:
            fn()
    for pi, p in enumerate(params):
        flat = p.data.reshape(-1)
        if max_entries is not None and flat.size > max_entries:
            entries = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        else:
            entries = np.arange(flat.size)
        for e in entries:
            orig = flat[e]
            with trace_relu() as up_masks:
                flat[e] = orig + h
                up = fn().item()
            with trace_relu() as down_masks:
                flat[e] = orig - h
                down = fn().item()
            flat[e] = orig
            if skip_kinks and not (_same(base_masks, up_masks) and _same(base_masks, down_masks)):
                kinks.append((pi, int(e)))
                continue
            num = (up - down) / (2 * h)
            ana = float(tape_grads[pi].reshape(-1)[e])
            err = rel_error(ana, num, floor)
            worst = max(worst, err)
            count += 1
            if err > tol:
                flagged.append((pi, int(e), ana, num, err))
    return GradCheckReport(max_rel_error=worst, n_checked=count, tol=tol, flagged=flagged, kinks=kinks)


def _same(a: list[np.ndarray], b: list[np.ndarray]) -> bool:
    return len(a) == len(b) and all(np.array_equal(x, y) for x, y in zip(a, b))
