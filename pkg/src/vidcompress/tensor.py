"""Minimal reverse-mode autodiff over numpy arrays.

Every op records its parents and a backward closure on the output tensor;
``Tensor.backward`` walks the recorded graph in reverse topological order.
Arrays are float32 unless a different working precision is selected with
:func:`precision` (the finite-difference checks run in float64).
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

_state = {"dtype": np.dtype(np.float32), "relu_trace": None}


@contextlib.contextmanager
def trace_relu():
    """Collect the activity mask of every relu evaluated inside the block."""
    prev = _state["relu_trace"]
    masks: list[np.ndarray] = []
    _state["relu_trace"] = masks
    try:
        yield masks
    finally:
        _state["relu_trace"] = prev


class ShapeError(ValueError):
    """Operand shapes do not conform for the named operation."""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


@contextlib.contextmanager
def precision(dtype):
    """Temporarily change the dtype used for newly created tensors."""
    prev = _state["dtype"]
    _state["dtype"] = np.dtype(dtype)
    try:
        yield
    finally:
        _state["dtype"] = prev


def default_dtype() -> np.dtype:
    return _state["dtype"]


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype or _state["dtype"])
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], Sequence[np.ndarray | None]] | None = None
        self.op = "leaf"

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item: expected a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> Tensor:
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

    def __len__(self):
        return self.shape[0]

    # operator sugar
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other, self), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def backward(self) -> None:
        backward(self)


def _as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn, op: str) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"{op}: produced non-finite values")
    out = Tensor.__new__(Tensor)
    out.data = data if data.flags.c_contiguous else np.ascontiguousarray(data)
    out.grad = None
    out.op = op
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = parents
        out._backward = backward_fn
    else:
        out._parents = ()
        out._backward = None
    return out


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


def _check_broadcast(op: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot combine shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------- elementwise

def add(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_broadcast("add", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return _make(a.data + b.data, (a, b), bw, "add")


def sub(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_broadcast("sub", a, b)

    def bw(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return _make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b) -> Tensor:
    a = _as_tensor(a, b if isinstance(b, Tensor) else None)
    b = _as_tensor(b, a)
    _check_broadcast("mul", a, b)

    def bw(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return _make(a.data * b.data, (a, b), bw, "mul")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    if _state["relu_trace"] is not None:
        _state["relu_trace"].append(mask)
    return _make(np.where(mask, x.data, 0).astype(x.data.dtype), (x,), lambda g: (g * mask,), "relu")


def sigmoid(x: Tensor) -> Tensor:
    # split by sign so exp never overflows
    d = x.data
    e = np.exp(-np.abs(d))
    y = np.where(d >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(d.dtype)
    return _make(y, (x,), lambda g: (g * y * (1 - y),), "sigmoid")


def square(x: Tensor) -> Tensor:
    return _make(x.data * x.data, (x,), lambda g: (2 * g * x.data,), "square")


# ---------------------------------------------------------------- reductions

def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    y = x.data.sum(axis=axis, dtype=np.float64, keepdims=keepdims).astype(x.data.dtype)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).astype(x.data.dtype),)

    return _make(np.asarray(y), (x,), bw, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([x.shape[a] for a in axes]))
    if n == 0:
        raise ShapeError(f"mean: reducing over an empty axis of shape {x.shape}")
    y = (x.data.sum(axis=axis, dtype=np.float64, keepdims=keepdims) / n).astype(x.data.dtype)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, x.shape).astype(x.data.dtype),)

    return _make(np.asarray(y), (x,), bw, "mean")


# ---------------------------------------------------------------- shape ops

def reshape(x: Tensor, shape) -> Tensor:
    try:
        y = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot view shape {x.shape} as {tuple(shape)}") from None
    return _make(y, (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    inv = np.argsort(axes)
    return _make(x.data.transpose(axes), (x,), lambda g: (g.transpose(inv),), "transpose")


def getitem(x: Tensor, idx) -> Tensor:
    y = x.data[idx]

    def bw(g):
        out = np.zeros_like(x.data)
        np.add.at(out, idx, g)
        return (out,)

    return _make(np.array(y, copy=True), (x,), bw, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    try:
        y = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from None
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]
    return _make(y, tuple(tensors), lambda g: tuple(np.split(g, bounds, axis=axis)), "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    shapes = {t.shape for t in tensors}
    if len(shapes) != 1:
        raise ShapeError(f"stack: all inputs must share a shape, got {sorted(shapes)}")
    y = np.stack([t.data for t in tensors], axis=axis)

    def bw(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _make(y, tuple(tensors), bw, "stack")


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul: expected (n,k)@(k,m), got {a.shape} @ {b.shape}")

    def bw(g):
        return g @ b.data.T, a.data.T @ g

    return _make(a.data @ b.data, (a, b), bw, "matmul")


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w + b`` with ``x`` (N, in), ``w`` (in, out), ``b`` (out,)."""
    y = matmul(x, w)
    return y if b is None else add(y, b)


def weighted_sum(w: Tensor, x: Tensor) -> Tensor:
    """Weighted sums over the leading (per-item) axis.

    Unbatched: ``w`` (K, T), ``x`` (T, ...) -> (K, ...), out[k] = sum_t w[k, t] * x[t].
    Batched: ``w`` (B, K, T), ``x`` (B, T, ...) -> (B, K, ...).
    """
    batched = w.ndim == 3
    lead = 1 if batched else 0
    if w.ndim not in (2, 3) or x.ndim < lead + 1 or w.shape[-1] != x.shape[lead] or (batched and w.shape[0] != x.shape[0]):
        raise ShapeError(f"weighted_sum: weights {w.shape} do not match leading axis of {x.shape}")
    flat = x.data.reshape(x.shape[:lead + 1] + (-1,))
    y = np.matmul(w.data, flat).reshape(w.shape[:-1] + x.shape[lead + 1:])

    def bw(g):
        g2 = g.reshape(w.shape[:-1] + (-1,))
        gw = np.matmul(g2, np.swapaxes(flat, -1, -2))
        gx = np.matmul(np.swapaxes(w.data, -1, -2), g2).reshape(x.shape)
        return gw, gx

    return _make(y, (w, x), bw, "weighted_sum")


# ---------------------------------------------------------------- convolution

def _im2col(xp: np.ndarray, kh: int, kw: int, s: int, ho: int, wo: int) -> np.ndarray:
    n, c = xp.shape[:2]
    cols = np.empty((c, kh, kw, n, ho, wo), dtype=xp.dtype)
    for i in range(kh):
        for j in range(kw):
            patch = xp[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s]
            cols[:, i, j] = patch.transpose(1, 0, 2, 3)
    return cols.reshape(c * kh * kw, n * ho * wo)


def _col2im(cols: np.ndarray, padded_shape, kh: int, kw: int, s: int, ho: int, wo: int) -> np.ndarray:
    n, c = padded_shape[:2]
    out = np.zeros(padded_shape, dtype=cols.dtype)
    cols = cols.reshape(c, kh, kw, n, ho, wo)
    for i in range(kh):
        for j in range(kw):
            out[:, :, i:i + s * (ho - 1) + 1:s, j:j + s * (wo - 1) + 1:s] += cols[:, i, j].transpose(1, 0, 2, 3)
    return out


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation of ``x`` (N, C, H, W) with ``w`` (O, C, kh, kw)."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv2d: expected 4-D input and weight, got {x.shape} and {w.shape}")
    n, c, h, wd = x.shape
    o, cw, kh, kw = w.shape
    if c != cw:
        raise ShapeError(f"conv2d: input has {c} channels but weight expects {cw}")
    if b is not None and b.shape != (o,):
        raise ShapeError(f"conv2d: bias shape {b.shape} does not match {o} output channels")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv2d: kernel {kh}x{kw} larger than padded input {h}x{wd}")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    cols = _im2col(xp, kh, kw, stride, ho, wo)
    wmat = w.data.reshape(o, -1)
    y = wmat @ cols
    if b is not None:
        y += b.data[:, None]
    y = y.reshape(o, n, ho, wo).transpose(1, 0, 2, 3)

    def bw(g):
        g2 = g.transpose(1, 0, 2, 3).reshape(o, -1)
        gw = (g2 @ cols.T).reshape(w.shape) if w.requires_grad else None
        gx = None
        if x.requires_grad:
            gxp = _col2im(wmat.T @ g2, xp.shape, kh, kw, stride, ho, wo)
            gx = gxp[:, :, padding:padding + h, padding:padding + wd] if padding else gxp
        if b is None:
            return gx, gw
        return gx, gw, g2.sum(axis=1)

    parents = (x, w) if b is None else (x, w, b)
    return _make(y, parents, bw, "conv2d")


def conv_transpose2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """Adjoint of :func:`conv2d`; ``w`` is (C_in, C_out, kh, kw)."""
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeError(f"conv_transpose2d: expected 4-D input and weight, got {x.shape} and {w.shape}")
    n, c, h, wd = x.shape
    ci, o, kh, kw = w.shape
    if c != ci:
        raise ShapeError(f"conv_transpose2d: input has {c} channels but weight expects {ci}")
    if b is not None and b.shape != (o,):
        raise ShapeError(f"conv_transpose2d: bias shape {b.shape} does not match {o} output channels")
    hp = (h - 1) * stride + kh
    wp = (wd - 1) * stride + kw
    ho, wo = hp - 2 * padding, wp - 2 * padding
    if ho < 1 or wo < 1:
        raise ShapeError(f"conv_transpose2d: padding {padding} leaves no output")
    xmat = x.data.transpose(1, 0, 2, 3).reshape(c, -1)
    wmat = w.data.reshape(c, -1)
    full = _col2im(wmat.T @ xmat, (n, o, hp, wp), kh, kw, stride, h, wd)
    y = full[:, :, padding:padding + ho, padding:padding + wo]
    if b is not None:
        y = y + b.data[None, :, None, None]

    def bw(g):
        gp = np.pad(g, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else g
        cols = _im2col(gp, kh, kw, stride, h, wd)
        gx = (wmat @ cols).reshape(c, n, h, wd).transpose(1, 0, 2, 3) if x.requires_grad else None
        gw = (xmat @ cols.T).reshape(w.shape) if w.requires_grad else None
        if b is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    parents = (x, w) if b is None else (x, w, b)
    return _make(y, parents, bw, "conv_transpose2d")


# ---------------------------------------------------------------- softmax family

def _softmax_np(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def softmax(x: Tensor) -> Tensor:
    """Row-wise softmax over the last axis, max-subtracted."""
    y = _softmax_np(x.data)

    def bw(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _make(y, (x,), bw, "softmax")


stable_softmax = softmax


def log_softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    y = z - lse
    p = np.exp(y)

    def bw(g):
        return (g - p * g.sum(axis=-1, keepdims=True),)

    return _make(y, (x,), bw, "log_softmax")


def cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean negative log-likelihood of integer ``targets`` under ``logits`` (N, C)."""
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    if logits.ndim == 1:
        logits = reshape(logits, (1, -1))
    if logits.ndim != 2 or logits.shape[0] != targets.shape[0]:
        raise ShapeError(f"cross_entropy: logits {logits.shape} vs {targets.shape[0]} targets")
    if targets.min() < 0 or targets.max() >= logits.shape[1]:
        raise ShapeError(f"cross_entropy: target out of range for {logits.shape[1]} classes")
    lp = log_softmax(logits)
    picked = getitem(lp, (np.arange(len(targets)), targets))
    return mul(mean(picked), -1.0)


# ---------------------------------------------------------------- backward

def _toposort(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def tape(root: Tensor) -> list[Tensor]:
    """Recorded nodes reachable from ``root`` in topological order (inputs first)."""
    return _toposort(root)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(leaf) into ``.grad`` of every reachable leaf that requires grad.

    Leaf gradients add onto whatever is already stored; callers zero them
    between steps.
    """
    if loss.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if not loss.requires_grad:
        raise ValueError("backward: loss does not depend on any tensor that requires grad")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_toposort(loss)):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.is_leaf:
            node.grad = g.copy() if node.grad is None else node.grad + g
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = np.asarray(pg, dtype=parent.data.dtype)


def zero_grad(params: Iterable[Tensor]) -> None:
    for p in params:
        p.grad = None


def parameter(data, dtype=None) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=dtype)
