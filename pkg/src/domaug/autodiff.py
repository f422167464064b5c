"""Minimal reverse-mode autodiff over dense float64 numpy arrays.

Define-by-run: every op returns a ``Tensor`` that remembers its parents and a
closure computing the local vector-Jacobian product.  ``backward`` walks the
graph once in reverse topological order.  Graphs are rebuilt every step and
garbage-collected with the tensors that reference them.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

Array = np.ndarray


class NumericError(RuntimeError):
    """A numeric computation failed or diverged (non-finite loss, no convergence)."""


class Tensor:
    """A float64 array plus the bookkeeping needed for backprop."""

    __slots__ = ("data", "grad", "op", "_parents", "_vjp")

    def __init__(
        self,
        data,
        parents: tuple["Tensor", ...] = (),
        op: str = "leaf",
        vjp: Callable[[Array], None] | None = None,
    ):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: Array | None = None
        self.op = op
        self._parents = parents
        self._vjp = vjp

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def zero_grad(self) -> None:
        self.grad = None

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(op={self.op!r}, shape={self.shape})"

    # sugar used throughout the loss code; constants are promoted to leaves
    def __add__(self, other):
        return add(self, _as_tensor(other))

    def __radd__(self, other):
        return add(_as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, _as_tensor(other))

    def __rmul__(self, other):
        return mul(_as_tensor(other), self)

    def __neg__(self):
        return mul(self, Tensor(-1.0))


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(data: Array, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise FloatingPointError(f"{op}: produced non-finite values")


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _accumulate(t: Tensor, g: Array) -> None:
    g = _unbroadcast(np.asarray(g, dtype=np.float64), t.data.shape)
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad = t.grad + g


# ---------------------------------------------------------------------------
# primitives


def add(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data + b.data

    def vjp(g: Array) -> None:
        _accumulate(a, g)
        _accumulate(b, g)

    return Tensor(out_data, (a, b), "add", vjp)


def sub(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data - b.data

    def vjp(g: Array) -> None:
        _accumulate(a, g)
        _accumulate(b, -g)

    return Tensor(out_data, (a, b), "sub", vjp)


def mul(a: Tensor, b: Tensor) -> Tensor:
    out_data = a.data * b.data

    def vjp(g: Array) -> None:
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)

    return Tensor(out_data, (a, b), "mul", vjp)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.data.shape[1] != b.data.shape[0]:
        raise ValueError(
            f"matmul: non-conforming shapes {a.data.shape} and {b.data.shape}"
        )
    out_data = a.data @ b.data

    def vjp(g: Array) -> None:
        _accumulate(a, g @ b.data.T)
        _accumulate(b, a.data.T @ g)

    return Tensor(out_data, (a, b), "matmul", vjp)


def relu(x: Tensor) -> Tensor:
    # subgradient at 0 is 0
    out_data = np.maximum(x.data, 0.0)

    def vjp(g: Array) -> None:
        _accumulate(x, g * (x.data > 0.0))

    return Tensor(out_data, (x,), "relu", vjp)


def exp(x: Tensor) -> Tensor:
    out_data = np.exp(x.data)
    _check_finite(out_data, "exp")

    def vjp(g: Array) -> None:
        _accumulate(x, g * out_data)

    return Tensor(out_data, (x,), "exp", vjp)


def log(x: Tensor) -> Tensor:
    if np.any(x.data <= 0.0):
        raise ValueError(f"log: input must be positive, got min {x.data.min()!r}")
    out_data = np.log(x.data)

    def vjp(g: Array) -> None:
        _accumulate(x, g / x.data)

    return Tensor(out_data, (x,), "log", vjp)


def square(x: Tensor) -> Tensor:
    out_data = x.data * x.data

    def vjp(g: Array) -> None:
        _accumulate(x, g * 2.0 * x.data)

    return Tensor(out_data, (x,), "square", vjp)


def tsum(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    out_data = x.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g: Array) -> None:
        if axis is None:
            _accumulate(x, np.broadcast_to(g, x.data.shape))
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            _accumulate(x, np.broadcast_to(ge, x.data.shape))

    return Tensor(out_data, (x,), "sum", vjp)


def tmean(x: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    n = x.data.size if axis is None else x.data.shape[axis]
    if n == 0:
        raise ValueError("mean: cannot reduce over an empty axis")
    s = tsum(x, axis=axis, keepdims=keepdims)
    return mul(s, Tensor(1.0 / n))


def variance(x: Tensor, axis: int | None = None) -> Tensor:
    """Population variance (divide by n) over ``axis`` (all elements if None)."""
    centered = sub(x, tmean(x, axis=axis, keepdims=axis is not None))
    return tmean(square(centered), axis=axis)


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    out_data = np.clip(x.data, lo, hi)

    def vjp(g: Array) -> None:
        _accumulate(x, g * ((x.data >= lo) & (x.data <= hi)))

    return Tensor(out_data, (x,), "clamp", vjp)


def take_rows(x: Tensor, idx: Array) -> Tensor:
    idx = np.asarray(idx, dtype=np.intp)
    out_data = x.data[idx]

    def vjp(g: Array) -> None:
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        _accumulate(x, gx)

    return Tensor(out_data, (x,), "take_rows", vjp)


def stack(xs: Sequence[Tensor]) -> Tensor:
    """Stack scalar tensors into a 1-d vector."""
    xs = tuple(xs)
    if any(x.data.ndim != 0 for x in xs):
        raise ValueError("stack: expects scalar tensors")
    out_data = np.array([x.data for x in xs], dtype=np.float64)

    def vjp(g: Array) -> None:
        for i, x in enumerate(xs):
            _accumulate(x, g[i])

    return Tensor(out_data, xs, "stack", vjp)


def softmax_cross_entropy(logits: Tensor, labels: Array) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under row softmax."""
    labels = np.asarray(labels, dtype=np.intp)
    if logits.data.ndim != 2:
        raise ValueError(f"softmax_cross_entropy: logits must be 2-d, got shape {logits.data.shape}")
    n, c = logits.data.shape
    if labels.shape != (n,):
        raise ValueError(
            f"softmax_cross_entropy: labels shape {labels.shape} does not match logits rows {n}"
        )
    if n == 0:
        raise ValueError("softmax_cross_entropy: empty batch")
    if labels.min() < 0 or labels.max() >= c:
        raise ValueError(f"softmax_cross_entropy: labels outside [0, {c})")
    # shifting by the row max is gradient-neutral (softmax is shift invariant)
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    probs = expd / expd.sum(axis=1, keepdims=True)
    nll = -(shifted[np.arange(n), labels] - np.log(expd.sum(axis=1)))
    out_data = nll.mean()

    def vjp(g: Array) -> None:
        gl = probs.copy()
        gl[np.arange(n), labels] -= 1.0
        _accumulate(logits, (float(g) / n) * gl)

    return Tensor(out_data, (logits,), "softmax_cross_entropy", vjp)


def softmax(logits: Tensor) -> Tensor:
    """Row softmax, differentiable (used by the gradient-penalty loss)."""
    if logits.data.ndim != 2:
        raise ValueError(f"softmax: logits must be 2-d, got shape {logits.data.shape}")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    expd = np.exp(shifted)
    out_data = expd / expd.sum(axis=1, keepdims=True)

    def vjp(g: Array) -> None:
        inner = (g * out_data).sum(axis=1, keepdims=True)
        _accumulate(logits, out_data * (g - inner))

    return Tensor(out_data, (logits,), "softmax", vjp)


# ---------------------------------------------------------------------------
# backward pass and gradient checking


def topo_order(root: Tensor) -> list[Tensor]:
    """Parents-before-children ordering of the graph below ``root``."""
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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
            if id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into ``.grad`` for every tensor below root."""
    if root.data.ndim != 0:
        raise ValueError(f"backward: root must be scalar, got shape {root.data.shape}")
    order = topo_order(root)
    _accumulate(root, np.ones_like(root.data))
    for node in reversed(order):
        if node._vjp is not None:
            node._vjp(node.grad)


def grad_check(
    f: Callable[[Tensor], Tensor], x: Array, h: float = 1e-5
) -> float:
    """Max relative error between analytic and central-difference gradients.

    Relative error per coordinate is |analytic - fd| / max(1, |analytic|).
    """
    x = np.asarray(x, dtype=np.float64)
    leaf = Tensor(x.copy())
    out = f(leaf)
    if out.data.ndim != 0:
        raise ValueError(f"grad_check: f must be scalar-valued, got shape {out.data.shape}")
    backward(out)
    analytic = leaf.grad if leaf.grad is not None else np.zeros_like(x)

    worst = 0.0
    flat = x.reshape(-1)
    for i in range(flat.size):
        bumped = flat.copy()
        bumped[i] += h
        fp = float(f(Tensor(bumped.reshape(x.shape))).data)
        bumped[i] -= 2.0 * h
        fm = float(f(Tensor(bumped.reshape(x.shape))).data)
        fd = (fp - fm) / (2.0 * h)
        a = analytic.reshape(-1)[i]
        worst = max(worst, abs(a - fd) / max(1.0, abs(a)))
    return worst
