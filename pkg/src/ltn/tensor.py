"""Dense float64 tensors with a reverse-mode tape.

Every tensor lives on a :class:`Tape`.  Primitives are plain functions that
compute the forward value with numpy and record a vector-Jacobian product
closure; :func:`gradients` replays the tape backwards.

Shapes follow numpy with one extension used throughout the package: a
leading batch axis is allowed wherever the math is per-example (``matvec``,
``bilinear``, ``cosine``).
"""

from __future__ import annotations

from typing import Callable, Hashable, Sequence

import numpy as np
from scipy.special import expit

HARMONIC_EPS = 1e-6


class ShapeError(ValueError):
    pass


class NonFiniteError(FloatingPointError):
    pass


class Tensor:
    __slots__ = ("data", "tape", "id")

    def __init__(self, data: np.ndarray, tape: Tape, node_id: int):
        self.data = data
        self.tape = tape
        self.id = node_id

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def item(self) -> float:
        return float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data.copy()

    def __repr__(self):
        return f"Tensor(shape={self.shape}, id={self.id})"


class Tape:
    """Records nodes in creation order; inputs always precede outputs."""

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable | None]] = []
        self.parameters: dict[Hashable, Tensor] = {}

    def _record(self, data: np.ndarray, inputs: tuple[Tensor, ...] = (), vjp=None) -> Tensor:
        data = np.asarray(data, dtype=np.float64)
        if not np.all(np.isfinite(data)):
            raise NonFiniteError("non-finite value produced")
        data.flags.writeable = False
        t = Tensor(data, self, len(self.nodes))
        self.nodes.append((t, inputs, vjp))
        return t

    def constant(self, value) -> Tensor:
        return self._record(np.array(value, dtype=np.float64))

    def parameter(self, key: Hashable, value) -> Tensor:
        if key in self.parameters:
            raise KeyError(f"parameter {key!r} already registered")
        t = self.constant(value)
        self.parameters[key] = t
        return t


def _tape(*xs: Tensor) -> Tape:
    tape = xs[0].tape
    for x in xs[1:]:
        if x.tape is not tape:
            raise ValueError("tensors belong to different tapes")
    return tape


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _broadcast_shapes(a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"incompatible shapes {a.shape} and {b.shape}") from None


# ---------------------------------------------------------------------------
# elementwise


def add(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shapes(a, b)
    return _tape(a, b)._record(a.data + b.data, (a, b),
                               lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shapes(a, b)
    return _tape(a, b)._record(a.data - b.data, (a, b),
                               lambda g: (_unbroadcast(g, a.shape), -_unbroadcast(g, b.shape)))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _broadcast_shapes(a, b)
    return _tape(a, b)._record(a.data * b.data, (a, b),
                               lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def scalar_mul(a: Tensor, c: float) -> Tensor:
    c = float(c)
    return a.tape._record(a.data * c, (a,), lambda g: (g * c,))


def one_minus(a: Tensor) -> Tensor:
    return a.tape._record(1.0 - a.data, (a,), lambda g: (-g,))


def square(a: Tensor) -> Tensor:
    return a.tape._record(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return a.tape._record(y, (a,), lambda g: (g * (1.0 - y * y),))


def sigmoid(a: Tensor) -> Tensor:
    y = expit(a.data)
    return a.tape._record(y, (a,), lambda g: (g * y * (1.0 - y),))


def abs(a: Tensor) -> Tensor:  # noqa: A001 - mirrors the primitive name
    return a.tape._record(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def min_clamp1(a: Tensor) -> Tensor:
    """min(a, 1) elementwise; at a == 1 the gradient passes through."""
    y = np.minimum(a.data, 1.0)
    mask = a.data <= 1.0
    return a.tape._record(y, (a,), lambda g: (g * mask,))


def maximum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise max; ties send the gradient to ``a``."""
    _broadcast_shapes(a, b)
    take_a = a.data >= b.data
    return _tape(a, b)._record(np.maximum(a.data, b.data), (a, b),
                               lambda g: (_unbroadcast(g * take_a, a.shape),
                                          _unbroadcast(g * ~take_a, b.shape)))


# ---------------------------------------------------------------------------
# structural


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = tuple(xs)
    if not xs:
        raise ShapeError("concat of nothing")
    try:
        y = np.concatenate([x.data for x in xs], axis=axis)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    bounds = np.cumsum([x.shape[axis] for x in xs])[:-1]

    def vjp(g):
        return tuple(np.split(g, bounds, axis=axis))

    return _tape(*xs)._record(y, xs, vjp)


def stack(xs: Sequence[Tensor]) -> Tensor:
    xs = tuple(xs)
    if not xs:
        raise ShapeError("stack of nothing")
    if len({x.shape for x in xs}) != 1:
        raise ShapeError(f"stack needs equal shapes, got {sorted({x.shape for x in xs})}")
    return _tape(*xs)._record(np.stack([x.data for x in xs]), xs, lambda g: tuple(g))


def gather(a: Tensor, index) -> Tensor:
    """Rows of ``a`` selected by an integer index array (repeats allowed)."""
    index = np.asarray(index, dtype=np.intp)
    if a.data.ndim == 0:
        raise ShapeError("cannot gather from a scalar")

    def vjp(g):
        out = np.zeros_like(a.data)
        np.add.at(out, index, g)
        return (out,)

    return a.tape._record(a.data[index], (a,), vjp)


def reshape(a: Tensor, shape) -> Tensor:
    try:
        y = a.data.reshape(shape)
    except ValueError as exc:
        raise ShapeError(str(exc)) from None
    return a.tape._record(y, (a,), lambda g: (g.reshape(a.shape),))


# ---------------------------------------------------------------------------
# linear algebra


def matvec(m: Tensor, v: Tensor) -> Tensor:
    """``m @ v`` for ``m`` of shape (p, q) and ``v`` of shape (..., q)."""
    if m.data.ndim != 2 or v.data.ndim < 1 or v.shape[-1] != m.shape[1]:
        raise ShapeError(f"matvec shapes {m.shape} and {v.shape}")
    y = v.data @ m.data.T

    def vjp(g):
        gm = np.tensordot(g, v.data, axes=(tuple(range(g.ndim - 1)),) * 2) if v.data.ndim > 1 \
            else np.outer(g, v.data)
        return gm, g @ m.data

    return _tape(m, v)._record(y, (m, v), vjp)


def bilinear(v: Tensor, w: Tensor) -> Tensor:
    """Per-slice quadratic forms: ``out[..., s] = v^T W[:, :, s] v``.

    ``w`` has shape (d, d, k) and ``v`` has shape (..., d).
    """
    if w.data.ndim != 3 or w.shape[0] != w.shape[1] or v.data.ndim < 1 or v.shape[-1] != w.shape[0]:
        raise ShapeError(f"bilinear shapes {v.shape} and {w.shape}")
    d, k = w.shape[1], w.shape[2]
    batch = v.shape[:-1]
    x = v.data.reshape(-1, d)
    W = w.data
    # left[b, j, s] = sum_i x_bi W_ijs ; right[b, i, s] = sum_j W_ijs x_bj
    left = (x @ W.reshape(d, d * k)).reshape(-1, d, k)
    y = np.sum(left * x[:, :, None], axis=1)

    def vjp(g):
        g2 = g.reshape(-1, k)
        right = (x @ W.transpose(1, 0, 2).reshape(d, d * k)).reshape(-1, d, k)
        gv = np.sum((left + right) * g2[:, None, :], axis=2)
        gw = (x.T @ (x[:, :, None] * g2[:, None, :]).reshape(-1, d * k)).reshape(d, d, k)
        return gv.reshape(v.shape), gw

    y = y.reshape(batch + (k,))
    return _tape(v, w)._record(y, (v, w), vjp)


def cosine(a: Tensor, b: Tensor) -> Tensor:
    """Cosine similarity along the last axis."""
    if a.shape != b.shape:
        raise ShapeError(f"cosine shapes {a.shape} and {b.shape}")
    x, z = a.data, b.data
    nx = np.linalg.norm(x, axis=-1)
    nz = np.linalg.norm(z, axis=-1)
    if np.any(nx == 0) or np.any(nz == 0):
        raise NonFiniteError("cosine of a zero vector")
    dot = np.sum(x * z, axis=-1)
    y = dot / (nx * nz)

    def vjp(g):
        g = g[..., None]
        c = y[..., None]
        ga = g * (z / (nx * nz)[..., None] - c * x / (nx * nx)[..., None])
        gb = g * (x / (nx * nz)[..., None] - c * z / (nz * nz)[..., None])
        return ga, gb

    return _tape(a, b)._record(y, (a, b), vjp)


# ---------------------------------------------------------------------------
# reductions


def sum(a: Tensor, axis: int | None = None) -> Tensor:  # noqa: A001 - mirrors the primitive name
    if a.data.size == 0:
        raise ShapeError("sum of an empty tensor")
    if axis is None:
        return a.tape._record(np.sum(a.data), (a,), lambda g: (np.broadcast_to(g, a.shape).copy(),))
    y = np.sum(a.data, axis=axis)
    return a.tape._record(y, (a,), lambda g: (np.broadcast_to(np.expand_dims(g, axis), a.shape).copy(),))


def max(a: Tensor, axis: int = 0) -> Tensor:  # noqa: A001 - mirrors the primitive name
    """Maximum along ``axis``; ties route the gradient to the first maximizer."""
    if a.data.size == 0 or a.shape[axis] == 0:
        raise ShapeError("max of an empty tensor")
    idx = np.argmax(a.data, axis=axis)
    y = np.take_along_axis(a.data, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def vjp(g):
        out = np.zeros_like(a.data)
        np.put_along_axis(out, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return (out,)

    return a.tape._record(y, (a,), vjp)


def harmonic_mean_eps(a: Tensor, axis: int = -1, eps: float = HARMONIC_EPS) -> Tensor:
    """``N / sum(1 / (x_i + eps))`` along ``axis``; stays finite at zero."""
    if a.data.size == 0 or a.shape[axis] == 0:
        raise ShapeError("harmonic mean of an empty tensor")
    n = a.shape[axis]
    inv = 1.0 / (a.data + eps)
    s = np.sum(inv, axis=axis)
    y = n / s

    def vjp(g):
        scale = np.expand_dims(g * n / (s * s), axis)
        return (scale * inv * inv,)

    return a.tape._record(y, (a,), vjp)


# ---------------------------------------------------------------------------
# backward pass


def gradients(tape: Tape, loss: Tensor) -> dict[Hashable, np.ndarray]:
    """d loss / d parameter for every parameter registered on ``tape``.

    Parameters the loss does not depend on get zero gradients.
    """
    if loss.tape is not tape:
        raise ValueError("loss is not on this tape")
    if loss.data.size != 1:
        raise ShapeError(f"loss must be a scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {loss.id: np.ones_like(loss.data)}
    for node, inputs, vjp in reversed(tape.nodes[: loss.id + 1]):
        g = grads.pop(node.id, None)
        if g is None or vjp is None:
            if g is not None:
                grads[node.id] = g
            continue
        for inp, gi in zip(inputs, vjp(g)):
            if inp.id in grads:
                grads[inp.id] = grads[inp.id] + gi
            else:
                grads[inp.id] = np.asarray(gi, dtype=np.float64)
    out = {}
    for key, p in tape.parameters.items():
        g = grads.get(p.id)
        out[key] = np.zeros_like(p.data) if g is None else np.asarray(g, dtype=np.float64).reshape(p.shape)
    return out
