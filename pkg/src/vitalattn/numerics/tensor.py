"""Dense float64 tensors with tape-based reverse-mode differentiation.

Operations record themselves on the innermost active :class:`Tape` whenever
at least one input requires a gradient. Outside a tape nothing is recorded,
which is how inference runs.

All operations accept leading batch dimensions; matrix products follow
``numpy.matmul`` broadcasting and reductions act on the trailing axis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(())
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, _wrap(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        if isinstance(other, (int, float)):
            return scale(self, float(other))
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, _wrap(other))

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def tensor(data, requires_grad: bool = False, name: str | None = None) -> Tensor:
    return Tensor(data, requires_grad=requires_grad, name=name)


# ---------------------------------------------------------------------------
# Tape
# ---------------------------------------------------------------------------


@dataclass
class TapeEntry:
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]
    op: str


@dataclass
class Tape:
    """Ordered record of differentiable operations.

    Used as a context manager; tapes nest, and operations go to the
    innermost one.
    """

    entries: list[TapeEntry] = field(default_factory=list)

    def record(self, entry: TapeEntry) -> None:
        self.entries.append(entry)

    def reset(self) -> None:
        self.entries.clear()

    def __len__(self) -> int:
        return len(self.entries)

    def __enter__(self) -> "Tape":
        _ACTIVE.append(self)
        return self

    def __exit__(self, *exc) -> None:
        popped = _ACTIVE.pop()
        assert popped is self


_ACTIVE: list[Tape] = []


def active_tape() -> Tape | None:
    return _ACTIVE[-1] if _ACTIVE else None


def _result(data: np.ndarray, inputs: tuple[Tensor, ...], backward, op: str) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.name = None
    tape = active_tape()
    out.requires_grad = needs and tape is not None
    if out.requires_grad:
        tape.record(TapeEntry(inputs, out, backward, op))
    return out


def backward(tape: Tape, loss: Tensor, params: Iterable[Tensor] | None = None) -> None:
    """Populate ``.grad`` on every tensor reachable from ``loss``.

    Gradients accumulate into existing ``.grad`` arrays. Tensors in
    ``params`` that the loss does not depend on get a zero gradient. The
    tape is reset afterwards.
    """
    if loss.size != 1:
        raise ShapeError(f"loss must be a scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for entry in reversed(tape.entries):
        g = grads.pop(id(entry.output), None)
        if g is None:
            continue
        in_grads = entry.backward(g)
        for t, gi in zip(entry.inputs, in_grads):
            if gi is None or not t.requires_grad:
                continue
            key = id(t)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
    # whatever remains belongs to leaves (or to the loss itself if untaped)
    leaves: dict[int, Tensor] = {}
    for entry in tape.entries:
        for t in entry.inputs:
            leaves[id(t)] = t
    leaves.setdefault(id(loss), loss)
    for key, g in grads.items():
        t = leaves.get(key)
        if t is None or not t.requires_grad:
            continue
        t.grad = g.copy() if t.grad is None else t.grad + g
    if params is not None:
        for p in params:
            if p.grad is None:
                p.grad = np.zeros_like(p.data)
    tape.reset()


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _check_finite(arr: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"{op}: non-finite input")


# ---------------------------------------------------------------------------
# Operations
# ---------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product with the ``numpy.matmul`` broadcasting rules."""
    if a.data.ndim < 2 or b.data.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError as exc:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from exc
    ad, bd = a.data, b.data

    def _back(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(bd, -1, -2)), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(np.matmul(np.swapaxes(ad, -1, -2), g), bd.shape) if b.requires_grad else None
        return ga, gb

    return _result(out, (a, b), _back, "matmul")


def _binary_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError as exc:
        raise ShapeError(f"{op}: incompatible shapes {a.shape} and {b.shape}") from exc


def add(a: Tensor, b: Tensor) -> Tensor:
    _binary_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return _result(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)),
        "add",
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    _binary_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _result(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)),
        "sub",
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    _binary_shape(a, b, "mul")
    ad, bd = a.data, b.data
    return _result(
        ad * bd,
        (a, b),
        lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)),
        "mul",
    )


def scale(x: Tensor, c: float) -> Tensor:
    return _result(x.data * c, (x,), lambda g: (g * c,), "scale")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _result(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,), "relu")


def abs_(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    return _result(np.abs(x.data), (x,), lambda g: (g * sign,), "abs")


_ELEMENTWISE = {"relu", "abs", "add", "scale"}


def map_elementwise(x: Tensor, f: str, other: Tensor | float | None = None) -> Tensor:
    """Apply one of ``relu``, ``abs``, ``add`` (tensor) or ``scale`` (constant)."""
    if f == "relu":
        return relu(x)
    if f == "abs":
        return abs_(x)
    if f == "add":
        other = _wrap(other)
        if other.shape != x.shape:
            raise ShapeError(f"add: shapes differ {x.shape} vs {other.shape}")
        return add(x, other)
    if f == "scale":
        return scale(x, float(other))
    raise ValueError(f"unknown elementwise function {f!r}; expected one of {sorted(_ELEMENTWISE)}")


def sum_(x: Tensor) -> Tensor:
    shape = x.shape
    return _result(np.asarray(x.data.sum()), (x,), lambda g: (np.broadcast_to(g, shape).copy(),), "sum")


def mean(x: Tensor) -> Tensor:
    shape, n = x.shape, x.size
    return _result(
        np.asarray(x.data.mean()), (x,), lambda g: (np.broadcast_to(g / n, shape).copy(),), "mean"
    )


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    old = x.shape
    try:
        out = x.data.reshape(tuple(shape))
    except ValueError as exc:
        raise ShapeError(f"reshape: cannot view {old} as {tuple(shape)}") from exc
    return _result(out, (x,), lambda g: (g.reshape(old),), "reshape")


def transpose(x: Tensor) -> Tensor:
    """Swap the two trailing axes."""
    if x.data.ndim < 2:
        raise ShapeError(f"transpose needs at least 2 dims, got {x.shape}")
    return _result(
        np.swapaxes(x.data, -1, -2), (x,), lambda g: (np.swapaxes(g, -1, -2),), "transpose"
    )


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the last axis, stabilised by subtracting the row max."""
    if x.data.ndim == 0 or x.shape[-1] < 1:
        raise ShapeError(f"softmax_rows needs at least one column, got {x.shape}")
    _check_finite(x.data, "softmax_rows")
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def _back(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _result(y, (x,), _back, "softmax")


def maxpool1d(x: Tensor, k: int) -> Tensor:
    """Non-overlapping max pooling over the last axis.

    Stride equals ``k``; a trailing partial window is kept. The gradient of
    each window goes to its first maximum.
    """
    if not isinstance(k, (int, np.integer)) or k < 1:
        raise ValueError(f"maxpool1d: kernel size must be a positive integer, got {k!r}")
    if x.data.ndim == 0:
        raise ShapeError("maxpool1d needs at least one axis")
    if k == 1:
        return _result(x.data.copy(), (x,), lambda g: (g,), "maxpool1d")
    n = x.shape[-1]
    n_out = -(-n // k)
    pad = n_out * k - n
    lead = x.shape[:-1]
    xp = x.data
    if pad:
        xp = np.concatenate([xp, np.full(lead + (pad,), -np.inf)], axis=-1)
    windows = xp.reshape(lead + (n_out, k))
    arg = windows.argmax(axis=-1)
    out = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]

    def _back(g):
        gw = np.zeros(lead + (n_out, k))
        np.put_along_axis(gw, arg[..., None], g[..., None], axis=-1)
        return (gw.reshape(lead + (n_out * k,))[..., :n],)

    return _result(out, (x,), _back, "maxpool1d")


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise the last axis with population variance, then scale and shift."""
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeError(
            f"layer_norm: gain {gain.shape} and bias {bias.shape} must both be ({d},)"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gd = gain.data
    out = xhat * gd + bias.data

    def _back(g):
        gx = None
        if x.requires_grad:
            gh = g * gd
            gx = inv * (
                gh - gh.mean(axis=-1, keepdims=True) - xhat * (gh * xhat).mean(axis=-1, keepdims=True)
            )
        return gx, _unbroadcast(g * xhat, (d,)), _unbroadcast(g, (d,))

    return _result(out, (x, gain, bias), _back, "layer_norm")


def mse_loss(pred: Tensor, target: Tensor) -> Tensor:
    """Mean of squared elementwise differences, as a scalar tensor."""
    if pred.shape != target.shape:
        raise ShapeError(f"mse_loss: shapes differ {pred.shape} vs {target.shape}")
    diff = pred.data - target.data
    n = diff.size

    def _back(g):
        gp = g * 2.0 * diff / n
        return gp, -gp

    return _result(np.asarray(np.mean(diff * diff)), (pred, target), _back, "mse")
