"""Minimal reverse-mode autodiff over float64 numpy arrays.

Ops execute eagerly. While a :class:`GradTape` is active, every op whose
inputs require gradients appends a backward closure to the tape; calling
``tape.backward(loss)`` replays the closures in exact reverse recording
order, which is a valid reverse topological order because recording
follows execution. Gradients accumulate into ``Tensor.grad``.

The engine is deliberately small: 2-D matmul, broadcasting elementwise
arithmetic, a few shape ops, sigmoid/tanh/softmax and a fused softmax
cross-entropy. Everything is float64 so finite-difference gradient checks
are tight and results are bit-reproducible across platforms.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import expit

from .errors import NumericsError, ShapeError, TapeError

_FINITE_CHECKS = False


def set_finite_checks(enabled: bool) -> None:
    """Toggle NaN/Inf detection after every op and gradient (slow; for tests)."""
    global _FINITE_CHECKS
    _FINITE_CHECKS = bool(enabled)


_ACTIVE_TAPE: "GradTape | None" = None


class GradTape:
    """Ordered record of backward closures for one forward pass.

    Use as a context manager around the forward computation; a second
    ``backward()`` on the same tape raises.
    """

    def __init__(self):
        self._records: list[Callable[[], None]] = []
        self._spent = False

    def __enter__(self) -> "GradTape":
        global _ACTIVE_TAPE
        if _ACTIVE_TAPE is not None:
            raise TapeError("a GradTape is already active; tapes do not nest")
        _ACTIVE_TAPE = self
        return self

    def __exit__(self, *exc) -> None:
        global _ACTIVE_TAPE
        _ACTIVE_TAPE = None

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, root: "Tensor") -> None:
        """Seed d(root)/d(root) = 1 and propagate through all recorded ops."""
        if self._spent:
            raise TapeError("backward() already ran on this tape; record a new pass")
        if root.data.size != 1:
            raise ShapeError(f"backward root must be a scalar, got shape {root.shape}")
        self._spent = True
        root.grad = np.ones_like(root.data)
        for fn in reversed(self._records):
            fn()


class Tensor:
    """Dense float64 array with an optional same-shape gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # arithmetic sugar; scalars and arrays are wrapped as constants
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def parameter(data) -> Tensor:
    """A learnable tensor: participates in every tape and keeps its grad."""
    return Tensor(data, requires_grad=True)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericsError(f"non-finite values in {what}")


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if _FINITE_CHECKS:
        _check_finite(g, "gradient")
    if t.grad is None:
        t.grad = np.array(g)  # copy: vjp outputs may alias shared buffers
    else:
        t.grad += g


def apply_op(out_data: np.ndarray, inputs: Sequence[Tensor], vjp) -> Tensor:
    """Wrap an op result, recording its vector-Jacobian product if needed.

    ``vjp(g)`` must return one gradient array (or None) per input, in
    order. It runs at most once, during ``tape.backward``.
    """
    if _FINITE_CHECKS:
        _check_finite(out_data, "op output")
    out = Tensor(out_data)
    tape = _ACTIVE_TAPE
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True

        def run():
            g = out.grad
            if g is None:
                return  # output never reached the loss
            for t, gt in zip(inputs, vjp(g)):
                if t.requires_grad and gt is not None:
                    _accumulate(t, gt)

        tape._records.append(run)
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum g down to `shape`, undoing numpy broadcasting."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise arithmetic (numpy broadcasting rules)


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)

    return apply_op(out, (a, b), vjp)


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def vjp(g):
        return _unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)

    return apply_op(out, (a, b), vjp)


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def vjp(g):
        return (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        )

    return apply_op(out, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def vjp(g):
        return (
            _unbroadcast(g / b.data, a.data.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.data.shape),
        )

    return apply_op(out, (a, b), vjp)


def neg(a) -> Tensor:
    a = as_tensor(a)
    return apply_op(-a.data, (a,), lambda g: (-g,))


# ---------------------------------------------------------------------------
# linear algebra and shape ops


def matmul(a, b) -> Tensor:
    """2-D matrix product; backward is g @ b.T and a.T @ g."""
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ShapeError(
            f"matmul needs 2-D operands, got {a.data.ndim}-D and {b.data.ndim}-D"
        )
    if a.data.shape[1] != b.data.shape[0]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} x {b.shape}")
    out = a.data @ b.data

    def vjp(g):
        return g @ b.data.T, a.data.T @ g

    return apply_op(out, (a, b), vjp)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"transpose needs a 2-D operand, got shape {a.shape}")
    return apply_op(a.data.T, (a,), lambda g: (g.T,))


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return apply_op(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.data.shape),))


def repeat_rows(a, n: int) -> Tensor:
    """Tile a [1 x d] tensor to [n x d]; backward sums over the rows."""
    a = as_tensor(a)
    if a.data.ndim != 2 or a.data.shape[0] != 1:
        raise ShapeError(f"repeat_rows needs shape [1 x d], got {a.shape}")
    out = np.broadcast_to(a.data, (n, a.data.shape[1])).copy()
    return apply_op(out, (a,), lambda g: (g.sum(axis=0, keepdims=True),))


def slice_cols(a, start: int, stop: int) -> Tensor:
    """Columns [start:stop] of a 2-D tensor; backward scatters into zeros."""
    a = as_tensor(a)
    if a.data.ndim != 2:
        raise ShapeError(f"slice_cols needs a 2-D operand, got shape {a.shape}")
    out = a.data[:, start:stop]

    def vjp(g):
        buf = np.zeros_like(a.data)
        buf[:, start:stop] = g
        return (buf,)

    return apply_op(out, (a,), vjp)


def gather_cols(a, idx) -> Tensor:
    """out[i, j] = a[i, idx[i, j]]; backward scatter-adds (indices may repeat)."""
    a = as_tensor(a)
    idx = np.asarray(idx, dtype=np.int64)
    if a.data.ndim != 2 or idx.ndim != 2 or idx.shape[0] != a.data.shape[0]:
        raise ShapeError(f"gather_cols shape mismatch: {a.shape} with idx {idx.shape}")
    rows = np.arange(a.data.shape[0])[:, None]
    out = a.data[rows, idx]

    def vjp(g):
        buf = np.zeros_like(a.data)
        np.add.at(buf, (rows, idx), g)
        return (buf,)

    return apply_op(out, (a,), vjp)


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.data.shape).copy(),)

    return apply_op(out, (a,), vjp)


def mean(a) -> Tensor:
    a = as_tensor(a)
    out = np.asarray(a.data.mean())

    def vjp(g):
        return (np.full_like(a.data, float(g) / a.data.size),)

    return apply_op(out, (a,), vjp)


# ---------------------------------------------------------------------------
# nonlinearities


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    y = expit(a.data)
    return apply_op(y, (a,), lambda g: (g * y * (1.0 - y),))


def tanh(a) -> Tensor:
    a = as_tensor(a)
    y = np.tanh(a.data)
    return apply_op(y, (a,), lambda g: (g * (1.0 - y * y),))


def softmax(a) -> Tensor:
    """Row softmax over the last axis, stabilized by max subtraction."""
    a = as_tensor(a)
    z = a.data - a.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * y).sum(axis=-1, keepdims=True)
        return ((g - dot) * y,)

    return apply_op(y, (a,), vjp)


def softmax_cross_entropy(logits, target_index) -> Tensor:
    """Mean over the batch of -log softmax(logits)[target].

    ``logits`` is [b x n]; ``target_index`` holds b class indices. Rows are
    stabilized by max subtraction before exponentiation.
    """
    t = as_tensor(logits)
    if t.data.ndim != 2:
        raise ShapeError(f"cross entropy needs 2-D logits, got shape {t.shape}")
    idx = np.asarray(target_index, dtype=np.int64)
    b, n = t.data.shape
    if idx.shape != (b,):
        raise ShapeError(f"expected {b} target indices, got shape {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise IndexError(f"target index outside [0, {n})")
    z = t.data - t.data.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(b)
    loss = np.asarray(-logp[rows, idx].mean())

    def vjp(g):
        p = np.exp(logp)
        p[rows, idx] -= 1.0
        p *= float(g) / b
        return (p,)

    return apply_op(loss, (t,), vjp)
