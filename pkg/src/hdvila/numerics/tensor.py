"""Dense float32 tensors with tape-based reverse-mode differentiation.

Ops record onto the innermost active ``Tape`` (a ``with Tape() as tape:``
block). ``tape.backward(loss)`` walks the recorded entries in reverse and
accumulates gradients into every ``requires_grad`` tensor's ``.grad``
buffer. Repeated backward calls accumulate; call ``zero_grad`` explicitly.

All buffers are C-contiguous float32 and every kernel uses a fixed
(row-major) summation order, so runs are bit-reproducible.
"""

from __future__ import annotations

import threading
from typing import Callable, Iterable, Optional, Sequence, Tuple, Union

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes violate an op's contract."""


class NumericError(ArithmeticError):
    """Raised when a NaN/Inf is detected where finite values are required."""


Scalar = Union[int, float]
TensorLike = Union["Tensor", np.ndarray, Scalar, Sequence]


class Tensor:
    """N-dimensional float32 array, optionally participating in backprop.

    ``data`` is always a C-contiguous float32 ndarray. ``grad`` is lazily
    allocated, same shape as ``data``, and only ever populated for tensors
    with ``requires_grad=True``.
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data: TensorLike, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float32, order="C")
        if not arr.flags["C_CONTIGUOUS"]:
            arr = np.ascontiguousarray(arr)
        if arr.size == 0:
            raise ShapeError(f"tensor dimensions must be positive, got shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() requires a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        """Copy that neither records onto tapes nor receives gradients."""
        return Tensor(self.data.copy())

    def accumulate_grad(self, g: np.ndarray) -> None:
        if g.shape != self.data.shape:
            raise ShapeError(f"gradient shape {g.shape} != tensor shape {self.data.shape}")
        if self.grad is None:
            self.grad = g.astype(np.float32).copy()
        else:
            self.grad += g

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    # Arithmetic sugar; all routing goes through the module-level ops.
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __matmul__(self, other):
        return matmul(self, other)


_TAPE_STACK = threading.local()


def _stack() -> list:
    stack = getattr(_TAPE_STACK, "stack", None)
    if stack is None:
        stack = []
        _TAPE_STACK.stack = stack
    return stack


def active_tape() -> Optional["Tape"]:
    stack = _stack()
    return stack[-1] if stack else None


# A backward rule receives the output gradient plus a per-input "needed"
# mask and returns one gradient array (or None) per input, in input order.
BackwardRule = Callable[[np.ndarray, Tuple[bool, ...]], Tuple[Optional[np.ndarray], ...]]


class Tape:
    """Execution-ordered record of differentiable ops (single-writer).

    Entries are appended in forward order, so inputs always precede the ops
    consuming them; the reverse walk therefore visits each op exactly once
    with its output gradient fully accumulated.
    """

    def __init__(self):
        self._entries: list = []
        self._live: set = set()

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        popped = _stack().pop()
        if popped is not self:
            raise RuntimeError("tape stack corrupted: exited a tape that is not innermost")

    def __len__(self) -> int:
        return len(self._entries)

    def watches(self, t: Tensor) -> bool:
        return t.requires_grad or id(t) in self._live

    def record(self, out: Tensor, inputs: Sequence[Tensor], backward: BackwardRule) -> None:
        needs = tuple(self.watches(t) for t in inputs)
        self._entries.append((out, tuple(inputs), needs, backward))
        self._live.add(id(out))

    def backward(self, loss: Tensor) -> None:
        """Accumulate d(loss)/d(t) into ``t.grad`` for all watched tensors."""
        if loss.shape != ():
            raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
        if id(loss) not in self._live and not loss.requires_grad:
            raise ValueError("loss tensor was not recorded on this tape")
        pending: dict = {id(loss): (loss, np.ones((), dtype=np.float32))}
        for out, inputs, needs, bwd in reversed(self._entries):
            got = pending.pop(id(out), None)
            if got is None:
                continue
            grad_out = got[1]
            if out.requires_grad:
                out.accumulate_grad(grad_out)
            in_grads = bwd(grad_out, needs)
            for t, g, needed in zip(inputs, in_grads, needs):
                if not needed or g is None:
                    continue
                held = pending.get(id(t))
                if held is None:
                    pending[id(t)] = (t, g)
                else:
                    pending[id(t)] = (t, held[1] + g)
        for t, g in pending.values():
            if t.requires_grad:
                t.accumulate_grad(g)


def backward(loss: Tensor, tape: Tape) -> None:
    """Functional alias for ``tape.backward(loss)``."""
    tape.backward(loss)


def as_tensor(value: TensorLike) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def assert_finite(t: Tensor, name: str = "tensor") -> Tensor:
    """Validation op: raise ``NumericError`` if any value is NaN/Inf."""
    if not np.all(np.isfinite(t.data)):
        raise NumericError(f"{name} contains non-finite values")
    return t


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, s) in enumerate(zip(g.shape, shape)) if s == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _record(out: Tensor, inputs: Sequence[Tensor], backward_rule: BackwardRule) -> Tensor:
    tape = active_tape()
    if tape is not None and any(tape.watches(t) for t in inputs):
        tape.record(out, inputs, backward_rule)
    return out


def add(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data)

    def bwd(g, needs):
        return (
            _unbroadcast(g, a.shape) if needs[0] else None,
            _unbroadcast(g, b.shape) if needs[1] else None,
        )

    return _record(out, (a, b), bwd)


def sub(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data)

    def bwd(g, needs):
        return (
            _unbroadcast(g, a.shape) if needs[0] else None,
            _unbroadcast(-g, b.shape) if needs[1] else None,
        )

    return _record(out, (a, b), bwd)


def mul(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data)

    def bwd(g, needs):
        return (
            _unbroadcast(g * b.data, a.shape) if needs[0] else None,
            _unbroadcast(g * a.data, b.shape) if needs[1] else None,
        )

    return _record(out, (a, b), bwd)


def div(a: TensorLike, b: TensorLike) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data / b.data)

    def bwd(g, needs):
        return (
            _unbroadcast(g / b.data, a.shape) if needs[0] else None,
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape) if needs[1] else None,
        )

    return _record(out, (a, b), bwd)


def neg(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    out = Tensor(-a.data)

    def bwd(g, needs):
        return ((-g) if needs[0] else None,)

    return _record(out, (a,), bwd)


def exp(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.exp(a.data))
    out_data = out.data

    def bwd(g, needs):
        return ((g * out_data) if needs[0] else None,)

    return _record(out, (a,), bwd)


def log(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.log(a.data))

    def bwd(g, needs):
        return ((g / a.data) if needs[0] else None,)

    return _record(out, (a,), bwd)


def sqrt(a: TensorLike) -> Tensor:
    a = as_tensor(a)
    out = Tensor(np.sqrt(a.data))
    out_data = out.data

    def bwd(g, needs):
        return ((g * (0.5 / out_data).astype(np.float32)) if needs[0] else None,)

    return _record(out, (a,), bwd)


def matmul(a: TensorLike, b: TensorLike) -> Tensor:
    """Matrix product; stacked (batched) operands follow numpy semantics.

    Gradients: dA = dC @ B^T, dB = A^T @ dC on the trailing two axes, with
    broadcast batch dims summed back out.
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul requires >=2-d operands, got {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dimensions disagree: {a.shape} @ {b.shape}")
    out = Tensor(a.data @ b.data)

    def bwd(g, needs):
        ga = gb = None
        if needs[0]:
            ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if needs[1]:
            gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ga, gb

    return _record(out, (a, b), bwd)


def reshape(a: TensorLike, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.reshape(shape))
    in_shape = a.shape

    def bwd(g, needs):
        return (g.reshape(in_shape) if needs[0] else None,)

    return _record(out, (a,), bwd)


def transpose(a: TensorLike, axes: Optional[Sequence[int]] = None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    axes = tuple(axes)
    out = Tensor(np.transpose(a.data, axes))
    inverse = tuple(np.argsort(axes))

    def bwd(g, needs):
        return (np.ascontiguousarray(np.transpose(g, inverse)) if needs[0] else None,)

    return _record(out, (a,), bwd)


def concat(tensors: Iterable[TensorLike], axis: int = 0) -> Tensor:
    parts = [as_tensor(t) for t in tensors]
    if not parts:
        raise ShapeError("concat requires at least one tensor")
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis))
    sizes = [p.shape[axis] for p in parts]
    offsets = np.cumsum(sizes)[:-1]

    def bwd(g, needs):
        pieces = np.split(g, offsets, axis=axis)
        return tuple(
            np.ascontiguousarray(piece) if needed else None
            for piece, needed in zip(pieces, needs)
        )

    return _record(out, tuple(parts), bwd)


def _sum_backward(g, in_shape, axis, keepdims):
    if axis is None:
        return np.broadcast_to(g, in_shape).astype(np.float32).copy()
    if not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, in_shape).astype(np.float32).copy()


def tensor_sum(a: TensorLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.sum(axis=axis, keepdims=keepdims))
    in_shape = a.shape

    def bwd(g, needs):
        return (_sum_backward(g, in_shape, axis, keepdims) if needs[0] else None,)

    return _record(out, (a,), bwd)


def tensor_mean(a: TensorLike, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = Tensor(a.data.mean(axis=axis, keepdims=keepdims, dtype=np.float32))
    in_shape = a.shape
    count = a.size if axis is None else np.prod([a.shape[ax] for ax in np.atleast_1d(axis)])
    inv = np.float32(1.0 / count)

    def bwd(g, needs):
        return (_sum_backward(g * inv, in_shape, axis, keepdims) if needs[0] else None,)

    return _record(out, (a,), bwd)


def take(a: TensorLike, indices, axis: int = 0) -> Tensor:
    """Gather slices along ``axis``; scatter-adds gradient back (duplicates sum)."""
    a = as_tensor(a)
    idx = np.asarray(indices, dtype=np.int64)
    out = Tensor(np.take(a.data, idx, axis=axis))
    scalar_index = idx.ndim == 0
    idx_flat = idx.reshape(-1)
    in_shape = a.shape

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        if scalar_index:
            g = np.expand_dims(g, axis)
        gt = np.zeros(in_shape, dtype=np.float32)
        gt_moved = np.moveaxis(gt, axis, 0)
        g_moved = np.moveaxis(
            g.reshape(in_shape[:axis] + (idx_flat.size,) + in_shape[axis + 1 :]), axis, 0
        )
        np.add.at(gt_moved, idx_flat, g_moved)
        return (gt,)

    return _record(out, (a,), bwd)


def gather_index(a: TensorLike, indices) -> Tensor:
    """Per-row gather: ``out[i] = a[i, indices[i]]`` for a 2-d tensor."""
    a = as_tensor(a)
    if a.ndim != 2:
        raise ShapeError(f"gather_index requires a 2-d tensor, got shape {a.shape}")
    idx = np.asarray(indices, dtype=np.int64)
    if idx.shape != (a.shape[0],):
        raise ShapeError(f"index shape {idx.shape} != ({a.shape[0]},)")
    rows = np.arange(a.shape[0])
    out = Tensor(a.data[rows, idx])
    in_shape = a.shape

    def bwd(g, needs):
        if not needs[0]:
            return (None,)
        gt = np.zeros(in_shape, dtype=np.float32)
        np.add.at(gt, (rows, idx), g)
        return (gt,)

    return _record(out, (a,), bwd)
