"""Shaped arrays and the reverse-mode tape."""
from __future__ import annotations

import threading
from typing import Callable, Sequence

import numpy as np


class KernelFault(FloatingPointError):
    """A kernel operation produced NaN or Inf."""


class ShapeError(ValueError):
    pass


class TapeError(RuntimeError):
    pass


class Tensor:
    """A named float64 array that may take part in differentiation.

    Leaf tensors with ``requires_grad=True`` are parameters; after
    :func:`backward` their gradient sits in ``grad``.
    """

    __slots__ = ("name", "value", "grad", "requires_grad", "is_leaf")

    def __init__(self, value, name: str = "", requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.name = name
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.is_leaf = True

    @property
    def shape(self) -> tuple[int, ...]:
        return self.value.shape

    @property
    def values(self) -> np.ndarray:
        """Row-major flat view of the data."""
        return self.value.reshape(-1)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        tag = f"{self.name!r}, " if self.name else ""
        return f"Tensor({tag}shape={self.shape}, requires_grad={self.requires_grad})"


ParamTensor = Tensor


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


_local = threading.local()


def _stack() -> list:
    if not hasattr(_local, "stack"):
        _local.stack = []
    return _local.stack


def active_tape() -> "Tape | None":
    stack = _stack()
    return stack[-1] if stack else None


class Tape:
    """Ordered record of differentiable operations.

    Use as a context manager; operations executed inside the block whose
    inputs require gradients are recorded. Without an active tape nothing
    is recorded, which is the inference path.
    """

    def __init__(self):
        self._records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _stack().remove(self)

    def __len__(self) -> int:
        return len(self._records)

    def record(self, out: Tensor, inputs: Sequence[Tensor], backward_fn: Callable) -> None:
        if self.consumed:
            raise TapeError("tape already consumed by backward()")
        self._records.append((out, tuple(inputs), backward_fn))


def check_finite(arr: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise KernelFault(f"{op} produced a non-finite value")
    return arr


def make_result(value: np.ndarray, op: str, inputs: Sequence[Tensor],
                backward_fn: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> Tensor:
    """Wrap an op output and record it if any input needs a gradient."""
    out = Tensor(check_finite(value, op))
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        out.is_leaf = False
        tape.record(out, inputs, backward_fn)
    return out


def backward(tape: Tape, loss: Tensor) -> dict[str, np.ndarray]:
    """Populate ``grad`` on every leaf that requires it and return them by name.

    Gradients accumulate into existing ``grad`` arrays, so call
    ``zero_grad`` between independent passes.
    """
    if tape.consumed:
        raise TapeError("backward() called twice on the same tape")
    if loss.value.size != 1:
        raise ShapeError(f"loss must be a scalar, got shape {loss.shape}")
    tape.consumed = True
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    leaves: dict[int, Tensor] = {}
    for out, inputs, fn in reversed(tape._records):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for inp, gi in zip(inputs, fn(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
            if inp.is_leaf:
                leaves[key] = inp
    named = {}
    for key, leaf in leaves.items():
        g = grads[key]
        leaf.grad = g if leaf.grad is None else leaf.grad + g
        named[leaf.name or f"tensor_{key}"] = leaf.grad
    tape._records.clear()
    return named
