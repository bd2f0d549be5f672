"""Tensors that record the operations applied to them.

Each op returns a new :class:`Tensor` holding its parents and a closure that
pushes the output gradient back to them. :func:`backward` walks the recorded
graph in reverse topological order.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Iterable

import numpy as np

_state = {"dtype": np.float32, "grad_enabled": True}


def get_dtype():
    return _state["dtype"]


@contextlib.contextmanager
def precision(dtype):
    """Temporarily switch the dtype new tensors and parameters are created with."""
    old = _state["dtype"]
    _state["dtype"] = np.dtype(dtype).type
    try:
        yield
    finally:
        _state["dtype"] = old


@contextlib.contextmanager
def no_grad():
    old = _state["grad_enabled"]
    _state["grad_enabled"] = False
    try:
        yield
    finally:
        _state["grad_enabled"] = old


def grad_enabled() -> bool:
    return _state["grad_enabled"]


class NonFiniteError(FloatingPointError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str = "", dtype=None):
        self.data = np.asarray(data, dtype=dtype or get_dtype(), order="C")
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.shape}, dtype={self.data.dtype})"

    def accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    # small arithmetic surface; heavier ops live in roadcast.engine.ops
    def __add__(self, other):
        from roadcast.engine import ops
        return ops.add(self, other)

    def __mul__(self, other):
        from roadcast.engine import ops
        return ops.mul(self, other)

    __radd__ = __add__
    __rmul__ = __mul__


class Parameter(Tensor):
    """A trainable tensor."""

    __slots__ = ()

    def __init__(self, data, name: str = ""):
        super().__init__(data, requires_grad=True, name=name)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def make_node(data: np.ndarray, parents: Iterable[Tensor], backward) -> Tensor:
    """Wrap an op result; attach the backward closure only when a parent needs grads."""
    if not np.all(np.isfinite(data)):
        raise NonFiniteError("operation produced NaN or Inf")
    out = Tensor(data, dtype=data.dtype)
    parents = tuple(parents)
    if grad_enabled() and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def backward(root: Tensor) -> None:
    """Reverse-mode sweep from a scalar ``root`` into every reachable tensor's ``.grad``."""
    if root.size != 1:
        raise ValueError(f"backward needs a scalar root, got shape {root.shape}")
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
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    root.accumulate(np.ones_like(root.data))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)
            # intermediate gradients are not needed once propagated
            if not isinstance(node, Parameter):
                node.grad = None
