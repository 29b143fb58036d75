"""Taped tensor type and the reverse-mode backward sweep.

A ``Tensor`` wraps a float64 numpy array. Operations in :mod:`ops` and
:mod:`kernels` attach a graph node (parent handles plus a vector-Jacobian
closure) to their output whenever gradients are being recorded. Creation
order of nodes is a topological order by construction, so ``backward``
only has to walk the subgraph reachable from the root once, in reverse.
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

from gaitdecode.errors import ContractError, NonFiniteError

_GRAD_ENABLED = True


class no_grad:
    """Context manager that disables graph recording (eval-mode forward)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class _Node:
    """One recorded operation: parent tensors plus the VJP closure."""

    __slots__ = ("parents", "vjp")

    def __init__(self, parents: Sequence["Tensor"], vjp: Callable):
        self.parents = parents
        self.vjp = vjp


class Tensor:
    """Dense float64 array with optional gradient buffer and tape node."""

    __slots__ = ("data", "requires_grad", "grad", "node")

    def __init__(self, data, requires_grad: bool = False, *, _validate: bool = True):
        arr = np.asarray(data, dtype=np.float64)
        if _validate and not np.all(np.isfinite(arr)):
            raise NonFiniteError("tensor values must be finite")
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = (
            np.zeros_like(arr) if requires_grad else None
        )
        self.node: Optional[_Node] = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data.reshape(()))

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad[...] = 0.0

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy(), _validate=False)

    def backward(self) -> None:
        backward(self)

    # operator sugar; the heavy lifting lives in ops.py
    def __add__(self, other):
        from gaitdecode.autodiff import ops

        return ops.add(self, ops.as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        from gaitdecode.autodiff import ops

        return ops.sub(self, ops.as_tensor(other))

    def __rsub__(self, other):
        from gaitdecode.autodiff import ops

        return ops.sub(ops.as_tensor(other), self)

    def __mul__(self, other):
        from gaitdecode.autodiff import ops

        return ops.mul(self, ops.as_tensor(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        from gaitdecode.autodiff import ops

        return ops.div(self, ops.as_tensor(other))

    def __rtruediv__(self, other):
        from gaitdecode.autodiff import ops

        return ops.div(ops.as_tensor(other), self)

    def __neg__(self):
        from gaitdecode.autodiff import ops

        return ops.mul(self, ops.as_tensor(-1.0))

    def __matmul__(self, other):
        from gaitdecode.autodiff import ops

        return ops.matmul(self, other)

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"


def make_output(data: np.ndarray, parents: Sequence[Tensor], vjp: Callable) -> Tensor:
    """Wrap an op result, recording a node when gradients are live."""
    out = Tensor(data, _validate=False)
    if _GRAD_ENABLED and any(p.requires_grad or p.node is not None for p in parents):
        out.node = _Node(tuple(parents), vjp)
    return out


def _topological_order(root: Tensor) -> list:
    """Tensors reachable from ``root`` that carry nodes, parents first.

    Iterative DFS; each node is visited exactly once even when it feeds
    several consumers.
    """
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        t, expanded = stack.pop()
        if t.node is None:
            continue
        if expanded:
            order.append(t)
            continue
        if id(t) in seen:
            continue
        seen.add(id(t))
        stack.append((t, True))
        for p in t.node.parents:
            if p.node is not None and id(p) not in seen:
                stack.append((p, False))
    return order


def backward(root: Tensor) -> None:
    """Reverse sweep from a scalar root, accumulating into ``.grad`` buffers.

    Tensors with ``requires_grad`` that do not participate in the graph
    keep their (zero-initialised) gradients untouched.
    """
    if root.size != 1:
        raise ContractError(
            f"backward root must be scalar, got shape {root.shape}"
        )
    seed = np.ones_like(root.data)
    if root.requires_grad:
        root.grad += seed
    if root.node is None:
        return
    order = _topological_order(root)
    pending: dict[int, np.ndarray] = {id(root): seed}
    # arrays we allocated ourselves and may accumulate into in place;
    # vjp outputs can alias saved buffers, so they are never mutated
    owned: set[int] = set()
    for t in reversed(order):
        g = pending.pop(id(t), None)
        if g is None:
            continue
        owned.discard(id(t))
        parent_grads = t.node.vjp(g)
        for p, pg in zip(t.node.parents, parent_grads):
            if pg is None:
                continue
            if p.requires_grad:
                p.grad += pg
            if p.node is not None:
                acc = pending.get(id(p))
                if acc is None:
                    pending[id(p)] = pg
                elif id(p) in owned:
                    acc += pg
                else:
                    pending[id(p)] = acc + pg
                    owned.add(id(p))
