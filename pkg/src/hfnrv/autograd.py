# Copyright 2026 The hfnrv Authors
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#      http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray. Every op records its parents and a closure that
maps the gradient of its output to the gradients of its inputs; backward()
walks that graph in reverse topological order and accumulates into the
.grad of leaf tensors.
"""
import contextlib
import threading
from typing import Callable, Iterator, List, Optional, Sequence, Tuple
import numpy as np


BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_PRECISIONS = {
    "single": np.float32,
    "high": np.float64,
}


class NonFiniteError(FloatingPointError):
    """An op produced NaN or Inf."""


class _State(threading.local):
    def __init__(self):
        self.grad_enabled = True
        self.dtype = np.float32


_state = _State()


def default_dtype():
    return _state.dtype


def is_grad_enabled() -> bool:
    return _state.grad_enabled


@contextlib.contextmanager
def precision(name: str) -> Iterator[None]:
    """Temporarily switch the dtype new tensors are created with.

    "single" (float32) is the training default; "high" (float64) gives finite
    difference checks the headroom they need.
    """
    try:
        dtype = _PRECISIONS[name]
    except KeyError:
        raise ValueError(
            f"Unknown precision {name!r}, expected one of {sorted(_PRECISIONS)}"
        )
    previous = _state.dtype
    _state.dtype = dtype
    try:
        yield
    finally:
        _state.dtype = previous


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    previous = _state.grad_enabled
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


def _check_finite(data: np.ndarray, op: str):
    if not np.isfinite(data).all():
        raise NonFiniteError(f"{op} produced non-finite values")


class Tensor:
    """A shaped float array, optionally tracked for gradients."""

    # make ndarray <op> Tensor defer to our reflected operators
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.array(data, dtype=dtype or _state.dtype)
        _check_finite(self.data, "tensor")
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[BackwardFn] = None
        self._op = "leaf"

    @staticmethod
    def from_op(
        data: np.ndarray,
        parents: Sequence["Tensor"],
        backward: BackwardFn,
        op: str,
    ) -> "Tensor":
        """Wrap the output of an op, recording the graph edge when tracking."""
        _check_finite(data, op)
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out._op = op
        track = _state.grad_enabled and any(p.requires_grad for p in parents)
        out.requires_grad = track
        out._parents = tuple(parents) if track else ()
        out._backward = backward if track else None
        return out

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single element, shape is {self.shape}")
        return float(self.data.reshape(()))

    def __float__(self) -> float:
        return self.item()

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, op={self._op})"

    def backward(self):
        """Accumulate d(self)/d(leaf) into every reachable leaf's grad."""
        if self.data.size != 1:
            raise ValueError(f"backward() needs a scalar, shape is {self.shape}")
        if not self.requires_grad:
            return
        grads = {id(self): np.ones_like(self.data)}
        for node in reversed(_topological_order(self)):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node._backward is None:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            for parent, parent_grad in zip(node._parents, node._backward(grad)):
                if parent_grad is None or not parent.requires_grad:
                    continue
                assert (
                    parent_grad.shape == parent.shape
                ), f"{node._op}: grad {parent_grad.shape} for input {parent.shape}"
                parent_grad = parent_grad.astype(parent.dtype, copy=False)
                key = id(parent)
                grads[key] = grads[key] + parent_grad if key in grads else parent_grad

    # Operators delegate to hfnrv.ops, imported lazily to avoid an import cycle.

    def __add__(self, other):
        from hfnrv import ops

        return ops.add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        from hfnrv import ops

        return ops.sub(self, other)

    def __rsub__(self, other):
        from hfnrv import ops

        return ops.sub(other, self)

    def __mul__(self, other):
        from hfnrv import ops

        return ops.mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        from hfnrv import ops

        return ops.div(self, other)

    def __rtruediv__(self, other):
        from hfnrv import ops

        return ops.div(other, self)

    def __neg__(self):
        from hfnrv import ops

        return ops.neg(self)

    def __getitem__(self, index):
        from hfnrv import ops

        return ops.getitem(self, index)


class Parameter(Tensor):
    """A trainable leaf tensor; its name is assigned by the owning Module."""

    def __init__(self, data, name: str = "", dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)
        self.name = name

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape})"


def _topological_order(root: Tensor) -> List[Tensor]:
    # iterative post-order DFS; deep decoders overflow the recursion limit
    order: List[Tensor] = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in visited:
                stack.append((parent, False))
    return order


def grad_check(
    fn: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-5
) -> float:
    """Worst relative error between backward() and central differences.

    The inputs must be leaf tensors with requires_grad set; fn must return a
    scalar. Relative error per element is |a - n| / max(|a|, |n|, 1e-3) so that
    vanishing gradients are compared absolutely.
    """
    for t in inputs:
        t.zero_grad()
    out = fn(*inputs)
    out.backward()
    analytic = [
        t.grad.copy() if t.grad is not None else np.zeros_like(t.data) for t in inputs
    ]

    worst = 0.0
    with no_grad():
        for t, grad in zip(inputs, analytic):
            flat = t.data.reshape(-1)
            for i in range(flat.size):
                original = flat[i]
                flat[i] = original + eps
                plus = fn(*inputs).item()
                flat[i] = original - eps
                minus = fn(*inputs).item()
                flat[i] = original
                numeric = (plus - minus) / (2 * eps)
                a = float(grad.reshape(-1)[i])
                denom = max(abs(a), abs(numeric), 1e-3)
                worst = max(worst, abs(a - numeric) / denom)
    return worst
