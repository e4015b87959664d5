# Copyright: (c) 2024, ucloudnet contributors
# GNU General Public License v3.0+ (see COPYING or https://www.gnu.org/licenses/gpl-3.0.txt)

from contextlib import contextmanager
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ShapeError

__all__ = ["Tensor", "Graph", "Node", "backward", "current_graph", "reset_graph",
    "no_grad", "is_grad_enabled", "default_dtype", "set_default_dtype", "dtype_mode", "float64_mode"]


_dtype = np.dtype(np.float32)
_grad_enabled = True


def default_dtype() -> np.dtype:
    return _dtype

def set_default_dtype(dtype):
    global _dtype
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"Unsupported element type {dtype}, use float32 or float64")
    _dtype = dtype

@contextmanager
def dtype_mode(dtype):
    """Construct tensors of `dtype` inside the block."""
    old = _dtype
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(old)

def float64_mode():
    """Construct tensors in 64-bit inside the block (gradient checks)."""
    return dtype_mode(np.float64)

def is_grad_enabled() -> bool:
    return _grad_enabled

@contextmanager
def no_grad():
    global _grad_enabled
    old = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = old


class Tensor():
    def __init__(self, data, requires_grad:bool=False, dtype=None):
        arr = np.asarray(data, dtype=dtype if dtype is not None else _dtype)
        if arr.ndim != 4:
            raise ShapeError(f"Tensor must be 4-D (N,C,H,W), got shape {arr.shape}")
        self.data = np.ascontiguousarray(arr)
        self.requires_grad = requires_grad
        self.grad:Optional[np.ndarray] = None
        self.node:Optional[Node] = None

    @property
    def shape(self) -> Tuple[int, int, int, int]:
        return self.data.shape

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def numel(self) -> int:
        return int(self.data.size)

    def is_leaf(self) -> bool:
        return self.node is None

    def item(self) -> float:
        if self.numel != 1:
            raise ShapeError(f"item() needs a (1,1,1,1) tensor, got {self.shape}")
        return float(self.data.reshape(-1)[0])

    def accumulate_grad(self, g:np.ndarray):
        if not self.requires_grad:
            return
        if g.shape != self.data.shape:
            raise ShapeError(f"Gradient shape {g.shape} does not match tensor shape {self.shape}")
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self):
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def backward(self):
        backward(self)

    @staticmethod
    def scalar(value:float, requires_grad:bool=False, dtype=None) -> "Tensor":
        return Tensor(np.full((1, 1, 1, 1), value), requires_grad, dtype)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"


class Node():
    def __init__(self, index:int, op:str, inputs:Sequence[Tensor], output:Tensor,
            backward_fn:Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]):
        self.index = index
        self.op = op
        self.inputs = tuple(inputs)
        self.output = output
        # saved values live in the closure
        self.backward_fn = backward_fn


class Graph():
    """Append-only tape of operation records.

    Every node is appended after its inputs were produced, so the list order is a
    topological order and backward simply walks it in reverse.
    """
    def __init__(self):
        self.nodes:List[Node] = []

    def append(self, op:str, inputs:Sequence[Tensor], output:Tensor, backward_fn) -> Node:
        node = Node(len(self.nodes), op, inputs, output, backward_fn)
        self.nodes.append(node)
        output.node = node
        return node

    def reset(self):
        for n in self.nodes:
            n.output.node = None
        self.nodes = []

    def __len__(self):
        return len(self.nodes)

    def __iter__(self) -> Iterator[Node]:
        return iter(self.nodes)


_graph = Graph()

def current_graph() -> Graph:
    return _graph

def reset_graph():
    _graph.reset()


def record(op:str, inputs:Sequence[Tensor], out_data:np.ndarray, backward_fn) -> Tensor:
    """Wrap a forward result and append it to the tape if any input needs a gradient."""
    requires_grad = _grad_enabled and any(t.requires_grad for t in inputs)
    out = Tensor(out_data, requires_grad=requires_grad, dtype=out_data.dtype)
    if requires_grad:
        _graph.append(op, inputs, out, backward_fn)
    return out


def backward(loss:Tensor):
    """Reverse-mode sweep from a (1,1,1,1) loss.

    Gradients accumulate into the grad buffers of leaf tensors, so a second call
    without zeroing doubles them. Intermediate gradients only live during the sweep.
    """
    if loss.shape != (1, 1, 1, 1):
        raise ShapeError(f"backward needs a scalar (1,1,1,1) loss, got {loss.shape}")
    if loss.node is None:
        if not loss.requires_grad:
            raise ValueError("backward called on a tensor that is not part of any graph")
        loss.accumulate_grad(np.ones_like(loss.data))
        return

    graph = _graph
    if loss.node.index >= len(graph.nodes) or graph.nodes[loss.node.index] is not loss.node:
        raise ValueError("loss does not belong to the current graph (was it reset?)")

    grads = {loss.node.index: np.ones_like(loss.data)}
    for i in range(loss.node.index, -1, -1):
        g = grads.pop(i, None)
        if g is None:
            continue
        node = graph.nodes[i]
        input_grads = node.backward_fn(g)
        for t, tg in zip(node.inputs, input_grads):
            if tg is None or not t.requires_grad:
                continue
            if t.node is not None:
                j = t.node.index
                if j in grads:
                    grads[j] = grads[j] + tg
                else:
                    grads[j] = tg
            else:
                t.accumulate_grad(tg)
