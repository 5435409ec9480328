"""Minimal reverse-mode automatic differentiation over numpy arrays.

Nodes are `Tensor`s holding a forward value, their parent nodes and a closure
mapping the output gradient to parent gradients. Real-valued losses of
complex intermediates are supported with the convention

    grad(z) = dL/dRe(z) + i * dL/dIm(z)

so that a complex-linear map A back-propagates through A^H and the gradient
landing on a real tensor is the real part of what flows into it.
"""

from __future__ import annotations

from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from mmssdu.core.kspace import adjoint, encode
from mmssdu.errors import ContractError, GraphError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tensor:
    __slots__ = ("data", "parents", "backward_fn", "op", "requires_grad", "name")
    __array_ufunc__ = None

    def __init__(
        self,
        data,
        parents: Tuple["Tensor", ...] = (),
        backward_fn: Optional[BackwardFn] = None,
        op: str = "leaf",
        requires_grad: bool = False,
        name: Optional[str] = None,
    ) -> None:
        self.data = np.asarray(data)
        self.parents = parents
        self.backward_fn = backward_fn
        self.op = op
        self.requires_grad = requires_grad
        self.name = name

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(op={self.op!r}, shape={self.data.shape}, dtype={self.data.dtype}{label})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def is_complex(self) -> bool:
        return np.iscomplexobj(self.data)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)


def parameter(data, name: str) -> Tensor:
    """Trainable leaf."""
    return Tensor(np.array(data, dtype=np.float64, copy=True), requires_grad=True, name=name)


def constant(data) -> Tensor:
    return Tensor(data)


def as_tensor(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _node(data: np.ndarray, parents: Tuple[Tensor, ...], backward_fn: BackwardFn, op: str) -> Tensor:
    if not any(p.requires_grad for p in parents):
        return Tensor(data, op=op)
    return Tensor(data, parents, backward_fn, op, requires_grad=True)


def _fit(grad: np.ndarray, like: np.ndarray) -> np.ndarray:
    """Undo broadcasting and drop the imaginary part for real-valued targets."""
    grad = np.asarray(grad)
    while grad.ndim > like.ndim:
        grad = grad.sum(axis=0)
    for axis, size in enumerate(like.shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    if not np.iscomplexobj(like) and np.iscomplexobj(grad):
        grad = grad.real
    return grad


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,), "neg")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data * b.data, (a, b), lambda g: (g * np.conj(b.data), g * np.conj(a.data)), "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def backward(g):
        return g / np.conj(b.data), -g * np.conj(out / b.data)

    return _node(out, (a, b), backward, "div")


def conj(a) -> Tensor:
    a = as_tensor(a)
    return _node(np.conj(a.data), (a,), lambda g: (np.conj(g),), "conj")


def real(a) -> Tensor:
    a = as_tensor(a)
    return _node(np.real(a.data), (a,), lambda g: (g,), "real")


def imag(a) -> Tensor:
    a = as_tensor(a)
    return _node(np.imag(a.data), (a,), lambda g: (1j * g,), "imag")


def absolute(a) -> Tensor:
    a = as_tensor(a)
    out = np.abs(a.data)

    def backward(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, g * a.data / safe, 0.0),)

    return _node(out, (a,), backward, "abs")


def sqrt(a) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)

    def backward(g):
        safe = np.where(out > 0, out, 1.0)
        return (np.where(out > 0, 0.5 * g / safe, 0.0),)

    return _node(out, (a,), backward, "sqrt")


def total(a) -> Tensor:
    """Sum of all entries."""
    a = as_tensor(a)
    return _node(np.sum(a.data), (a,), lambda g: (np.broadcast_to(g, a.data.shape),), "sum")


def inner(a, b) -> Tensor:
    """Re(sum(conj(a) * b)) as a real scalar."""
    a, b = as_tensor(a), as_tensor(b)
    out = np.real(np.vdot(a.data, b.data))
    return _node(np.asarray(out), (a, b), lambda g: (g * b.data, g * a.data), "inner")


def relu(a) -> Tensor:
    a = as_tensor(a)
    active = a.data > 0
    return _node(np.where(active, a.data, 0.0), (a,), lambda g: (g * active,), "relu")


def _im2col(padded: np.ndarray, k: int, h: int, w: int) -> np.ndarray:
    """(C, H + k - 1, W + k - 1) -> contiguous (C * k * k, H * W) patch matrix."""
    cols = np.empty((padded.shape[0], k, k, h, w), dtype=padded.dtype)
    for di in range(k):
        for dj in range(k):
            cols[:, di, dj] = padded[:, di : di + h, dj : dj + w]
    return cols.reshape(-1, h * w)


def _col2im(cols: np.ndarray, c: int, k: int, h: int, w: int) -> np.ndarray:
    """Adjoint of _im2col followed by cropping the padding."""
    pad = k // 2
    cols = cols.reshape(c, k, k, h, w)
    padded = np.zeros((c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for di in range(k):
        for dj in range(k):
            padded[:, di : di + h, dj : dj + w] += cols[:, di, dj]
    return padded[:, pad : pad + h, pad : pad + w]


def conv2d(x, weight, bias) -> Tensor:
    """Stride-1 multi-channel 2-D cross-correlation with zero "same" padding.

    x: (C_in, H, W); weight: (C_out, C_in, k, k) with k odd; bias: (C_out,).
    Forward and backward are single matrix products on an im2col patch matrix.
    """
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    k = weight.data.shape[-1]
    if weight.data.ndim != 4 or weight.data.shape[-2] != k or k % 2 == 0:
        raise ContractError(f"conv kernel must be (C_out, C_in, k, k) with odd k, got {weight.data.shape}")
    if x.data.ndim != 3 or x.data.shape[0] != weight.data.shape[1]:
        raise ContractError(f"conv input {x.data.shape} does not match kernel {weight.data.shape}")
    c_in, h, w = x.data.shape
    c_out = weight.data.shape[0]
    pad = k // 2
    cols = _im2col(np.pad(x.data, ((0, 0), (pad, pad), (pad, pad))), k, h, w)
    kernel = weight.data.reshape(c_out, -1)
    out = (kernel @ cols + bias.data[:, None]).reshape(c_out, h, w)

    def backward(g):
        g2 = g.reshape(c_out, h * w)
        grad_w = (g2 @ cols.T).reshape(weight.data.shape)
        grad_b = g2.sum(axis=1)
        grad_x = _col2im(kernel.T @ g2, c_in, k, h, w)
        return grad_x, grad_w, grad_b

    return _node(out, (x, weight, bias), backward, "conv2d")


def to_channels(z) -> Tensor:
    """Complex (H, W) image to a real (2, H, W) real/imag tensor."""
    z = as_tensor(z)
    out = np.stack([np.real(z.data), np.imag(z.data)])
    return _node(out, (z,), lambda g: (g[0] + 1j * g[1],), "to_channels")


def from_channels(t) -> Tensor:
    """Real (2, H, W) tensor back to a complex (H, W) image."""
    t = as_tensor(t)
    if t.data.shape[0] != 2:
        raise ContractError(f"expected 2 channels, got {t.data.shape[0]}")
    out = t.data[0] + 1j * t.data[1]
    return _node(out, (t,), lambda g: (np.stack([np.real(g), np.imag(g)]),), "from_channels")


def encode_op(x, maps: np.ndarray, mask: np.ndarray) -> Tensor:
    """Differentiable E_Omega with constant coil maps and mask."""
    x = as_tensor(x)
    return _node(encode(x.data, maps, mask), (x,), lambda g: (adjoint(g, maps, mask),), "encode")


def adjoint_op(y, maps: np.ndarray, mask: np.ndarray) -> Tensor:
    """Differentiable E_Omega^H with constant coil maps and mask."""
    y = as_tensor(y)
    return _node(adjoint(y.data, maps, mask), (y,), lambda g: (encode(g, maps, mask),), "adjoint")


def gram_op(x, maps: np.ndarray, mask: np.ndarray) -> Tensor:
    """E_Omega^H E_Omega as one self-adjoint node."""
    x = as_tensor(x)

    def apply(v: np.ndarray) -> np.ndarray:
        return adjoint(encode(v, maps, mask), maps, mask)

    return _node(apply(x.data), (x,), lambda g: (apply(g),), "gram")


def _topological_order(output: Tensor) -> List[Tensor]:
    order: List[Tensor] = []
    state: Dict[int, int] = {}  # 1 = on stack, 2 = done
    stack: List[Tuple[Tensor, bool]] = [(output, False)]
    while stack:
        node, expanded = stack.pop()
        key = id(node)
        if expanded:
            state[key] = 2
            order.append(node)
            continue
        if state.get(key) == 2:
            continue
        if state.get(key) == 1:
            raise GraphError(f"cycle detected at node {node!r}")
        state[key] = 1
        stack.append((node, True))
        for parent in node.parents:
            status = state.get(id(parent))
            if status == 1:
                raise GraphError(f"cycle detected at node {parent!r}")
            if status is None:
                stack.append((parent, False))
    return order


class ComputeGraph:
    """Acyclic view of every node the output depends on, in evaluation order."""

    def __init__(self, output: Tensor) -> None:
        self.output = output
        self.nodes = _topological_order(output)

    def __len__(self) -> int:
        return len(self.nodes)

    def edges(self) -> List[Tuple[int, int]]:
        index = {id(node): i for i, node in enumerate(self.nodes)}
        return [(index[id(p)], i) for i, node in enumerate(self.nodes) for p in node.parents]

    def ops(self) -> Dict[str, int]:
        counts: Dict[str, int] = {}
        for node in self.nodes:
            counts[node.op] = counts.get(node.op, 0) + 1
        return counts

    def leaves(self) -> List[Tensor]:
        return [node for node in self.nodes if node.requires_grad and not node.parents]


def backward(
    graph: ComputeGraph,
    loss_node: Optional[Tensor] = None,
    params: Optional[Dict[str, Tensor]] = None,
) -> Dict[str, np.ndarray]:
    """Gradients of a real scalar node w.r.t. every named trainable leaf.

    Leaves listed in `params` that the loss does not reach get zero gradients.
    """
    loss = graph.output if loss_node is None else loss_node
    if loss is not graph.output:
        graph = ComputeGraph(loss)
    if loss.data.size != 1 or np.iscomplexobj(loss.data):
        raise ContractError(f"loss must be a real scalar, got shape {loss.data.shape} dtype {loss.data.dtype}")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data, dtype=np.float64)}
    for node in reversed(graph.nodes):
        g = grads.get(id(node))
        if g is None or node.backward_fn is None:
            continue
        for parent, parent_grad in zip(node.parents, node.backward_fn(g)):
            if parent_grad is None or not parent.requires_grad:
                continue
            parent_grad = _fit(parent_grad, parent.data)
            key = id(parent)
            grads[key] = grads[key] + parent_grad if key in grads else parent_grad

    out: Dict[str, np.ndarray] = {}
    for leaf in graph.leaves():
        if leaf.name is not None:
            out[leaf.name] = np.asarray(grads.get(id(leaf), np.zeros_like(leaf.data)), dtype=leaf.data.dtype)
    for name, tensor in (params or {}).items():
        out.setdefault(name, np.zeros_like(tensor.data))
    return out


def value(t) -> np.ndarray:
    return as_tensor(t).data


def collect(tensors: Iterable[Tensor]) -> Dict[str, Tensor]:
    return {t.name: t for t in tensors if t.name is not None}


__all__ = [
    "ComputeGraph",
    "Tensor",
    "absolute",
    "add",
    "adjoint_op",
    "as_tensor",
    "backward",
    "conj",
    "constant",
    "conv2d",
    "div",
    "encode_op",
    "from_channels",
    "gram_op",
    "imag",
    "inner",
    "mul",
    "neg",
    "parameter",
    "real",
    "relu",
    "sqrt",
    "sub",
    "to_channels",
    "total",
    "value",
]
