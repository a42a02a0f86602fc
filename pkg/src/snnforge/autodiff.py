"""Dense time-major tensors with a tape-based reverse-mode gradient engine.

Only the operations the spiking modules need are provided. Tensors are
immutable; every operation allocates a new tensor and, when any operand
requires a gradient, a node that links back to the operand nodes. A
:class:`Tape` is the topologically ordered node list reachable from a root.
"""
from __future__ import annotations

import contextlib
import threading
from typing import Any, Callable, Iterator, Optional, Sequence

import numpy as np

from .errors import DimensionError, UsageError

__all__ = [
    "Tensor", "TimeTensor", "Node", "Tape", "Gradients", "Function",
    "Context", "as_tensor", "backward", "matmul_time", "max_over_time",
    "softmax_cross_entropy", "time_shift", "get_dtype", "set_precision",
    "precision",
]

_DTYPES = {32: np.float32, 64: np.float64}
_local = threading.local()


def get_dtype() -> type:
    return getattr(_local, "dtype", np.float32)


def set_precision(bits: int) -> None:
    """Select the floating point width for tensors created in this thread."""
    if bits not in _DTYPES:
        raise ValueError(f"precision must be 32 or 64, got {bits}")
    _local.dtype = _DTYPES[bits]


@contextlib.contextmanager
def precision(bits: int) -> Iterator[None]:
    previous = get_dtype()
    set_precision(bits)
    try:
        yield
    finally:
        _local.dtype = previous


class Node:
    """One recorded operation on the gradient tape."""

    __slots__ = ("op", "inputs", "backward_fn", "shapes", "ctx")

    def __init__(self, op: str, inputs: tuple, backward_fn: Optional[Callable],
                 shapes: tuple, ctx: Optional["Context"] = None) -> None:
        self.op = op
        # (parent node, output index) pairs; None where the operand is constant
        self.inputs = inputs
        self.backward_fn = backward_fn
        self.shapes = shapes
        self.ctx = ctx

    @property
    def is_leaf(self) -> bool:
        return self.backward_fn is None

    def __repr__(self) -> str:
        return f"Node({self.op}, outputs={len(self.shapes)})"


class Tensor:
    """Immutable numeric array with an optional tape node."""

    __slots__ = ("data", "requires_grad", "node", "index")
    __array_priority__ = 100

    def __init__(self, data: Any, requires_grad: bool = False,
                 dtype: Optional[type] = None) -> None:
        arr = np.array(data, dtype=dtype or get_dtype())
        arr.flags.writeable = False
        self._check(arr)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.node = Node("leaf", (), None, (arr.shape,)) if requires_grad else None
        self.index = 0

    def _check(self, arr: np.ndarray) -> None:
        pass

    @classmethod
    def _result(cls, data: np.ndarray, node: Optional[Node] = None,
                index: int = 0) -> "Tensor":
        if not isinstance(data, np.ndarray):
            data = np.asarray(data)
        out_cls = TimeTensor if data.ndim == 3 else Tensor
        out = object.__new__(out_cls)
        data.flags.writeable = False
        out.data = data
        out.requires_grad = node is not None
        out.node = node
        out.index = index
        return out

    @property
    def tape_node(self) -> Optional[Node]:
        return self.node

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor._result(self.data)

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"{type(self).__name__}(shape={self.shape}{grad})"

    def __len__(self) -> int:
        return len(self.data)

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(as_tensor(other, like=self)))

    def __rsub__(self, other):
        return add(as_tensor(other, like=self), neg(self))

    def __neg__(self):
        return neg(self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise UsageError("division by a tensor is not supported")
        return mul(self, 1.0 / other)

    def sum(self) -> "Tensor":
        return reduce_sum(self)

    def mean(self) -> "Tensor":
        return mul(reduce_sum(self), 1.0 / self.data.size)


class TimeTensor(Tensor):
    """Tensor laid out as ``[steps, batch, units]``."""

    __slots__ = ()

    def _check(self, arr: np.ndarray) -> None:
        if arr.ndim != 3:
            raise DimensionError(
                f"TimeTensor needs shape (steps, batch, units), got {arr.shape}")

    @property
    def steps(self) -> int:
        return self.data.shape[0]

    @property
    def batch(self) -> int:
        return self.data.shape[1]

    @property
    def units(self) -> int:
        return self.data.shape[2]


def as_tensor(value: Any, like: Optional[Tensor] = None) -> Tensor:
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    arr = np.asarray(value, dtype=dtype or get_dtype())
    return Tensor._result(np.array(arr))


def _record(op: str, data: np.ndarray, inputs: Sequence[Tensor],
            backward_fn: Callable) -> Tensor:
    if not any(t.requires_grad for t in inputs):
        return Tensor._result(data)
    refs = tuple((t.node, t.index) if t.requires_grad else None for t in inputs)
    node = Node(op, refs, backward_fn, (data.shape,))
    return Tensor._result(data, node)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Any, b: Any) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    shape_a, shape_b = a.shape, b.shape

    def grad_fn(g):
        return _unbroadcast(g, shape_a), _unbroadcast(g, shape_b)

    return _record("add", a.data + b.data, (a, b), grad_fn)


def neg(a: Tensor) -> Tensor:
    return _record("neg", -a.data, (a,), lambda g: (-g,))


def mul(a: Any, b: Any) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    da, db = a.data, b.data

    def grad_fn(g):
        return _unbroadcast(g * db, da.shape), _unbroadcast(g * da, db.shape)

    return _record("mul", da * db, (a, b), grad_fn)


def reduce_sum(a: Tensor) -> Tensor:
    shape = a.shape
    return _record("sum", np.asarray(a.data.sum()), (a,),
                   lambda g: (np.broadcast_to(g, shape).copy(),))


def matmul_time(inputs: Any, weights: Any) -> TimeTensor:
    """Project every time step through ``weights``: ``[T,B,N] @ [N,M]``."""
    x = as_tensor(inputs)
    w = as_tensor(weights, like=x)
    if x.ndim != 3 or w.ndim != 2 or x.shape[2] != w.shape[0]:
        raise DimensionError(
            f"cannot project input of shape {x.shape} "
            f"through weights of shape {w.shape}")
    xd, wd = x.data, w.data
    n, m = wd.shape

    def grad_fn(g):
        grad_x = g @ wd.T
        grad_w = xd.reshape(-1, n).T @ g.reshape(-1, m)
        return grad_x, grad_w

    return _record("matmul_time", xd @ wd, (x, w), grad_fn)


def max_over_time(inputs: Tensor) -> tuple[Tensor, np.ndarray]:
    """Maximum along the time axis and the earliest step attaining it.

    The gradient is routed entirely to the returned argmax step.
    """
    x = as_tensor(inputs)
    if x.ndim != 3:
        raise DimensionError(f"expected [T, B, N] input, got shape {x.shape}")
    if x.shape[0] == 0:
        raise DimensionError("max_over_time needs at least one time step")
    argmax = np.argmax(x.data, axis=0)
    values = np.take_along_axis(x.data, argmax[None], axis=0)[0]
    shape = x.shape

    def grad_fn(g):
        grad = np.zeros(shape, dtype=g.dtype)
        np.put_along_axis(grad, argmax[None], g[None], axis=0)
        return (grad,)

    argmax.flags.writeable = False
    return _record("max_over_time", values, (x,), grad_fn), argmax


def softmax_cross_entropy(scores: Tensor, labels: Any) -> Tensor:
    """Batch mean of ``-log softmax(scores)[label]``."""
    s = as_tensor(scores)
    labels = np.asarray(labels)
    if s.ndim != 2 or labels.shape != (s.shape[0],):
        raise DimensionError(
            f"scores {s.shape} and labels {labels.shape} are incompatible")
    n_batch, n_classes = s.shape
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise IndexError(f"labels must lie in [0, {n_classes})")
    shifted = s.data - s.data.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_prob = shifted - log_norm
    rows = np.arange(n_batch)
    loss = np.asarray(-log_prob[rows, labels].mean())

    def grad_fn(g):
        grad = np.exp(log_prob)
        grad[rows, labels] -= 1.0
        return (grad * (g / n_batch),)

    return _record("softmax_cross_entropy", loss, (s,), grad_fn)


def time_shift(inputs: Tensor, steps: int = 1) -> Tensor:
    """Delay a time-major tensor by ``steps``, filling the start with zeros."""
    x = as_tensor(inputs)
    out = np.zeros_like(x.data)
    if steps < x.shape[0]:
        out[steps:] = x.data[:x.shape[0] - steps]

    def grad_fn(g):
        grad = np.zeros_like(g)
        if steps < g.shape[0]:
            grad[:g.shape[0] - steps] = g[steps:]
        return (grad,)

    return _record("time_shift", out, (x,), grad_fn)


class Context:
    """Per-call storage handed to a :class:`Function`'s forward and backward.

    Saved values carry a provenance kind (``"parameter"``, ``"injected"``,
    ``"simulated"``, ...). Every read during backward is logged so that a
    run can prove which data its gradients depended on.
    """

    def __init__(self, op: str, injected: tuple = ()) -> None:
        self.op = op
        self._values: dict[str, Any] = {}
        self._kinds: dict[str, str] = {}
        self._injected = injected
        self.reads: list[tuple[str, str, str]] = []
        self._logging = False

    def save(self, kind: str = "parameter", **values: Any) -> None:
        for name, value in values.items():
            if isinstance(value, np.ndarray):
                value = value.view()
                value.flags.writeable = False
            self._values[name] = value
            self._kinds[name] = kind

    def saved(self, name: str) -> Any:
        if self._logging:
            self.reads.append((self.op, name, self._kinds[name]))
        return self._values[name]

    def saved_kind(self, name: str) -> str:
        return self._kinds[name]

    @property
    def injected(self) -> tuple:
        if self._logging:
            self.reads.append((self.op, "injected", "injected"))
        return self._injected


class Function:
    """Differentiable operation with user-defined forward and backward rules.

    Subclasses implement ``forward(ctx, *arrays, **options)`` returning one
    array or a tuple of arrays, and ``backward(ctx, *output_grads)`` returning
    one gradient (or ``None``) per positional input. Observation arrays
    passed as ``injected`` at apply time are exposed to both rules as
    ``ctx.injected``.
    """

    @staticmethod
    def forward(ctx: Context, *inputs: np.ndarray, **options: Any):
        raise NotImplementedError

    @staticmethod
    def backward(ctx: Context, *grad_outputs: np.ndarray):
        raise NotImplementedError

    @classmethod
    def apply(cls, *inputs: Any, injected: Sequence[np.ndarray] = (),
              **options: Any):
        tensors = [as_tensor(x) for x in inputs]
        frozen = []
        for arr in injected:
            arr = np.asarray(arr).view()
            arr.flags.writeable = False
            frozen.append(arr)
        ctx = Context(cls.__name__, tuple(frozen))
        outputs = cls.forward(ctx, *(t.data for t in tensors), **options)
        single = not isinstance(outputs, tuple)
        if single:
            outputs = (outputs,)
        # fresh writable arrays are adopted; views of frozen data are copied
        outputs = tuple(o if o.flags.owndata and o.flags.writeable else np.array(o)
                        for o in map(np.asarray, outputs))
        if not any(t.requires_grad for t in tensors):
            results = tuple(Tensor._result(o) for o in outputs)
            return results[0] if single else results
        refs = tuple((t.node, t.index) if t.requires_grad else None
                     for t in tensors)

        def grad_fn(*grads):
            return cls.backward(ctx, *grads)

        node = Node(cls.__name__, refs, grad_fn,
                    tuple(o.shape for o in outputs), ctx)
        results = tuple(Tensor._result(o, node, i) for i, o in enumerate(outputs))
        return results[0] if single else results


class Gradients:
    """Result of a backward sweep: gradient per (tape node, output index)."""

    def __init__(self, grads: dict, reads: list) -> None:
        self._grads = grads
        self.reads = reads

    def __getitem__(self, tensor: Tensor) -> np.ndarray:
        if tensor.node is None or (tensor.node, tensor.index) not in self._grads:
            raise KeyError(f"{tensor!r} is not on the tape")
        return self._grads[(tensor.node, tensor.index)]

    def __contains__(self, tensor: Tensor) -> bool:
        return tensor.node is not None and (tensor.node, tensor.index) in self._grads

    def get(self, tensor: Tensor, default: Any = None) -> Any:
        return self[tensor] if tensor in self else default

    def by_node(self) -> dict:
        return dict(self._grads)

    def read_kinds(self) -> set[str]:
        return {kind for _, _, kind in self.reads}


class Tape:
    """Nodes reachable from a root, ordered so every input precedes its user."""

    def __init__(self, root: Tensor) -> None:
        if root.node is None:
            raise UsageError("root tensor is not on a gradient tape "
                             "(no operand requires a gradient)")
        self.root = root
        self.nodes = self._order(root.node)

    @staticmethod
    def _order(root: Node) -> list[Node]:
        order: list[Node] = []
        visited: set[int] = set()
        stack: list[tuple[Node, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for ref in reversed(node.inputs):
                if ref is not None and id(ref[0]) not in visited:
                    stack.append((ref[0], False))
        return order

    def backward(self, grad: Optional[np.ndarray] = None,
                 audit: bool = True) -> Gradients:
        root = self.root
        if grad is None:
            if root.data.size != 1:
                raise UsageError(
                    f"backward from a non-scalar root of shape {root.shape} "
                    "needs an explicit output gradient")
            grad = np.ones_like(root.data)
        grads: dict[tuple[Node, int], np.ndarray] = {
            (root.node, root.index): np.asarray(grad, dtype=root.dtype)}
        reads: list = []
        for node in reversed(self.nodes):
            outs = [grads.get((node, i)) for i in range(len(node.shapes))]
            if node.is_leaf or all(g is None for g in outs):
                continue
            outs = [np.zeros(shape, dtype=root.dtype) if g is None else g
                    for g, shape in zip(outs, node.shapes)]
            if node.ctx is not None:
                node.ctx.reads = []
                node.ctx._logging = audit
            try:
                in_grads = node.backward_fn(*outs)
            finally:
                if node.ctx is not None:
                    node.ctx._logging = False
                    reads.extend(node.ctx.reads)
            if not isinstance(in_grads, tuple):
                in_grads = (in_grads,)
            if len(in_grads) != len(node.inputs):
                raise UsageError(
                    f"{node.op}.backward returned {len(in_grads)} gradients "
                    f"for {len(node.inputs)} inputs")
            for ref, g in zip(node.inputs, in_grads):
                if ref is None or g is None:
                    continue
                key = (ref[0], ref[1])
                g = np.asarray(g)
                expected = ref[0].shapes[ref[1]]
                if g.shape != expected:
                    raise DimensionError(
                        f"{node.op}.backward produced gradient {g.shape} "
                        f"for operand {expected}")
                grads[key] = g if key not in grads else grads[key] + g
        return Gradients(grads, reads)


def backward(root: Tensor, grad: Optional[np.ndarray] = None) -> Gradients:
    """Reverse sweep from ``root``; gradients are summed at fan-out."""
    return Tape(root).backward(grad)

