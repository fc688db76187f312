"""
Tape-based reverse-mode automatic differentiation over dense float64 arrays.

A Tensor wraps a numpy array and remembers the parents and the local
backward rule that produced it. The graph is rebuilt on every forward pass;
`gradients()` walks it once in reverse topological order and returns
d(loss)/d(t) for each requested tensor. Nodes are never mutated during the
backward pass, so a graph can be differentiated any number of times.

Every backward rule maps the upstream gradient `g` (same shape as the node)
to one gradient per parent (or None when the parent needs no gradient).
"""

from collections.abc import Callable, Sequence
from typing import Any

import numpy as np

from orlab.types import ErrorCode, OrlabError

BackwardFn = Callable[[np.ndarray], tuple[np.ndarray | None, ...]]

_SQRT_2_OVER_PI = float(np.sqrt(2.0 / np.pi))
_GELU_C = 0.044715


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum `grad` down to `shape`, undoing numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    """
    A node in the differentiation graph.

    Leaf tensors (parameters, inputs) have no parents. Tensors produced by
    operations hold their parents and a backward rule. Arithmetic with plain
    numbers or numpy arrays wraps them as constant leaves.

    Attributes:
        data: The float64 value of the node.
        name: Optional label, used for parameters.
    """

    __slots__ = ("data", "name", "_parents", "_backward")

    # numpy defers mixed arithmetic (ndarray + Tensor) to Tensor
    __array_ufunc__ = None

    def __init__(
        self,
        data: Any,
        parents: tuple["Tensor", ...] = (),
        backward: BackwardFn | None = None,
        name: str = "",
    ) -> None:
        self.data = np.asarray(data, dtype=np.float64)
        self.name = name
        self._parents = parents
        self._backward = backward

    # =========================================================================
    # PROPERTIES
    # =========================================================================

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def ndim(self) -> int:
        return int(self.data.ndim)

    @property
    def is_leaf(self) -> bool:
        return not self._parents

    def numpy(self) -> np.ndarray:
        """Return a copy of the value."""
        return self.data.copy()

    def item(self) -> float:
        if self.data.size != 1:
            raise OrlabError(
                f"item() needs a single-element tensor, got shape {self.shape}",
                ErrorCode.GRAD_NOT_SCALAR,
            )
        return float(self.data.reshape(()))

    def detach(self) -> "Tensor":
        """A constant leaf with the same value; gradients stop here."""
        return Tensor(self.data)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label})"

    # =========================================================================
    # ARITHMETIC
    # =========================================================================

    def __add__(self, other: Any) -> "Tensor":
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape

        def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
            return _unbroadcast(g, a_shape), _unbroadcast(g, b_shape)

        return Tensor(self.data + other.data, (self, other), backward)

    __radd__ = __add__

    def __sub__(self, other: Any) -> "Tensor":
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape

        def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
            return _unbroadcast(g, a_shape), _unbroadcast(-g, b_shape)

        return Tensor(self.data - other.data, (self, other), backward)

    def __rsub__(self, other: Any) -> "Tensor":
        return as_tensor(other) - self

    def __mul__(self, other: Any) -> "Tensor":
        other = as_tensor(other)
        a, b = self.data, other.data

        def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
            return _unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)

        return Tensor(a * b, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other: Any) -> "Tensor":
        other = as_tensor(other)
        a, b = self.data, other.data

        def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
            return _unbroadcast(g / b, a.shape), _unbroadcast(-g * a / (b * b), b.shape)

        return Tensor(a / b, (self, other), backward)

    def __rtruediv__(self, other: Any) -> "Tensor":
        return as_tensor(other) / self

    def __neg__(self) -> "Tensor":
        def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
            return (-g,)

        return Tensor(-self.data, (self,), backward)

    def __pow__(self, exponent: float) -> "Tensor":
        x = self.data
        p = float(exponent)

        def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
            return (g * p * x ** (p - 1.0),)

        return Tensor(x**p, (self,), backward)

    def __matmul__(self, other: Any) -> "Tensor":
        other = as_tensor(other)
        a, b = self.data, other.data
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise OrlabError(
                f"matmul needs (n, k) @ (k, m), got {a.shape} @ {b.shape}",
                ErrorCode.GRAD_SHAPE_MISMATCH,
            )

        def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
            return g @ b.T, a.T @ g

        return Tensor(a @ b, (self, other), backward)

    def __getitem__(self, index: Any) -> "Tensor":
        shape = self.shape

        def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
            full = np.zeros(shape)
            np.add.at(full, index, g)
            return (full,)

        return Tensor(self.data[index], (self,), backward)

    # =========================================================================
    # REDUCTIONS AND SHAPE
    # =========================================================================

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor(self.data.sum(axis=axis, keepdims=keepdims), (self,), backward)

    def mean(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) / float(count)

    def reshape(self, *shape: int) -> "Tensor":
        original = self.shape

        def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
            return (g.reshape(original),)

        return Tensor(self.data.reshape(*shape), (self,), backward)

    @property
    def T(self) -> "Tensor":  # noqa: N802
        def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
            return (g.T,)

        return Tensor(self.data.T, (self,), backward)

    # =========================================================================
    # ELEMENTWISE FUNCTIONS
    # =========================================================================

    def exp(self) -> "Tensor":
        out = np.exp(self.data)

        def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
            return (g * out,)

        return Tensor(out, (self,), backward)

    def log(self) -> "Tensor":
        x = self.data

        def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
            return (g / x,)

        return Tensor(np.log(x), (self,), backward)

    def sqrt(self) -> "Tensor":
        out = np.sqrt(self.data)

        def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
            return (g * 0.5 / out,)

        return Tensor(out, (self,), backward)

    def tanh(self) -> "Tensor":
        out = np.tanh(self.data)

        def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
            return (g * (1.0 - out * out),)

        return Tensor(out, (self,), backward)

    def sigmoid(self) -> "Tensor":
        out = _stable_sigmoid(self.data)

        def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
            return (g * out * (1.0 - out),)

        return Tensor(out, (self,), backward)

    def log_sigmoid(self) -> "Tensor":
        """log(sigmoid(x)), computed without overflow for large |x|."""
        x = self.data
        out = -(np.maximum(-x, 0.0) + np.log1p(np.exp(-np.abs(x))))

        def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
            return (g * _stable_sigmoid(-x),)

        return Tensor(out, (self,), backward)

    def relu(self) -> "Tensor":
        x = self.data

        def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
            return (g * (x > 0.0),)

        return Tensor(np.maximum(x, 0.0), (self,), backward)

    def gelu(self) -> "Tensor":
        """GELU, tanh approximation."""
        x = self.data
        inner = _SQRT_2_OVER_PI * (x + _GELU_C * x**3)
        t = np.tanh(inner)

        def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
            d_inner = _SQRT_2_OVER_PI * (1.0 + 3.0 * _GELU_C * x * x)
            return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

        return Tensor(0.5 * x * (1.0 + t), (self,), backward)

    def clip(self, low: float, high: float) -> "Tensor":
        """Clamp to [low, high]; gradient is zero where the clamp is active."""
        x = self.data

        def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
            return (g * ((x >= low) & (x <= high)),)

        return Tensor(np.clip(x, low, high), (self,), backward)

    def square(self) -> "Tensor":
        return self * self


# =============================================================================
# FREE FUNCTIONS
# =============================================================================


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def as_tensor(value: Any) -> Tensor:
    """Wrap numbers and arrays as constant leaves; pass tensors through."""
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def concat(tensors: Sequence[Tensor | np.ndarray], axis: int = -1) -> Tensor:
    """Concatenate along `axis`, routing gradient slices back to each input."""
    parts = [as_tensor(t) for t in tensors]
    sizes = [p.data.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return tuple(np.split(g, splits, axis=axis))

    return Tensor(np.concatenate([p.data for p in parts], axis=axis), tuple(parts), backward)


def minimum(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise minimum; ties send the gradient to `a`."""
    x, y = a.data, b.data
    take_a = x <= y

    def backward(g: np.ndarray) -> tuple[np.ndarray | None, ...]:
        return _unbroadcast(g * take_a, x.shape), _unbroadcast(g * ~take_a, y.shape)

    return Tensor(np.where(take_a, x, y), (a, b), backward)


def _topological_order(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
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


def gradients(loss: Tensor, wrt: Sequence[Tensor]) -> list[np.ndarray]:
    """
    Reverse-mode gradients of a scalar loss.

    Args:
        loss: Scalar tensor produced by recorded operations.
        wrt: Tensors to differentiate against. Tensors the loss does not
             depend on (including every tensor when the loss is a constant
             leaf) get a zero gradient.

    Returns:
        One gradient array per entry of `wrt`, each shaped like that tensor.

    Raises:
        OrlabError: GRAD_GRAPH_NOT_RECORDED if loss is a plain number or
                    array rather than a Tensor, GRAD_NOT_SCALAR if it has
                    more than one element, GRAD_NON_FINITE if it is NaN/Inf.
    """
    if not isinstance(loss, Tensor):
        raise OrlabError(
            f"loss must be a recorded Tensor, got {type(loss).__name__}",
            ErrorCode.GRAD_GRAPH_NOT_RECORDED,
        )
    if loss.data.size != 1:
        raise OrlabError(
            f"loss must be scalar, got shape {loss.shape}",
            ErrorCode.GRAD_NOT_SCALAR,
        )
    if not np.all(np.isfinite(loss.data)):
        raise OrlabError("loss is not finite", ErrorCode.GRAD_NON_FINITE)

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for node in reversed(_topological_order(loss)):
        g = grads.get(id(node))
        if g is None or node._backward is None:
            continue
        for parent, parent_grad in zip(node._parents, node._backward(g), strict=True):
            if parent_grad is None:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + parent_grad
            else:
                grads[key] = parent_grad

    return [
        np.asarray(grads[id(t)], dtype=np.float64).reshape(t.shape)
        if id(t) in grads
        else np.zeros_like(t.data)
        for t in wrt
    ]
