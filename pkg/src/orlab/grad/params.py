"""
Named parameter collections and the gradient entry point.

A ParamSet is an ordered, name-unique collection of leaf Tensors. Networks
read their weights out of it by name; optimizers and Polyak averaging
produce new ParamSets instead of mutating leaves in place, so a ParamSet
handed to another run (a frozen value function, a target copy) never
changes under it.
"""

import hashlib
from collections.abc import Iterable, Iterator, Mapping, Sequence

import numpy as np

from orlab.grad.tensor import Tensor, gradients
from orlab.types import ErrorCode, OrlabError


class ParamSet:
    """
    Ordered mapping of parameter name to leaf Tensor.

    Example:
        params = ParamSet([("w", np.eye(2)), ("b", np.zeros(2))])
        grads = backward(loss, params)
        params["w"].data  # current value
    """

    def __init__(self, items: Iterable[tuple[str, Tensor | np.ndarray]] = ()) -> None:
        self._tensors: dict[str, Tensor] = {}
        for name, value in items:
            if not name:
                raise ValueError("parameter name cannot be empty")
            if name in self._tensors:
                raise ValueError(f"duplicate parameter name: {name}")
            tensor = value if isinstance(value, Tensor) else Tensor(value, name=name)
            if not tensor.name:
                tensor.name = name
            self._tensors[name] = tensor

    # =========================================================================
    # MAPPING ACCESS
    # =========================================================================

    def __getitem__(self, name: str) -> Tensor:
        return self._tensors[name]

    def __contains__(self, name: object) -> bool:
        return name in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)

    def names(self) -> list[str]:
        return list(self._tensors)

    def tensors(self) -> list[Tensor]:
        return list(self._tensors.values())

    def items(self) -> list[tuple[str, Tensor]]:
        return list(self._tensors.items())

    def arrays(self) -> dict[str, np.ndarray]:
        """Copies of every value, keyed by name."""
        return {name: t.data.copy() for name, t in self._tensors.items()}

    # =========================================================================
    # CONSTRUCTION HELPERS
    # =========================================================================

    def copy(self) -> "ParamSet":
        """Fresh leaves holding copies of the current values."""
        return ParamSet((name, t.data.copy()) for name, t in self._tensors.items())

    def replace(self, values: Mapping[str, np.ndarray]) -> "ParamSet":
        """A new ParamSet with the same names and the given values."""
        self.check_congruent(values)
        return ParamSet((name, np.array(values[name], dtype=np.float64)) for name in self._tensors)

    def zeros_like(self) -> "ParamSet":
        return ParamSet((name, np.zeros_like(t.data)) for name, t in self._tensors.items())

    def scoped(self, prefix: str) -> "ParamSet":
        """
        Entries whose name starts with `prefix.`, with the prefix stripped.

        The returned set shares Tensor objects with this one, so gradients
        taken through it land on the same leaves.
        """
        head = prefix + "."
        return ParamSet(
            (name[len(head):], t) for name, t in self._tensors.items() if name.startswith(head)
        )

    @classmethod
    def join(cls, parts: Mapping[str, "ParamSet"]) -> "ParamSet":
        """Combine sets under name prefixes: {"q": qs} gives names "q.<name>"."""
        return cls(
            (f"{prefix}.{name}", tensor)
            for prefix, part in parts.items()
            for name, tensor in part.items()
        )

    # =========================================================================
    # CHECKS
    # =========================================================================

    def check_congruent(self, other: "ParamSet | Mapping[str, np.ndarray]") -> None:
        """Raise GRAD_SHAPE_MISMATCH unless names and shapes agree."""
        other_shapes = {
            name: (value.shape if isinstance(value, Tensor) else np.shape(value))
            for name, value in (other.items() if isinstance(other, ParamSet) else other.items())
        }
        mine = {name: t.shape for name, t in self._tensors.items()}
        if set(mine) != set(other_shapes):
            raise OrlabError(
                "parameter names differ",
                ErrorCode.GRAD_SHAPE_MISMATCH,
                details={"expected": sorted(mine), "received": sorted(other_shapes)},
            )
        for name, shape in mine.items():
            if tuple(other_shapes[name]) != shape:
                raise OrlabError(
                    f"shape mismatch for {name}: {shape} vs {tuple(other_shapes[name])}",
                    ErrorCode.GRAD_SHAPE_MISMATCH,
                )

    def is_finite(self) -> bool:
        return all(bool(np.all(np.isfinite(t.data))) for t in self._tensors.values())

    def digest(self) -> str:
        """sha256 over names, shapes and raw float64 bytes."""
        h = hashlib.sha256()
        for name, t in self._tensors.items():
            h.update(name.encode("utf-8"))
            h.update(str(t.shape).encode("ascii"))
            h.update(np.ascontiguousarray(t.data, dtype="<f8").tobytes())
        return h.hexdigest()

    def __repr__(self) -> str:
        shapes = ", ".join(f"{n}{t.shape}" for n, t in self._tensors.items())
        return f"ParamSet({shapes})"


def backward(loss: Tensor, params: ParamSet) -> ParamSet:
    """
    Gradient of a scalar loss with respect to every parameter.

    Parameters the loss does not touch get zero gradients. The result is a
    ParamSet with the same names whose values are d(loss)/d(param).
    """
    grads = gradients(loss, params.tensors())
    return ParamSet(zip(params.names(), grads, strict=True))


def flatten(params: ParamSet) -> np.ndarray:
    """All values concatenated in name order; handy for norms and comparisons."""
    if not len(params):
        return np.zeros(0)
    return np.concatenate([t.data.ravel() for t in params.tensors()])


def global_norm(grads: ParamSet | Sequence[np.ndarray]) -> float:
    arrays = grads.tensors() if isinstance(grads, ParamSet) else grads
    return float(np.sqrt(sum(float(np.sum(np.square(getattr(a, "data", a)))) for a in arrays)))
