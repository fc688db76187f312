"""
Multi-layer perceptrons over ParamSets.

Hidden layer i computes act(x @ W + b), optionally followed by LayerNorm
with a learned scale and offset. The output layer is linear. Parameter
names are "h{i}.w", "h{i}.b", "h{i}.ln_scale", "h{i}.ln_offset" and
"out.w", "out.b".
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any

import numpy as np

from orlab.grad.params import ParamSet
from orlab.grad.tensor import Tensor, as_tensor
from orlab.seeding import SeedLike, as_generator
from orlab.types import ErrorCode, OrlabError

LAYER_NORM_EPS = 1e-10


class Activation(str, Enum):
    GELU = "gelu"
    RELU = "relu"


@dataclass(frozen=True)
class MlpSpec:
    """
    Shape and options of an MLP.

    Attributes:
        input_dim: Width of the input's last axis.
        hidden_dims: Widths of the hidden layers, at least one.
        output_dim: Width of the output's last axis.
        activation: Hidden-layer nonlinearity.
        layer_norm: Apply LayerNorm after every hidden activation.
    """

    input_dim: int
    hidden_dims: tuple[int, ...] = (256, 256)
    output_dim: int = 1
    activation: Activation = Activation.GELU
    layer_norm: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))
        object.__setattr__(self, "activation", Activation(self.activation))
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError(
                f"input_dim and output_dim must be >= 1, got {self.input_dim}, {self.output_dim}"
            )
        if not self.hidden_dims:
            raise ValueError("hidden_dims cannot be empty")
        if any(h < 1 for h in self.hidden_dims):
            raise ValueError(f"hidden dims must be >= 1, got {self.hidden_dims}")

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.hidden_dims, self.output_dim]
        return list(zip(dims[:-1], dims[1:], strict=True))

    def to_dict(self) -> dict[str, Any]:
        return {
            "input_dim": self.input_dim,
            "hidden_dims": list(self.hidden_dims),
            "output_dim": self.output_dim,
            "activation": self.activation.value,
            "layer_norm": self.layer_norm,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "MlpSpec":
        return cls(
            input_dim=int(data["input_dim"]),
            hidden_dims=tuple(data.get("hidden_dims", (256, 256))),
            output_dim=int(data.get("output_dim", 1)),
            activation=Activation(data.get("activation", "gelu")),
            layer_norm=bool(data.get("layer_norm", True)),
        )


def init_params(spec: MlpSpec, seed: SeedLike) -> ParamSet:
    """Fan-in scaled uniform weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), zero biases."""
    rng = as_generator(seed)
    items: list[tuple[str, np.ndarray]] = []
    layers = spec.layer_dims()
    for i, (fan_in, fan_out) in enumerate(layers):
        prefix = "out" if i == len(layers) - 1 else f"h{i}"
        bound = 1.0 / np.sqrt(fan_in)
        items.append((f"{prefix}.w", rng.uniform(-bound, bound, size=(fan_in, fan_out))))
        items.append((f"{prefix}.b", np.zeros(fan_out)))
        if prefix != "out" and spec.layer_norm:
            items.append((f"{prefix}.ln_scale", np.ones(fan_out)))
            items.append((f"{prefix}.ln_offset", np.zeros(fan_out)))
    return ParamSet(items)


def layer_norm(x: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize each row to zero mean and unit variance (no scale/offset)."""
    centered = x - x.mean(axis=-1, keepdims=True)
    var = (centered * centered).mean(axis=-1, keepdims=True)
    return centered / (var + eps).sqrt()


def _activate(x: Tensor, activation: Activation) -> Tensor:
    if activation is Activation.RELU:
        return x.relu()
    return x.gelu()


def forward(spec: MlpSpec, params: ParamSet, inputs: Tensor | np.ndarray) -> Tensor:
    """
    Evaluate the network on a batch.

    Args:
        spec: Network shape.
        params: Parameters created by init_params (or a congruent set).
        inputs: (batch, input_dim) array or Tensor. A 1-D input is treated as
            a batch of one and the batch axis is kept.

    Returns:
        (batch, output_dim) Tensor connected to `params` for backward().

    Raises:
        OrlabError: GRAD_SHAPE_MISMATCH if the last input extent is not
            spec.input_dim, GRAD_NON_FINITE if the output has NaN/Inf.
    """
    x = as_tensor(inputs)
    if x.ndim == 1:
        x = x.reshape(1, -1)
    if x.shape[-1] != spec.input_dim:
        raise OrlabError(
            f"input last extent {x.shape[-1]} != input_dim {spec.input_dim}",
            ErrorCode.GRAD_SHAPE_MISMATCH,
        )

    for i in range(len(spec.hidden_dims)):
        x = _activate(x @ params[f"h{i}.w"] + params[f"h{i}.b"], spec.activation)
        if spec.layer_norm:
            x = layer_norm(x) * params[f"h{i}.ln_scale"] + params[f"h{i}.ln_offset"]
    out = x @ params["out.w"] + params["out.b"]

    if not np.all(np.isfinite(out.data)):
        raise OrlabError("network output is not finite", ErrorCode.GRAD_NON_FINITE)
    return out


def predict(spec: MlpSpec, params: ParamSet, inputs: np.ndarray) -> np.ndarray:
    """forward() returning a plain array."""
    return forward(spec, params, inputs).data
