"""Reverse-mode autodiff, MLPs, Adam and the ORLP checkpoint format."""

from orlab.grad.checkpoint import decode_params, encode_params, load_params, save_params
from orlab.grad.mlp import Activation, MlpSpec, forward, init_params, layer_norm, predict
from orlab.grad.optim import AdamState, adam_step, polyak_update
from orlab.grad.params import ParamSet, backward, flatten
from orlab.grad.tensor import Tensor, as_tensor, concat, gradients, minimum

__all__ = [
    "Activation",
    "AdamState",
    "MlpSpec",
    "ParamSet",
    "Tensor",
    "adam_step",
    "as_tensor",
    "backward",
    "concat",
    "decode_params",
    "encode_params",
    "flatten",
    "forward",
    "gradients",
    "init_params",
    "layer_norm",
    "load_params",
    "minimum",
    "polyak_update",
    "predict",
    "save_params",
]
