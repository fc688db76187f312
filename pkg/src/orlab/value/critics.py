"""
Value-function architectures.

Critics are stateless: they describe how to build and evaluate a function
and own no parameters. Parameters live in ParamSets handed to init()/apply(),
so target copies, frozen snapshots and online parameters all share one
architecture object.

Network critics are MLPs over concatenated inputs. Tabular critics take
one-hot encoded states and actions and read a lookup table; they exist for
exact checks against dynamic-programming solutions.
"""

from abc import ABC, abstractmethod
from collections.abc import Sequence
from typing import Any, ClassVar

import numpy as np

from orlab.grad import Activation, MlpSpec, ParamSet, Tensor, as_tensor, concat, forward, init_params, minimum
from orlab.seeding import SeedLike, as_generator
from orlab.types import ErrorCode, OrlabError

CRL_EMBED_DIM = 64

Inputs = Tensor | np.ndarray


def _require_goal(goal_dim: int, goals: Inputs | None) -> None:
    if goal_dim and goals is None:
        raise OrlabError("goal-conditioned critic needs goals", ErrorCode.VALUE_MISSING_GOAL)


def _stack_inputs(obs: Inputs, actions: Inputs | None, goals: Inputs | None, goal_dim: int) -> Tensor:
    parts: list[Inputs] = [obs]
    if actions is not None:
        parts.append(actions)
    if goal_dim:
        assert goals is not None
        parts.append(goals)
    parts = [np.atleast_2d(p) if isinstance(p, np.ndarray) else p for p in parts]
    return concat(parts, axis=-1)


# =============================================================================
# ACTION-VALUE CRITICS
# =============================================================================


class ActionValueCritic(ABC):
    """
    A function (s, a[, g]) -> scalar per row.

    heads() returns every independent estimate (two for clipped double-Q);
    apply() reduces them with an elementwise minimum.
    """

    kind: ClassVar[str]
    state_dim: int
    action_dim: int
    goal_dim: int

    @abstractmethod
    def init(self, seed: SeedLike) -> ParamSet: ...

    @abstractmethod
    def heads(self, params: ParamSet, obs: Inputs, actions: Inputs, goals: Inputs | None = None) -> list[Tensor]: ...

    @abstractmethod
    def to_dict(self) -> dict[str, Any]: ...

    def apply(self, params: ParamSet, obs: Inputs, actions: Inputs, goals: Inputs | None = None) -> Tensor:
        estimates = self.heads(params, obs, actions, goals)
        out = estimates[0]
        for other in estimates[1:]:
            out = minimum(out, other)
        return out


class QNetwork(ActionValueCritic):
    kind = "q-network"

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        goal_dim: int = 0,
        hidden_dims: Sequence[int] = (256, 256),
        activation: Activation | str = Activation.GELU,
        layer_norm: bool = True,
        double_q: bool = False,
    ) -> None:
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.goal_dim = goal_dim
        self.double_q = double_q
        self.spec = MlpSpec(
            input_dim=state_dim + action_dim + goal_dim,
            hidden_dims=tuple(hidden_dims),
            output_dim=1,
            activation=Activation(activation),
            layer_norm=layer_norm,
        )

    @property
    def head_names(self) -> tuple[str, ...]:
        return ("q1", "q2") if self.double_q else ("q",)

    def init(self, seed: SeedLike) -> ParamSet:
        rng = as_generator(seed)
        return ParamSet.join({name: init_params(self.spec, rng) for name in self.head_names})

    def heads(self, params: ParamSet, obs: Inputs, actions: Inputs, goals: Inputs | None = None) -> list[Tensor]:
        _require_goal(self.goal_dim, goals)
        x = _stack_inputs(obs, actions, goals, self.goal_dim)
        return [forward(self.spec, params.scoped(name), x).reshape(-1) for name in self.head_names]

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "goal_dim": self.goal_dim,
            "hidden_dims": list(self.spec.hidden_dims),
            "activation": self.spec.activation.value,
            "layer_norm": self.spec.layer_norm,
            "double_q": self.double_q,
        }


class CrlNetwork(ActionValueCritic):
    """
    Contrastive critic f(s, a, g) = phi(s, a) . psi(g).

    Both encoders are MLPs with an embed_dim-wide linear output.
    """

    kind = "crl-network"

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        goal_dim: int,
        hidden_dims: Sequence[int] = (256, 256),
        embed_dim: int = CRL_EMBED_DIM,
        activation: Activation | str = Activation.GELU,
        layer_norm: bool = True,
    ) -> None:
        if goal_dim < 1:
            raise OrlabError("contrastive critics need a goal-conditioned task", ErrorCode.VALUE_UNSUPPORTED)
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.goal_dim = goal_dim
        self.embed_dim = embed_dim
        act = Activation(activation)
        self.phi_spec = MlpSpec(state_dim + action_dim, tuple(hidden_dims), embed_dim, act, layer_norm)
        self.psi_spec = MlpSpec(goal_dim, tuple(hidden_dims), embed_dim, act, layer_norm)

    def init(self, seed: SeedLike) -> ParamSet:
        rng = as_generator(seed)
        return ParamSet.join({"phi": init_params(self.phi_spec, rng), "psi": init_params(self.psi_spec, rng)})

    def embed(self, params: ParamSet, obs: Inputs, actions: Inputs, goals: Inputs) -> tuple[Tensor, Tensor]:
        sa = _stack_inputs(obs, actions, None, 0)
        return (
            forward(self.phi_spec, params.scoped("phi"), sa),
            forward(self.psi_spec, params.scoped("psi"), goals),
        )

    def heads(self, params: ParamSet, obs: Inputs, actions: Inputs, goals: Inputs | None = None) -> list[Tensor]:
        _require_goal(self.goal_dim, goals)
        assert goals is not None
        phi, psi = self.embed(params, obs, actions, goals)
        return [(phi * psi).sum(axis=-1)]

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "state_dim": self.state_dim,
            "action_dim": self.action_dim,
            "goal_dim": self.goal_dim,
            "hidden_dims": list(self.phi_spec.hidden_dims),
            "embed_dim": self.embed_dim,
            "activation": self.phi_spec.activation.value,
            "layer_norm": self.phi_spec.layer_norm,
        }


class TabularQ(ActionValueCritic):
    """Q[s, a] lookup; obs and actions are one-hot rows."""

    kind = "tabular-q"

    def __init__(self, n_states: int, n_actions: int) -> None:
        self.state_dim = n_states
        self.action_dim = n_actions
        self.goal_dim = 0

    def init(self, seed: SeedLike) -> ParamSet:
        return ParamSet([("table", np.zeros((self.state_dim, self.action_dim)))])

    def heads(self, params: ParamSet, obs: Inputs, actions: Inputs, goals: Inputs | None = None) -> list[Tensor]:
        rows = as_tensor(np.atleast_2d(obs) if isinstance(obs, np.ndarray) else obs) @ params["table"]
        return [(rows * actions).sum(axis=-1)]

    def table(self, params: ParamSet) -> np.ndarray:
        return params["table"].data.copy()

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "n_states": self.state_dim, "n_actions": self.action_dim}


class TabularCrl(ActionValueCritic):
    """f[s, a, g] lookup; obs, actions and goals are one-hot rows."""

    kind = "tabular-crl"

    def __init__(self, n_states: int, n_actions: int, n_goals: int | None = None) -> None:
        self.state_dim = n_states
        self.action_dim = n_actions
        self.goal_dim = n_goals or n_states

    def init(self, seed: SeedLike) -> ParamSet:
        return ParamSet([("table", np.zeros((self.state_dim * self.action_dim, self.goal_dim)))])

    def heads(self, params: ParamSet, obs: Inputs, actions: Inputs, goals: Inputs | None = None) -> list[Tensor]:
        _require_goal(self.goal_dim, goals)
        s = np.atleast_2d(getattr(obs, "data", obs))
        a = np.atleast_2d(getattr(actions, "data", actions))
        pairs = (s[:, :, None] * a[:, None, :]).reshape(len(s), -1)
        return [((as_tensor(pairs) @ params["table"]) * goals).sum(axis=-1)]

    def table(self, params: ParamSet) -> np.ndarray:
        return params["table"].data.reshape(self.state_dim, self.action_dim, self.goal_dim).copy()

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "n_states": self.state_dim, "n_actions": self.action_dim, "n_goals": self.goal_dim}


# =============================================================================
# STATE-VALUE CRITICS
# =============================================================================


class StateValue(ABC):
    kind: ClassVar[str]
    state_dim: int
    goal_dim: int

    @abstractmethod
    def init(self, seed: SeedLike) -> ParamSet: ...

    @abstractmethod
    def apply(self, params: ParamSet, obs: Inputs, goals: Inputs | None = None) -> Tensor: ...

    @abstractmethod
    def to_dict(self) -> dict[str, Any]: ...


class VNetwork(StateValue):
    kind = "v-network"

    def __init__(
        self,
        state_dim: int,
        goal_dim: int = 0,
        hidden_dims: Sequence[int] = (256, 256),
        activation: Activation | str = Activation.GELU,
        layer_norm: bool = True,
    ) -> None:
        self.state_dim = state_dim
        self.goal_dim = goal_dim
        self.spec = MlpSpec(state_dim + goal_dim, tuple(hidden_dims), 1, Activation(activation), layer_norm)

    def init(self, seed: SeedLike) -> ParamSet:
        return init_params(self.spec, seed)

    def apply(self, params: ParamSet, obs: Inputs, goals: Inputs | None = None) -> Tensor:
        _require_goal(self.goal_dim, goals)
        return forward(self.spec, params, _stack_inputs(obs, None, goals, self.goal_dim)).reshape(-1)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "state_dim": self.state_dim,
            "goal_dim": self.goal_dim,
            "hidden_dims": list(self.spec.hidden_dims),
            "activation": self.spec.activation.value,
            "layer_norm": self.spec.layer_norm,
        }


class TabularV(StateValue):
    kind = "tabular-v"

    def __init__(self, n_states: int) -> None:
        self.state_dim = n_states
        self.goal_dim = 0

    def init(self, seed: SeedLike) -> ParamSet:
        return ParamSet([("table", np.zeros((self.state_dim, 1)))])

    def apply(self, params: ParamSet, obs: Inputs, goals: Inputs | None = None) -> Tensor:
        rows = as_tensor(np.atleast_2d(obs) if isinstance(obs, np.ndarray) else obs)
        return (rows @ params["table"]).reshape(-1)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "n_states": self.state_dim}


# =============================================================================
# SERIALIZATION
# =============================================================================


def critic_from_dict(data: dict[str, Any]) -> ActionValueCritic:
    kind = data["kind"]
    args = {k: v for k, v in data.items() if k != "kind"}
    if kind == QNetwork.kind:
        return QNetwork(**args)
    if kind == CrlNetwork.kind:
        return CrlNetwork(**args)
    if kind == TabularQ.kind:
        return TabularQ(**args)
    if kind == TabularCrl.kind:
        return TabularCrl(**args)
    raise OrlabError(f"unknown critic kind: {kind}", ErrorCode.VALUE_UNSUPPORTED)


def state_value_from_dict(data: dict[str, Any]) -> StateValue:
    kind = data["kind"]
    args = {k: v for k, v in data.items() if k != "kind"}
    if kind == VNetwork.kind:
        return VNetwork(**args)
    if kind == TabularV.kind:
        return TabularV(**args)
    raise OrlabError(f"unknown state-value kind: {kind}", ErrorCode.VALUE_UNSUPPORTED)
