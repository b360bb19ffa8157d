from typing import Sequence

import numpy as np

from src.numerics.nn import FeedForwardNet
from src.numerics.tensor import Tensor, as_tensor, concat, reshape


class ValueCritic:
    """State-value estimate V(s)."""

    def __init__(self, state_dim: int, hidden: Sequence[int], rng: np.random.Generator, activation: str = "tanh"):
        self.state_dim = state_dim
        self.net = FeedForwardNet(state_dim, hidden, 1, rng, activation=activation)

    def value(self, states) -> Tensor:
        out = self.net(states)
        return reshape(out, (out.shape[0],))

    def predict(self, states: np.ndarray) -> np.ndarray:
        return self.net.predict(np.atleast_2d(states)).reshape(-1)

    def named_parameters(self) -> dict[str, Tensor]:
        return {f"net.{k}": v for k, v in self.net.named_parameters().items()}

    def parameters(self) -> list[Tensor]:
        return self.net.parameters()


class StateActionNet:
    """Scalar function of a (state, action) pair, evaluated on the concatenated input."""

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        hidden: Sequence[int],
        rng: np.random.Generator,
        activation: str = "tanh",
    ):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.net = FeedForwardNet(state_dim + action_dim, hidden, 1, rng, activation=activation)

    def forward(self, states, actions) -> Tensor:
        out = self.net(concat([as_tensor(states), as_tensor(actions)], axis=1))
        return reshape(out, (out.shape[0],))

    __call__ = forward

    def predict(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        return self.forward(states, actions).data

    def named_parameters(self) -> dict[str, Tensor]:
        return {f"net.{k}": v for k, v in self.net.named_parameters().items()}

    def parameters(self) -> list[Tensor]:
        return self.net.parameters()


class AdvantageNet(StateActionNet):
    """Learned advantage A_w(s, a), regressed on GAE targets."""


class RewardModel(StateActionNet):
    """Learned reward r_hat(s, a), regressed on real transitions only."""


def input_gradients(
    net: StateActionNet,
    states: np.ndarray,
    actions: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Evaluate ``net`` on a batch and differentiate it with respect to its inputs.

    Returns:
        ``(values, d/ds, d/da)`` with shapes (B,), (B, ds), (B, da). Rows are
        independent, so the gradient of the batch sum is the per-row gradient.
        Parameter gradients are cleared afterwards.
    """
    s = Tensor(np.atleast_2d(np.asarray(states, dtype=np.float64)), requires_grad=True)
    a = Tensor(np.atleast_2d(np.asarray(actions, dtype=np.float64)), requires_grad=True)
    out = net.forward(s, a)
    out.sum().backward()
    grad_s = s.grad if s.grad is not None else np.zeros_like(s.data)
    grad_a = a.grad if a.grad is not None else np.zeros_like(a.data)
    net.net.zero_grad()
    return out.data.copy(), grad_s, grad_a


def advantage_and_input_grad(
    a_net: AdvantageNet,
    states: np.ndarray,
    actions: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    return input_gradients(a_net, states, actions)
