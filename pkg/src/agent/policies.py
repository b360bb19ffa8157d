import math
from typing import Protocol, Sequence

import numpy as np

from src.numerics.nn import FeedForwardNet
from src.numerics.tensor import Tensor, as_tensor, atanh, exp, log, log_softmax, square, tsum

LOG_2PI = math.log(2.0 * math.pi)
# squashed actions are pulled this far inside the bounds before atanh
EDGE = 1e-6


class Policy(Protocol):
    discrete: bool

    def log_prob(self, states, actions) -> Tensor: ...

    def entropy(self, states) -> Tensor: ...

    def sample(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...

    def mean_action(self, states: np.ndarray) -> np.ndarray: ...

    def parameters(self) -> list[Tensor]: ...


class GaussianPolicy:
    """
    Diagonal Gaussian over actions with a state-independent learned log-std.

    With ``squash`` the Gaussian sample ``u`` is mapped into the action box by
    ``center + scale * tanh(u)`` and the log-density carries the change-of-variables
    correction; without it samples are clipped to the box.
    """

    discrete = False

    def __init__(
        self,
        state_dim: int,
        action_dim: int,
        action_low: Sequence[float],
        action_high: Sequence[float],
        hidden: Sequence[int],
        rng: np.random.Generator,
        squash: bool = True,
        init_log_std: float = -0.5,
        activation: str = "tanh",
    ):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.low = np.asarray(action_low, dtype=np.float64)
        self.high = np.asarray(action_high, dtype=np.float64)
        self.center = 0.5 * (self.high + self.low)
        self.scale = 0.5 * (self.high - self.low)
        self.squash = squash
        self.net = FeedForwardNet(state_dim, hidden, action_dim, rng, activation=activation)
        self.log_std = Tensor(np.full(action_dim, init_log_std), requires_grad=True)

    def mean(self, states) -> Tensor:
        return self.net(states)

    def std(self) -> np.ndarray:
        return np.exp(self.log_std.data)

    def interior(self, actions: np.ndarray) -> np.ndarray:
        """Clip actions strictly inside the box so the squashed log-density is finite."""
        if not self.squash:
            return np.asarray(actions, dtype=np.float64)
        margin = EDGE * self.scale
        return np.clip(actions, self.low + margin, self.high - margin)

    def log_prob(self, states, actions) -> Tensor:
        mean = self.mean(states)
        actions = as_tensor(actions)
        if self.squash:
            y = (actions - self.center) / self.scale
            u = atanh(y)
            correction = tsum(log((1.0 - square(y)) * self.scale), axis=1)
        else:
            u = actions
            correction = 0.0
        z = (u - mean) / exp(self.log_std)
        gauss = tsum(-0.5 * square(z) - self.log_std - 0.5 * LOG_2PI, axis=1)
        return gauss - correction

    def entropy(self, states) -> Tensor:
        batch = as_tensor(states).shape[0]
        per_state = tsum(self.log_std + 0.5 * (LOG_2PI + 1.0))
        return per_state * Tensor(np.ones(batch))

    def sample(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        mean = self.net.predict(states)
        u = mean + self.std() * rng.standard_normal(mean.shape)
        return self._to_box(u)

    def mean_action(self, states: np.ndarray) -> np.ndarray:
        return self._to_box(self.net.predict(states))

    def _to_box(self, u: np.ndarray) -> np.ndarray:
        if self.squash:
            return self.center + self.scale * np.tanh(u)
        return np.clip(u, self.low, self.high)

    def named_parameters(self) -> dict[str, Tensor]:
        return {**{f"net.{k}": v for k, v in self.net.named_parameters().items()}, "log_std": self.log_std}

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())


class CategoricalPolicy:
    """Softmax policy over ``n_actions``; actions are carried as float indices of shape (B, 1)."""

    discrete = True

    def __init__(
        self,
        state_dim: int,
        n_actions: int,
        hidden: Sequence[int],
        rng: np.random.Generator,
        activation: str = "tanh",
    ):
        self.state_dim = state_dim
        self.n_actions = n_actions
        self.action_dim = 1
        # zero output layer: uniform policy at initialization
        self.net = FeedForwardNet(state_dim, hidden, n_actions, rng, activation=activation, zero_last=True)

    def log_probs(self, states) -> Tensor:
        return log_softmax(self.net(states), axis=1)

    def probs(self, states: np.ndarray) -> np.ndarray:
        return np.exp(self.log_probs(np.asarray(states, dtype=np.float64)).data)

    def log_prob(self, states, actions) -> Tensor:
        index = np.asarray(actions.data if isinstance(actions, Tensor) else actions).reshape(-1).astype(int)
        return self.log_probs(states)[np.arange(index.size), index]

    def entropy(self, states) -> Tensor:
        logp = self.log_probs(states)
        return -tsum(exp(logp) * logp, axis=1)

    def sample(self, states: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        probs = self.probs(states)
        cumulative = np.cumsum(probs, axis=1)
        draws = rng.random((probs.shape[0], 1))
        index = np.minimum((draws > cumulative).sum(axis=1), self.n_actions - 1)
        return index.reshape(-1, 1).astype(np.float64)

    def mean_action(self, states: np.ndarray) -> np.ndarray:
        return self.probs(states).argmax(axis=1).reshape(-1, 1).astype(np.float64)

    def named_parameters(self) -> dict[str, Tensor]:
        return {f"net.{k}": v for k, v in self.net.named_parameters().items()}

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())
