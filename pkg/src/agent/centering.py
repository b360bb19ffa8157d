from dataclasses import dataclass
from typing import Protocol

import numpy as np

from src.agent.policies import CategoricalPolicy
from src.common.exceptions import ShapeError


class ActionValueNet(Protocol):
    def predict(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray: ...


@dataclass
class CenteredAdvantage:
    """
    A_w(s, a) minus its policy-weighted mean at ``states``.

    ``actions`` (K, n, da) and ``weights`` (K, n) are the reference actions the
    baseline was averaged over; sum_k weights[k] * centered(actions[k]) is 0.
    """

    net: ActionValueNet
    states: np.ndarray
    baseline: np.ndarray
    actions: np.ndarray
    weights: np.ndarray

    def __call__(self, actions: np.ndarray) -> np.ndarray:
        return self.net.predict(self.states, actions) - self.baseline

    def at(self, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
        if states.shape != self.states.shape:
            raise ShapeError(f"centered accessor was built for states {self.states.shape}, got {states.shape}")
        return self.net.predict(states, actions) - self.baseline


def center_advantage(
    a_net: ActionValueNet,
    states: np.ndarray,
    policy,
    n_mc: int,
    rng: np.random.Generator | None = None,
    deterministic: bool = False,
) -> CenteredAdvantage:
    """
    Build the accessor A_bar(s, a) = A_w(s, a) - E_{a'~pi(.|s)} A_w(s, a').

    Categorical policies use the exact expectation over all actions; continuous
    policies average ``n_mc`` samples (or the single mean action when
    ``deterministic``).
    """
    if n_mc < 1:
        raise ShapeError(f"n_mc must be >= 1, got {n_mc}")
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    n = states.shape[0]

    if isinstance(policy, CategoricalPolicy):
        probs = policy.probs(states)
        actions = np.stack([np.full((n, 1), float(a)) for a in range(policy.n_actions)])
        weights = probs.T
    elif deterministic:
        actions = policy.mean_action(states)[None]
        weights = np.ones((1, n))
    else:
        if rng is None:
            raise ShapeError("sampling a stochastic policy needs a generator")
        actions = np.stack([policy.sample(states, rng) for _ in range(n_mc)])
        weights = np.full((n_mc, n), 1.0 / n_mc)

    values = np.stack([a_net.predict(states, a) for a in actions])
    baseline = (weights * values).sum(axis=0)
    return CenteredAdvantage(net=a_net, states=states, baseline=baseline, actions=actions, weights=weights)
