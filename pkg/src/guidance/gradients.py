"""
Guide gradients over a batch of segment estimates.

Inputs are raw-unit ``states`` (B, H+1, ds) and ``actions`` (B, H, da); step t
pairs state t with action t, so the last state receives no gradient. Every
per-step gradient (state and action parts together) is clipped to L2 norm
``clip``; a step that is still non-finite contributes zero.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, log_expit

from src.agent.centering import center_advantage
from src.agent.critics import StateActionNet, input_gradients
from src.numerics.tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class GuideGradient:
    """
    ``state_grad`` (B, H+1, ds) and ``action_grad`` (B, H, da) of log p(y | tau);
    ``values`` (B, H) are the per-step scalars the guide was built from and
    ``weights`` (B, H) the SAG damping factors, when the guide has them.
    """

    state_grad: np.ndarray
    action_grad: np.ndarray
    values: np.ndarray
    weights: np.ndarray | None
    norms: np.ndarray
    zeroed: int


def _pairs(states: np.ndarray, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray, int, int]:
    B, H = actions.shape[:2]
    return states[:, :H].reshape(B * H, -1), actions.reshape(B * H, -1), B, H


def _assemble(
    states: np.ndarray,
    grad_s: np.ndarray,
    grad_a: np.ndarray,
    values: np.ndarray,
    weights: np.ndarray | None,
    clip: float,
) -> GuideGradient:
    B, H = values.shape
    ds, da = grad_s.shape[1], grad_a.shape[1]
    joint = np.concatenate([grad_s, grad_a], axis=1)

    finite = np.isfinite(joint).all(axis=1)
    joint = np.where(finite[:, None], joint, 0.0)
    norms = np.linalg.norm(joint, axis=1)
    scale = np.minimum(1.0, clip / np.maximum(norms, np.finfo(float).tiny))
    joint = joint * scale[:, None]
    zeroed = int((~finite).sum())
    if zeroed:
        logger.warning("guide gradient non-finite at %d step(s); zeroed", zeroed)

    state_grad = np.zeros_like(states)
    state_grad[:, :H] = joint[:, :ds].reshape(B, H, ds)
    return GuideGradient(
        state_grad=state_grad,
        action_grad=joint[:, ds:].reshape(B, H, da),
        values=values,
        weights=weights,
        norms=(norms * scale).reshape(B, H),
        zeroed=zeroed,
    )


def eag_gradient(states: np.ndarray, actions: np.ndarray, a_net: StateActionNet, clip: float = 10.0) -> GuideGradient:
    """Gradient of sum_t A(s_t, a_t)."""
    s, a, B, H = _pairs(states, actions)
    values, grad_s, grad_a = input_gradients(a_net, s, a)
    return _assemble(states, grad_s, grad_a, values.reshape(B, H), None, clip)


def sag_gradient(
    states: np.ndarray,
    actions: np.ndarray,
    a_net: StateActionNet,
    clip: float = 10.0,
    policy=None,
    n_mc: int = 8,
    rng: np.random.Generator | None = None,
) -> GuideGradient:
    """
    Gradient of sum_t log sigmoid(A(s_t, a_t)) = sum_t sigmoid(-A_t) grad A_t.

    With a ``policy`` the advantage is first centered by its policy mean at
    each s_t; the baseline is held constant when differentiating.
    """
    s, a, B, H = _pairs(states, actions)
    values, grad_s, grad_a = input_gradients(a_net, s, a)
    if policy is not None:
        values = values - center_advantage(a_net, s, policy, n_mc, rng).baseline
    weights = expit(-values)
    return _assemble(
        states, weights[:, None] * grad_s, weights[:, None] * grad_a, values.reshape(B, H), weights.reshape(B, H), clip
    )


def sag_objective(values: np.ndarray) -> np.ndarray:
    """Per-segment log prod_t sigmoid(A_t) for (B, H) advantages."""
    return log_expit(values).sum(axis=1)


def reward_gradient(
    states: np.ndarray,
    actions: np.ndarray,
    reward_model: StateActionNet,
    clip: float = 10.0,
) -> GuideGradient:
    """Gradient of sum_t r(s_t, a_t)."""
    s, a, B, H = _pairs(states, actions)
    values, grad_s, grad_a = input_gradients(reward_model, s, a)
    return _assemble(states, grad_s, grad_a, values.reshape(B, H), None, clip)


def policy_gradient(states: np.ndarray, actions: np.ndarray, policy, clip: float = 10.0) -> GuideGradient:
    """Gradient of sum_t log pi(a_t | s_t)."""
    s, a, B, H = _pairs(states, actions)
    if hasattr(policy, "interior"):
        a = policy.interior(a)
    s_t = Tensor(s, requires_grad=True)
    a_t = Tensor(a, requires_grad=True)
    logp = policy.log_prob(s_t, a_t)
    logp.sum().backward()
    for p in policy.parameters():
        p.grad = None
    grad_s = s_t.grad if s_t.grad is not None else np.zeros_like(s)
    grad_a = a_t.grad if a_t.grad is not None else np.zeros_like(a)
    return _assemble(states, grad_s, grad_a, logp.data.reshape(B, H), None, clip)
