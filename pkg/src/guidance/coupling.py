import logging

import numpy as np

from src.common.exceptions import AppException, NonFiniteError
from src.numerics.tensor import Tensor
from src.worldmodel.normalizer import Normalizer
from src.worldmodel.schedule import DiffusionSchedule
from src.worldmodel.segment import SegmentLayout

logger = logging.getLogger(__name__)


def _action_score(policy, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    a_t = Tensor(actions, requires_grad=True)
    policy.log_prob(states, a_t).sum().backward()
    for p in policy.parameters():
        p.grad = None
    return a_t.grad if a_t.grad is not None else np.zeros_like(actions)


def couple_actions(
    states: np.ndarray,
    actions: np.ndarray,
    policy,
    i: int,
    schedule: DiffusionSchedule,
    strength: float,
    rng: np.random.Generator,
) -> np.ndarray:
    """
    Pull raw-unit ``actions`` (B, H, da) toward the policy at ``states`` (B, H+1, ds).

    For i > 1 each action takes one score-ascent step of size
    strength * Sigma_i along grad_a log pi(a | s); at i = 1 every action is
    replaced by a fresh policy sample.
    """
    if policy.discrete:
        raise AppException("action coupling needs a continuous policy")
    B, H, da = actions.shape
    s = states[:, :H].reshape(B * H, -1)
    if i == 1:
        return policy.sample(s, rng).reshape(B, H, da)

    a = actions.reshape(B * H, da)
    if hasattr(policy, "interior"):
        a = policy.interior(a)
    eta = schedule.posterior_variance[i]
    try:
        score = _action_score(policy, s, a)
    except NonFiniteError:
        score = np.full_like(a, np.nan)
    with np.errstate(all="ignore"):
        moved = a + strength * eta * score
    bad = ~np.isfinite(moved).all(axis=1)
    if bad.any():
        logger.warning("coupling step %d: %d non-finite action(s) resampled", i, int(bad.sum()))
        moved[bad] = policy.sample(s[bad], rng)
    return np.clip(moved, policy.low, policy.high).reshape(B, H, da)


def make_coupler(
    policy,
    schedule: DiffusionSchedule,
    layout: SegmentLayout,
    normalizer: Normalizer,
    strength: float,
):
    """Wrap ``couple_actions`` for the normalized-unit reverse chain."""

    def couple(x: np.ndarray, cond: np.ndarray, i: int, rng: np.random.Generator) -> np.ndarray:
        B = x.shape[0]
        states = normalizer.denormalize_states(layout.states_view(x))
        actions = normalizer.denormalize_actions(cond.reshape(B, layout.horizon, layout.action_dim))
        coupled = couple_actions(states, actions, policy, i, schedule, strength, rng)
        return normalizer.normalize_actions(coupled).reshape(B, -1)

    return couple
