"""Generalized advantage estimation over fixed-horizon segments."""
from typing import Protocol

import numpy as np

from src.common.exceptions import SegmentError
from src.worldmodel.segment import SegmentBatch, TrajectorySegment


class StateValue(Protocol):
    def predict(self, states: np.ndarray) -> np.ndarray: ...


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    bootstrap: float,
    gamma: float,
    lam: float,
    terminal: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Backward recursion A_t = delta_t + gamma * lam * A_{t+1}.

    Args:
        rewards: r_0..r_{H-1}.
        values: V(s_0)..V(s_{H-1}).
        bootstrap: V(s_H); ignored when ``terminal``.

    Returns:
        (advantages, value targets = advantages + values)
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    H = rewards.shape[0]
    next_values = np.append(values[1:], 0.0 if terminal else bootstrap)
    deltas = rewards + gamma * next_values - values
    advantages = np.zeros(H)
    running = 0.0
    for t in reversed(range(H)):
        running = deltas[t] + gamma * lam * running
        advantages[t] = running
    return advantages, advantages + values


def gae_advantages(
    segment: TrajectorySegment,
    critic: StateValue,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    if not segment.has_bootstrap:
        raise SegmentError(f"segment of horizon {segment.horizon} is missing its bootstrap state")
    values = critic.predict(segment.states)
    return compute_gae(segment.rewards, values[:-1], float(values[-1]), gamma, lam, segment.terminal)


def gae_batch(
    batch: SegmentBatch,
    critic: StateValue,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized ``gae_advantages`` over a batch; returns two (B, H) arrays."""
    B, H = batch.rewards.shape
    values = critic.predict(batch.states.reshape(B * (H + 1), -1)).reshape(B, H + 1)
    # a terminal last state contributes no bootstrap value
    values[:, H] = np.where(batch.terminal, 0.0, values[:, H])
    deltas = batch.rewards + gamma * values[:, 1:] - values[:, :-1]
    advantages = np.zeros((B, H))
    running = np.zeros(B)
    for t in reversed(range(H)):
        running = deltas[:, t] + gamma * lam * running
        advantages[:, t] = running
    return advantages, advantages + values[:, :-1]
