from dataclasses import dataclass

import numpy as np

from src.common.exceptions import ShapeError
from src.worldmodel.segment import SegmentBatch, SegmentLayout

STD_FLOOR = 1e-6


def _moments(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return values.mean(axis=0), np.maximum(values.std(axis=0), STD_FLOOR)


@dataclass
class Normalizer:
    """Per-feature mean/std for states, actions and rewards, fitted on real transitions."""

    state_mean: np.ndarray
    state_std: np.ndarray
    action_mean: np.ndarray
    action_std: np.ndarray
    reward_mean: float = 0.0
    reward_std: float = 1.0

    @classmethod
    def identity(cls, state_dim: int, action_dim: int) -> "Normalizer":
        return cls(np.zeros(state_dim), np.ones(state_dim), np.zeros(action_dim), np.ones(action_dim))

    @classmethod
    def fit(cls, states: np.ndarray, actions: np.ndarray, rewards: np.ndarray) -> "Normalizer":
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        rewards = np.asarray(rewards, dtype=np.float64).reshape(-1)
        if states.shape[0] == 0:
            raise ShapeError("cannot fit normalization statistics on zero transitions")
        s_mean, s_std = _moments(states)
        a_mean, a_std = _moments(actions)
        return cls(
            state_mean=s_mean,
            state_std=s_std,
            action_mean=a_mean,
            action_std=a_std,
            reward_mean=float(rewards.mean()),
            reward_std=float(max(rewards.std(), STD_FLOOR)),
        )

    # ------------------------------------------------------------------
    # Per-block transforms
    # ------------------------------------------------------------------

    def normalize_states(self, states: np.ndarray) -> np.ndarray:
        return (states - self.state_mean) / self.state_std

    def denormalize_states(self, states: np.ndarray) -> np.ndarray:
        return states * self.state_std + self.state_mean

    def normalize_actions(self, actions: np.ndarray) -> np.ndarray:
        return (actions - self.action_mean) / self.action_std

    def denormalize_actions(self, actions: np.ndarray) -> np.ndarray:
        return actions * self.action_std + self.action_mean

    def normalize(self, batch: SegmentBatch) -> SegmentBatch:
        return SegmentBatch(
            states=self.normalize_states(batch.states),
            actions=self.normalize_actions(batch.actions),
            rewards=(batch.rewards - self.reward_mean) / self.reward_std,
            terminal=batch.terminal.copy(),
        )

    def denormalize(self, batch: SegmentBatch) -> SegmentBatch:
        return SegmentBatch(
            states=self.denormalize_states(batch.states),
            actions=self.denormalize_actions(batch.actions),
            rewards=batch.rewards * self.reward_std + self.reward_mean,
            terminal=batch.terminal.copy(),
        )

    def diffused_std(self, layout: SegmentLayout) -> np.ndarray:
        """Std of every diffused coordinate in ``layout`` order, shape (D,)."""
        return np.concatenate([np.tile(self.state_std, layout.horizon + 1), np.full(layout.horizon, self.reward_std)])

    # ------------------------------------------------------------------
    # Checkpoint arrays
    # ------------------------------------------------------------------

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {
            "normalizer.state_mean": self.state_mean,
            "normalizer.state_std": self.state_std,
            "normalizer.action_mean": self.action_mean,
            "normalizer.action_std": self.action_std,
            "normalizer.reward": np.array([self.reward_mean, self.reward_std]),
        }

    @classmethod
    def from_arrays(cls, arrays: dict[str, np.ndarray]) -> "Normalizer":
        reward = arrays["normalizer.reward"]
        return cls(
            state_mean=arrays["normalizer.state_mean"],
            state_std=arrays["normalizer.state_std"],
            action_mean=arrays["normalizer.action_mean"],
            action_std=arrays["normalizer.action_std"],
            reward_mean=float(reward[0]),
            reward_std=float(reward[1]),
        )
