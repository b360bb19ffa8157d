"""
Trajectory segments and their flat layout.

A segment of horizon H holds H+1 states, H actions and H rewards. The
diffusion model sees the states and rewards as one flat vector of
``(H + 1) * ds + H`` diffused coordinates; actions ride along as a
separate ``H * da`` block that conditions the predictor.
"""
from dataclasses import dataclass

import numpy as np

from src.common.exceptions import ShapeError


@dataclass
class TrajectorySegment:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    terminal: bool = False

    def __post_init__(self) -> None:
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64).reshape(-1)
        H = self.rewards.shape[0]
        if H < 1:
            raise ShapeError("a segment needs at least one step")
        if self.states.ndim != 2 or self.actions.ndim != 2 or self.actions.shape[0] != H:
            raise ShapeError(
                f"segment shapes disagree: states {self.states.shape}, actions {self.actions.shape}, rewards {self.rewards.shape}"
            )
        if self.states.shape[0] not in (H, H + 1):
            raise ShapeError(f"expected {H + 1} states for horizon {H}, got {self.states.shape[0]}")

    @property
    def horizon(self) -> int:
        return self.rewards.shape[0]

    @property
    def has_bootstrap(self) -> bool:
        return self.states.shape[0] == self.horizon + 1

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.states)) and np.all(np.isfinite(self.actions)) and np.all(np.isfinite(self.rewards)))


@dataclass
class SegmentBatch:
    """``states`` (B, H+1, ds), ``actions`` (B, H, da), ``rewards`` (B, H), ``terminal`` (B,)."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    terminal: np.ndarray

    def __post_init__(self) -> None:
        self.states = np.asarray(self.states, dtype=np.float64)
        self.actions = np.asarray(self.actions, dtype=np.float64)
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.terminal = np.asarray(self.terminal, dtype=bool).reshape(-1)
        B, H = self.rewards.shape
        if self.states.shape[:2] != (B, H + 1) or self.actions.shape[:2] != (B, H) or self.terminal.shape != (B,):
            raise ShapeError(
                f"batch shapes disagree: states {self.states.shape}, actions {self.actions.shape}, "
                f"rewards {self.rewards.shape}, terminal {self.terminal.shape}"
            )

    def __len__(self) -> int:
        return self.rewards.shape[0]

    @property
    def horizon(self) -> int:
        return self.rewards.shape[1]

    def __getitem__(self, index: int) -> TrajectorySegment:
        return TrajectorySegment(self.states[index], self.actions[index], self.rewards[index], bool(self.terminal[index]))

    def select(self, rows: np.ndarray) -> "SegmentBatch":
        return SegmentBatch(self.states[rows], self.actions[rows], self.rewards[rows], self.terminal[rows])

    def finite_rows(self) -> np.ndarray:
        return (
            np.isfinite(self.states).all(axis=(1, 2))
            & np.isfinite(self.actions).all(axis=(1, 2))
            & np.isfinite(self.rewards).all(axis=1)
        )

    @classmethod
    def from_segments(cls, segments: list[TrajectorySegment]) -> "SegmentBatch":
        if not segments:
            raise ShapeError("cannot batch an empty list of segments")
        for seg in segments:
            if not seg.has_bootstrap:
                raise ShapeError("batched segments must carry their bootstrap state")
        return cls(
            states=np.stack([s.states for s in segments]),
            actions=np.stack([s.actions for s in segments]),
            rewards=np.stack([s.rewards for s in segments]),
            terminal=np.array([s.terminal for s in segments]),
        )

    @classmethod
    def concat(cls, batches: list["SegmentBatch"]) -> "SegmentBatch":
        return cls(
            states=np.concatenate([b.states for b in batches]),
            actions=np.concatenate([b.actions for b in batches]),
            rewards=np.concatenate([b.rewards for b in batches]),
            terminal=np.concatenate([b.terminal for b in batches]),
        )


@dataclass(frozen=True)
class SegmentLayout:
    horizon: int
    state_dim: int
    action_dim: int

    @property
    def diffused_dim(self) -> int:
        return (self.horizon + 1) * self.state_dim + self.horizon

    @property
    def condition_dim(self) -> int:
        return self.horizon * self.action_dim

    def state_slice(self, t: int) -> slice:
        """Coordinates of state ``t`` (0-based, 0..H) inside the diffused vector."""
        if not (0 <= t <= self.horizon):
            raise ShapeError(f"state index {t} outside 0..{self.horizon}")
        return slice(t * self.state_dim, (t + 1) * self.state_dim)

    @property
    def reward_slice(self) -> slice:
        start = (self.horizon + 1) * self.state_dim
        return slice(start, start + self.horizon)

    def flatten(self, batch: SegmentBatch) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(x, cond)``: diffused coordinates (B, D) and flattened actions (B, H*da)."""
        self.check(batch)
        B = len(batch)
        x = np.concatenate([batch.states.reshape(B, -1), batch.rewards], axis=1)
        return x, batch.actions.reshape(B, -1)

    def unflatten(self, x: np.ndarray, cond: np.ndarray, terminal: np.ndarray | None = None) -> SegmentBatch:
        x = np.atleast_2d(x)
        B = x.shape[0]
        if x.shape[1] != self.diffused_dim or cond.shape != (B, self.condition_dim):
            raise ShapeError(
                f"expected ({B}, {self.diffused_dim}) and ({B}, {self.condition_dim}), got {x.shape} and {cond.shape}"
            )
        states = x[:, : (self.horizon + 1) * self.state_dim].reshape(B, self.horizon + 1, self.state_dim)
        return SegmentBatch(
            states=states,
            actions=cond.reshape(B, self.horizon, self.action_dim),
            rewards=x[:, self.reward_slice],
            terminal=np.zeros(B, dtype=bool) if terminal is None else terminal,
        )

    def states_view(self, x: np.ndarray) -> np.ndarray:
        """States block of a flat batch as (B, H+1, ds)."""
        return x[:, : (self.horizon + 1) * self.state_dim].reshape(x.shape[0], self.horizon + 1, self.state_dim)

    def check(self, batch: SegmentBatch) -> None:
        if batch.horizon != self.horizon or batch.states.shape[2] != self.state_dim or batch.actions.shape[2] != self.action_dim:
            raise ShapeError(
                f"batch (H={batch.horizon}, ds={batch.states.shape[2]}, da={batch.actions.shape[2]}) does not match "
                f"layout (H={self.horizon}, ds={self.state_dim}, da={self.action_dim})"
            )
