import numpy as np

from src.common.exceptions import SegmentError, ShapeError
from src.envs.transition import Transition
from src.worldmodel.normalizer import Normalizer
from src.worldmodel.segment import SegmentBatch


class ReplayBuffer:
    """
    Ring buffer of real transitions with a segment view.

    A segment of horizon H may start at a stored transition when the next
    H - 1 stored transitions continue the same episode without gaps, so no
    segment crosses an episode boundary or an overwritten slot.
    """

    def __init__(self, capacity: int, state_dim: int, action_dim: int):
        if capacity < 1:
            raise ShapeError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.states = np.zeros((capacity, state_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_states = np.zeros((capacity, state_dim))
        self.terminals = np.zeros(capacity, dtype=bool)
        self.episodes = np.zeros(capacity, dtype=np.int64)
        self.steps = np.zeros(capacity, dtype=np.int64)
        self.ptr = 0
        self.size = 0
        self.total_added = 0
        self.stats: Normalizer | None = None

    def __len__(self) -> int:
        return self.size

    def add(self, transition: Transition) -> None:
        if not transition.is_finite():
            raise ShapeError(f"refusing non-finite transition at episode {transition.episode}, t={transition.t}")
        k = self.ptr
        self.states[k] = transition.state
        self.actions[k] = transition.action
        self.rewards[k] = transition.reward
        self.next_states[k] = transition.next_state
        self.terminals[k] = transition.terminal
        self.episodes[k] = transition.episode
        self.steps[k] = transition.t
        self.ptr = (self.ptr + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)
        self.total_added += 1

    def extend(self, transitions) -> None:
        for transition in transitions:
            self.add(transition)

    def _order(self) -> np.ndarray:
        """Physical slots in insertion order, oldest first."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (self.ptr + np.arange(self.capacity)) % self.capacity

    def valid_starts(self, horizon: int) -> np.ndarray:
        """Physical slots where a horizon-step segment may start."""
        order = self._order()
        if horizon < 1:
            raise SegmentError(f"horizon must be >= 1, got {horizon}")
        if order.size < horizon:
            return np.zeros(0, dtype=np.int64)
        ep, t = self.episodes[order], self.steps[order]
        breaks = ~((ep[1:] == ep[:-1]) & (t[1:] == t[:-1] + 1))
        # breaks inside [k, k + H - 1) disqualify logical start k
        cum = np.concatenate([[0], np.cumsum(breaks)])
        starts = np.arange(order.size - horizon + 1)
        ok = cum[starts + horizon - 1] - cum[starts] == 0
        return order[starts[ok]]

    def n_segments(self, horizon: int) -> int:
        return int(self.valid_starts(horizon).size)

    def segments_at(self, starts: np.ndarray, horizon: int) -> SegmentBatch:
        offsets = (np.asarray(starts)[:, None] + np.arange(horizon)[None, :]) % self.capacity
        last = offsets[:, -1]
        states = np.concatenate([self.states[offsets], self.next_states[last][:, None]], axis=1)
        return SegmentBatch(
            states=states,
            actions=self.actions[offsets],
            rewards=self.rewards[offsets],
            terminal=self.terminals[last],
        )

    def sample_segments(self, horizon: int, count: int, rng: np.random.Generator) -> SegmentBatch:
        starts = self.valid_starts(horizon)
        if starts.size == 0:
            raise SegmentError(f"buffer holds no complete segment of horizon {horizon}")
        return self.segments_at(rng.choice(starts, size=count, replace=starts.size < count), horizon)

    def sample_states(self, count: int, rng: np.random.Generator) -> np.ndarray:
        if self.size == 0:
            raise SegmentError("cannot sample start states from an empty buffer")
        return self.states[self._order()[rng.integers(0, self.size, size=count)]].copy()

    def refresh_stats(self) -> Normalizer:
        order = self._order()
        self.stats = Normalizer.fit(self.states[order], self.actions[order], self.rewards[order])
        return self.stats
