from dataclasses import dataclass

import numpy as np


@dataclass
class Transition:
    """
    One environment step. ``done`` ends the episode (terminal or time limit);
    ``terminal`` marks an absorbing state, after which values are not bootstrapped.
    """

    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool
    episode: int
    t: int
    terminal: bool = False

    def is_finite(self) -> bool:
        return bool(
            np.all(np.isfinite(self.state))
            and np.all(np.isfinite(self.action))
            and np.isfinite(self.reward)
            and np.all(np.isfinite(self.next_state))
        )
