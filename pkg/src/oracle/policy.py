from dataclasses import dataclass

import numpy as np

from src.common.exceptions import InvalidMDPError
from src.envs.tabular import TabularMDP

ROW_TOLERANCE = 1e-12


@dataclass
class ExactPolicy:
    """Table ``pi[s, a]``; every row is a probability vector."""

    table: np.ndarray

    def __post_init__(self) -> None:
        self.table = np.asarray(self.table, dtype=np.float64)
        if self.table.ndim != 2:
            raise InvalidMDPError(f"policy table must be (S, A), got shape {self.table.shape}")
        if np.any(self.table < 0) or np.max(np.abs(self.table.sum(axis=1) - 1.0)) > ROW_TOLERANCE:
            raise InvalidMDPError("every policy row must be a probability vector")

    @property
    def n_states(self) -> int:
        return self.table.shape[0]

    @property
    def n_actions(self) -> int:
        return self.table.shape[1]

    def check(self, mdp: TabularMDP) -> None:
        if self.table.shape != (mdp.n_states, mdp.n_actions):
            raise InvalidMDPError(f"policy shape {self.table.shape} does not match MDP ({mdp.n_states}, {mdp.n_actions})")

    @classmethod
    def uniform(cls, mdp: TabularMDP) -> "ExactPolicy":
        return cls(np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions))

    @classmethod
    def random(cls, mdp: TabularMDP, rng: np.random.Generator) -> "ExactPolicy":
        table = rng.dirichlet(np.ones(mdp.n_actions), size=mdp.n_states)
        return cls(table / table.sum(axis=1, keepdims=True))

    @classmethod
    def deterministic(cls, mdp: TabularMDP, choices: dict[int, int], default: "ExactPolicy | None" = None) -> "ExactPolicy":
        """Put all mass on ``choices[s]`` at the listed states; other rows come from ``default`` (uniform if unset)."""
        table = (default or cls.uniform(mdp)).table.copy()
        for s, a in choices.items():
            table[s] = 0.0
            table[s, a] = 1.0
        return cls(table)
