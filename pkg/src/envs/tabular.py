"""Finite MDPs: construction, validation, sampling and text serialization."""
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from src.common.exceptions import InvalidMDPError
from src.envs.transition import Transition

ROW_TOLERANCE = 1e-12


@dataclass
class TabularMDP:
    """
    ``P[s, a, s']`` transition probabilities, ``R[s, a]`` rewards, discount
    ``gamma``, initial distribution ``rho`` and a terminal-state mask.
    """

    P: np.ndarray
    R: np.ndarray
    gamma: float
    rho: np.ndarray
    terminal: np.ndarray
    state_names: list[str] = field(default_factory=list)
    action_names: list[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.P = np.asarray(self.P, dtype=np.float64)
        self.R = np.asarray(self.R, dtype=np.float64)
        self.rho = np.asarray(self.rho, dtype=np.float64)
        self.terminal = np.asarray(self.terminal, dtype=bool)
        if not self.state_names:
            self.state_names = [f"s{k + 1}" for k in range(self.n_states)]
        if not self.action_names:
            self.action_names = [f"a{k + 1}" for k in range(self.n_actions)]
        self.validate()

    @property
    def n_states(self) -> int:
        return self.P.shape[0]

    @property
    def n_actions(self) -> int:
        return self.P.shape[1]

    def validate(self) -> None:
        S, A = self.n_states, self.n_actions
        if self.P.shape != (S, A, S):
            raise InvalidMDPError(f"P must have shape (S, A, S), got {self.P.shape}")
        if self.R.shape != (S, A):
            raise InvalidMDPError(f"R must have shape ({S}, {A}), got {self.R.shape}")
        if self.rho.shape != (S,) or self.terminal.shape != (S,):
            raise InvalidMDPError("rho and terminal must have one entry per state")
        if not (0.0 < self.gamma <= 1.0):
            raise InvalidMDPError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not (np.all(np.isfinite(self.P)) and np.all(np.isfinite(self.R))):
            raise InvalidMDPError("P and R must be finite")
        if np.any(self.P < 0) or np.max(np.abs(self.P.sum(axis=2) - 1.0)) > ROW_TOLERANCE:
            raise InvalidMDPError("every P(.|s,a) must be a probability vector")
        if np.any(self.rho < 0) or abs(self.rho.sum() - 1.0) > ROW_TOLERANCE:
            raise InvalidMDPError("rho must be a probability vector")
        for s in np.flatnonzero(self.terminal):
            if not np.all(self.P[s, :, s] == 1.0) or np.any(self.R[s] != 0.0):
                raise InvalidMDPError(f"terminal state {self.state_names[s]} must self-loop with reward 0")

    def step(self, state: int, action: int, rng: np.random.Generator) -> tuple[int, float, bool]:
        if not (0 <= state < self.n_states):
            raise InvalidMDPError(f"invalid state index {state}")
        if not (0 <= action < self.n_actions):
            raise InvalidMDPError(f"invalid action index {action}")
        next_state = int(rng.choice(self.n_states, p=self.P[state, action]))
        return next_state, float(self.R[state, action]), bool(self.terminal[next_state])

    # ------------------------------------------------------------------
    # Structured-text serialization
    # ------------------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "states": self.state_names,
            "actions": self.action_names,
            "gamma": self.gamma,
            "rho": self.rho.tolist(),
            "terminal": self.terminal.tolist(),
            "P": self.P.tolist(),
            "R": self.R.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TabularMDP":
        try:
            return cls(
                P=np.array(data["P"]),
                R=np.array(data["R"]),
                gamma=float(data["gamma"]),
                rho=np.array(data["rho"]),
                terminal=np.array(data["terminal"]),
                state_names=list(data.get("states", [])),
                action_names=list(data.get("actions", [])),
            )
        except KeyError as exc:
            raise InvalidMDPError(f"serialized MDP is missing field {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2))

    @classmethod
    def load(cls, path: str | Path) -> "TabularMDP":
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_motivating_mdp(r: float = -5.0, r_bar: float = -4.0, r_star: float = 10.0) -> TabularMDP:
    """
    Two-branch chain where short-horizon reward prefers the wrong branch.

    s1 --a1--> s2 -> s3 -> s4 -> s5 (terminal), r(s2, .) = r_bar
    s1 --a2--> s6 -> s7 -> s8 -> s9 (terminal), r(s8, .) = r_star

    Every other non-terminal reward is ``r``; gamma = 1; transitions are
    deterministic. Only s1 distinguishes its two actions: elsewhere a2 is a
    copy of a1.
    """
    S, A = 9, 2
    P = np.zeros((S, A, S))
    R = np.full((S, A), r)
    chain = {1: 2, 2: 3, 3: 4, 5: 6, 6: 7, 7: 8}
    P[0, 0, 1] = 1.0
    P[0, 1, 5] = 1.0
    for s, nxt in chain.items():
        P[s, :, nxt] = 1.0
    R[1, :] = r_bar
    R[7, :] = r_star
    terminal = np.zeros(S, dtype=bool)
    for s in (4, 8):
        terminal[s] = True
        P[s, :, s] = 1.0
        R[s, :] = 0.0
    rho = np.zeros(S)
    rho[0] = 1.0
    return TabularMDP(P=P, R=R, gamma=1.0, rho=rho, terminal=terminal)


def random_tabular_mdp(seed: int, n_states: int = 5, n_actions: int = 3) -> TabularMDP:
    if n_states < 2 or n_actions < 2:
        raise InvalidMDPError("random MDPs need at least 2 states and 2 actions")
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    # dirichlet rows are simplex points up to rounding; renormalize to 1e-12
    P /= P.sum(axis=2, keepdims=True)
    R = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    gamma = float(rng.uniform(0.8, 0.99))
    rho = rng.dirichlet(np.ones(n_states))
    rho /= rho.sum()
    return TabularMDP(P=P, R=R, gamma=gamma, rho=rho, terminal=np.zeros(n_states, dtype=bool))


class TabularEnv:
    """Episode accounting around a ``TabularMDP`` (reset/step, time limit)."""

    def __init__(self, mdp: TabularMDP, max_steps: int = 100):
        self.mdp = mdp
        self.max_steps = max_steps
        self.episode = -1
        self.t = 0
        self.state = 0

    def reset(self, rng: np.random.Generator, state: int | None = None) -> int:
        self.episode += 1
        self.t = 0
        self.state = int(rng.choice(self.mdp.n_states, p=self.mdp.rho)) if state is None else int(state)
        return self.state

    def step(self, action: int, rng: np.random.Generator) -> Transition:
        next_state, reward, terminal = self.mdp.step(self.state, int(action), rng)
        self.t += 1
        transition = Transition(
            state=np.array([float(self.state)]),
            action=np.array([float(action)]),
            reward=reward,
            next_state=np.array([float(next_state)]),
            done=terminal or self.t >= self.max_steps,
            terminal=terminal,
            episode=self.episode,
            t=self.t - 1,
        )
        self.state = next_state
        return transition
