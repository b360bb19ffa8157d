"""
Desk-scale continuous-control tasks integrated with explicit Euler steps.

point-mass:    state (x, y, vx, vy), action = 2-d force, unit mass,
               reward = -|pos - goal|^2 - 0.01 |action|^2, horizon 100.
pendulum-like: state (cos th, sin th, th_dot), action = 1-d torque,
               reward = -(th^2 + 0.1 th_dot^2 + 0.001 u^2) with th wrapped to
               [-pi, pi), horizon 200.
"""
from abc import ABC, abstractmethod

import numpy as np

from src.common.exceptions import AppException, NonFiniteError
from src.envs.transition import Transition

ENV_NAMES = ("point-mass", "pendulum-like")


class ContinuousEnv(ABC):
    name: str
    state_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    max_steps: int
    dt: float = 0.05

    def __init__(self) -> None:
        self.episode = -1
        self.t = 0
        self.state = np.zeros(self.state_dim)

    # ------------------------------------------------------------------
    # Task definition
    # ------------------------------------------------------------------

    @abstractmethod
    def sample_initial_state(self, rng: np.random.Generator) -> np.ndarray: ...

    @abstractmethod
    def dynamics(self, state: np.ndarray, action: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def reward(self, state: np.ndarray, action: np.ndarray) -> float: ...

    # ------------------------------------------------------------------
    # Episode loop
    # ------------------------------------------------------------------

    def clip_action(self, action) -> np.ndarray:
        action = np.asarray(action, dtype=np.float64).reshape(self.action_dim)
        return np.clip(action, self.action_low, self.action_high)

    def reset(self, rng: np.random.Generator, state: np.ndarray | None = None) -> np.ndarray:
        self.episode += 1
        self.t = 0
        self.state = self.sample_initial_state(rng) if state is None else np.asarray(state, dtype=np.float64).copy()
        return self.state.copy()

    def step(self, action) -> Transition:
        action = self.clip_action(action)
        reward = self.reward(self.state, action)
        next_state = self.dynamics(self.state, action)
        if not (np.all(np.isfinite(next_state)) and np.isfinite(reward)):
            raise NonFiniteError(f"{self.name}: non-finite step from state {self.state.tolist()}")
        self.t += 1
        transition = Transition(
            state=self.state.copy(),
            action=action,
            reward=float(reward),
            next_state=next_state.copy(),
            done=self.t >= self.max_steps,
            episode=self.episode,
            t=self.t - 1,
        )
        self.state = next_state
        return transition


class PointMass(ContinuousEnv):
    name = "point-mass"
    state_dim = 4
    action_dim = 2
    action_low = -np.ones(2)
    action_high = np.ones(2)
    max_steps = 100
    mass = 1.0

    def __init__(self, goal=(0.0, 0.0)):
        super().__init__()
        self.goal = np.asarray(goal, dtype=np.float64)

    def sample_initial_state(self, rng: np.random.Generator) -> np.ndarray:
        return np.concatenate([rng.uniform(-1.0, 1.0, size=2), np.zeros(2)])

    def dynamics(self, state: np.ndarray, action: np.ndarray) -> np.ndarray:
        pos, vel = state[:2], state[2:]
        return np.concatenate([pos + self.dt * vel, vel + self.dt * action / self.mass])

    def reward(self, state: np.ndarray, action: np.ndarray) -> float:
        offset = state[:2] - self.goal
        return float(-offset @ offset - 0.01 * action @ action)


class PendulumLike(ContinuousEnv):
    name = "pendulum-like"
    state_dim = 3
    action_dim = 1
    action_low = -2.0 * np.ones(1)
    action_high = 2.0 * np.ones(1)
    max_steps = 200
    gravity = 10.0
    mass = 1.0
    length = 1.0
    max_speed = 8.0

    def sample_initial_state(self, rng: np.random.Generator) -> np.ndarray:
        theta = rng.uniform(-np.pi, np.pi)
        return np.array([np.cos(theta), np.sin(theta), rng.uniform(-1.0, 1.0)])

    def dynamics(self, state: np.ndarray, action: np.ndarray) -> np.ndarray:
        theta = np.arctan2(state[1], state[0])
        theta_dot = state[2]
        accel = 3.0 * self.gravity / (2.0 * self.length) * np.sin(theta) + 3.0 / (self.mass * self.length**2) * action[0]
        theta = theta + self.dt * theta_dot
        theta_dot = np.clip(theta_dot + self.dt * accel, -self.max_speed, self.max_speed)
        return np.array([np.cos(theta), np.sin(theta), theta_dot])

    def reward(self, state: np.ndarray, action: np.ndarray) -> float:
        theta = np.arctan2(state[1], state[0])
        return float(-(theta**2 + 0.1 * state[2] ** 2 + 0.001 * action[0] ** 2))


def make_continuous_env(name: str) -> ContinuousEnv:
    if name == "point-mass":
        return PointMass()
    if name == "pendulum-like":
        return PendulumLike()
    raise AppException(f"unknown environment '{name}', expected one of {list(ENV_NAMES)}")
