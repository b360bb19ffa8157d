"""
A finite MDP placed in continuous coordinates, so the guided sampler can be
checked against exact enumeration.

Every state gets a point in R^ds and every action a point in R^da. The
segments of ``horizon`` steps from a fixed start state become a finite set
of atoms in the diffused space, weighted by their probability under the
behaviour policy. ``AtomDenoiser`` predicts the noise exactly for that
atom mixture, so sampling with it draws real rollouts of the MDP and the
only approximation left is the guide.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, softmax

from src.agent.critics import StateActionNet
from src.common.exceptions import InvalidMDPError, ShapeError
from src.envs.tabular import TabularMDP
from src.oracle.enumeration import enumerate_trajectories
from src.oracle.policy import ExactPolicy
from src.worldmodel.schedule import DiffusionSchedule
from src.worldmodel.segment import SegmentBatch, SegmentLayout

logger = logging.getLogger(__name__)


@dataclass
class EmbeddedMDP:
    """
    ``state_points`` (S, ds) and ``action_points`` (A, da) place ``mdp`` in
    continuous coordinates; ``horizon`` is the segment length the sampler
    draws from ``start_state``.
    """

    mdp: TabularMDP
    policy: ExactPolicy
    state_points: np.ndarray
    action_points: np.ndarray
    horizon: int
    start_state: int = 0

    def __post_init__(self) -> None:
        self.state_points = np.atleast_2d(np.asarray(self.state_points, dtype=np.float64))
        self.action_points = np.atleast_2d(np.asarray(self.action_points, dtype=np.float64))
        if self.state_points.shape[0] != self.mdp.n_states:
            raise InvalidMDPError(f"need one point per state, got {self.state_points.shape[0]} for {self.mdp.n_states}")
        if self.action_points.shape[0] != self.mdp.n_actions:
            raise InvalidMDPError(f"need one point per action, got {self.action_points.shape[0]} for {self.mdp.n_actions}")
        if self.horizon < 1:
            raise InvalidMDPError(f"horizon must be >= 1, got {self.horizon}")
        self.policy.check(self.mdp)
        self._segments = self._enumerate()

    @property
    def layout(self) -> SegmentLayout:
        return SegmentLayout(self.horizon, self.state_points.shape[1], self.action_points.shape[1])

    @property
    def start_point(self) -> np.ndarray:
        return self.state_points[self.start_state]

    def _enumerate(self) -> list[tuple[tuple[int, ...], tuple[int, ...], float]]:
        # one extra step supplies the bootstrap state; its action is dropped
        paths = enumerate_trajectories(self.mdp, self.policy, self.horizon + 1, self.start_state)
        return [(states, actions[: self.horizon], logp) for states, actions, logp in paths]

    @property
    def first_actions(self) -> np.ndarray:
        return np.array([actions[0] for _, actions, _ in self._segments])

    @property
    def log_probabilities(self) -> np.ndarray:
        return np.array([logp for _, _, logp in self._segments])

    def segments(self) -> SegmentBatch:
        """Every enumerated segment in embedded coordinates."""
        states = np.stack([self.state_points[list(s)] for s, _, _ in self._segments])
        actions = np.stack([self.action_points[list(a)] for _, a, _ in self._segments])
        rewards = np.array([[self.mdp.R[s[t], a[t]] for t in range(self.horizon)] for s, a, _ in self._segments])
        terminal = np.array([bool(self.mdp.terminal[s[-1]]) for s, _, _ in self._segments])
        return SegmentBatch(states=states, actions=actions, rewards=rewards, terminal=terminal)

    def segment_energies(self, table: np.ndarray) -> np.ndarray:
        """sum_t table[s_t, a_t] for every enumerated segment."""
        table = np.asarray(table, dtype=np.float64)
        return np.array([sum(table[s[t], a[t]] for t in range(self.horizon)) for s, a, _ in self._segments])

    def first_action_frequencies(self, batch: SegmentBatch) -> np.ndarray:
        """
        Share of sampled segments per first action, each sample assigned to
        the nearest enumerated segment in the diffused coordinates.
        """
        layout = self.layout
        atoms, _ = layout.flatten(self.segments())
        x, _ = layout.flatten(batch)
        nearest = np.empty(x.shape[0], dtype=int)
        for start in range(0, x.shape[0], 10_000):
            chunk = x[start : start + 10_000]
            nearest[start : start + chunk.shape[0]] = np.argmin(((chunk[:, None, :] - atoms[None]) ** 2).sum(axis=2), axis=1)
        counts = np.bincount(self.first_actions[nearest], minlength=self.mdp.n_actions)
        return counts / x.shape[0]


class AtomDenoiser:
    """
    Exact eps prediction for data that is a finite mixture of atoms.

    The posterior over atoms given x_i is a softmax of
    log w_k - |x_i - sqrt(ab_i) x_k|^2 / (2 (1 - ab_i)); the prediction is
    (x_i - sqrt(ab_i) E[x_0 | x_i]) / sqrt(1 - ab_i). Conditioning actions
    are ignored.
    """

    def __init__(self, layout: SegmentLayout, schedule: DiffusionSchedule, atoms: np.ndarray, log_weights: np.ndarray):
        atoms = np.atleast_2d(np.asarray(atoms, dtype=np.float64))
        if atoms.shape[1] != layout.diffused_dim:
            raise ShapeError(f"atoms must have {layout.diffused_dim} coordinates, got {atoms.shape[1]}")
        self.layout = layout
        self.schedule = schedule
        self.atoms = atoms
        self.log_weights = log_softmax(np.asarray(log_weights, dtype=np.float64))

    @classmethod
    def for_embedding(cls, embedded: EmbeddedMDP, schedule: DiffusionSchedule) -> "AtomDenoiser":
        atoms, _ = embedded.layout.flatten(embedded.segments())
        return cls(embedded.layout, schedule, atoms, embedded.log_probabilities)

    def posterior_mean(self, x: np.ndarray, i: int) -> np.ndarray:
        ab = self.schedule.alpha_bar[i]
        sq = ((x[:, None, :] - np.sqrt(ab) * self.atoms[None]) ** 2).sum(axis=2)
        post = softmax(self.log_weights[None] - sq / (2.0 * (1.0 - ab)), axis=1)
        return post @ self.atoms

    def predict(self, x: np.ndarray, cond: np.ndarray, steps) -> np.ndarray:
        i = int(np.asarray(steps).reshape(-1)[0])
        ab = self.schedule.alpha_bar[i]
        return (x - np.sqrt(ab) * self.posterior_mean(x, i)) / np.sqrt(1.0 - ab)


def linear_plug_in(
    embedded: EmbeddedMDP,
    table: np.ndarray,
    net: StateActionNet,
    tolerance: float = 1e-9,
) -> StateActionNet:
    """
    Set a hidden-layer-free ``net`` to f(s, a) = w . s + b so that its sum
    over every enumerated segment equals the sum of ``table`` (an advantage
    or reward table) over the same segment.

    Raises ``InvalidMDPError`` when the embedding admits no such function.
    """
    if len(net.net.layers) != 1:
        raise ShapeError("the plug-in needs a network without hidden layers")
    batch = embedded.segments()
    H = embedded.horizon
    features = np.concatenate([batch.states[:, :H].sum(axis=1), np.full((len(batch), 1), float(H))], axis=1)
    target = embedded.segment_energies(table)
    solution, *_ = np.linalg.lstsq(features, target, rcond=None)
    residual = float(np.max(np.abs(features @ solution - target)))
    if residual > tolerance:
        raise InvalidMDPError(f"no linear state function reproduces the segment sums (residual {residual:.3g})")

    ds, da = embedded.layout.state_dim, embedded.layout.action_dim
    layer = net.net.layers[0]
    layer.weight.data = np.concatenate([solution[:ds], np.zeros(da)]).reshape(-1, 1)
    layer.bias.data = np.array([solution[ds]])
    logger.debug("linear plug-in weights %s, bias %.4g", solution[:ds], solution[ds])
    return net
