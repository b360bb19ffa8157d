"""
Exhaustive enumeration of H-step trajectories of a finite MDP.

A trajectory (s_1, a_1, ..., s_H, a_H) starting at a fixed state has
probability prod_t pi(a_t|s_t) * prod_{t<H} P(s_{t+1}|s_t, a_t). Reweighting
it by prod_t w(A(s_t, a_t)) and renormalizing must give the same
distribution as rolling out the tilted policy and weighting each
trajectory by prod_t Z(s_t); both sides are kept so callers can compare.
"""
import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from src.common.exceptions import BudgetExceededError, InvalidMDPError
from src.core.config import settings
from src.envs.tabular import TabularMDP
from src.oracle.policy import ExactPolicy
from src.oracle.tilting import TiltKind, log_weights, tilt_policy

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrajectoryAtom:
    states: tuple[int, ...]
    actions: tuple[int, ...]
    probability: float
    cumulative_reward: float
    cumulative_advantage: float


@dataclass
class TiltedDistribution:
    """
    ``atoms`` with their base probabilities, the reweighted distribution
    (``reweighted``) and the tilted-policy construction (``policy_side``).
    """

    atoms: list[TrajectoryAtom]
    reweighted: np.ndarray
    policy_side: np.ndarray
    kind: TiltKind
    scale: float

    @property
    def base(self) -> np.ndarray:
        return np.array([atom.probability for atom in self.atoms])

    @property
    def max_abs_difference(self) -> float:
        return float(np.max(np.abs(self.reweighted - self.policy_side))) if self.atoms else 0.0

    def agrees(self, tolerance: float | None = None) -> bool:
        return self.max_abs_difference <= (settings.IDENTITY_TOLERANCE if tolerance is None else tolerance)


def atom_budget(mdp: TabularMDP, horizon: int) -> int:
    return mdp.n_states ** (horizon - 1) * mdp.n_actions**horizon


def _walk(mdp: TabularMDP, policy: ExactPolicy, horizon: int, start: int):
    """Yield (states, actions, log probability) for every positive-probability trajectory."""
    log_pi = np.log(np.where(policy.table > 0, policy.table, 1.0))
    log_P = np.log(np.where(mdp.P > 0, mdp.P, 1.0))
    stack: list[tuple[tuple[int, ...], tuple[int, ...], float]] = [((start,), (), 0.0)]
    while stack:
        states, actions, logp = stack.pop()
        s = states[-1]
        for a in np.flatnonzero(policy.table[s] > 0):
            step_logp = logp + log_pi[s, a]
            acts = actions + (int(a),)
            if len(acts) == horizon:
                yield states, acts, step_logp
                continue
            for nxt in np.flatnonzero(mdp.P[s, a] > 0):
                stack.append((states + (int(nxt),), acts, step_logp + log_P[s, a, nxt]))


def enumerate_trajectories(
    mdp: TabularMDP,
    policy: ExactPolicy,
    horizon: int,
    start_state: int,
) -> list[tuple[tuple[int, ...], tuple[int, ...], float]]:
    if horizon < 1:
        raise InvalidMDPError(f"horizon must be >= 1, got {horizon}")
    if not (0 <= start_state < mdp.n_states):
        raise InvalidMDPError(f"invalid start state {start_state}")
    budget = atom_budget(mdp, horizon)
    if budget > settings.ENUMERATION_BUDGET:
        raise BudgetExceededError(
            f"{mdp.n_states}^{horizon - 1} * {mdp.n_actions}^{horizon} = {budget} trajectories exceeds "
            f"the enumeration budget of {settings.ENUMERATION_BUDGET}"
        )
    policy.check(mdp)
    return sorted(_walk(mdp, policy, horizon, start_state))


def enumerate_tilted_distribution(
    mdp: TabularMDP,
    policy: ExactPolicy,
    advantage: np.ndarray,
    horizon: int,
    kind: TiltKind | str,
    start_state: int,
    scale: float = 1.0,
) -> TiltedDistribution:
    """
    Both sides of the reweighted-sampling identity over every trajectory of
    ``horizon`` steps from ``start_state``. ``advantage`` may be any (S, A)
    table; passing rewards gives the reward-tilted distribution.
    """
    kind = TiltKind(kind)
    paths = enumerate_trajectories(mdp, policy, horizon, start_state)
    tilted, z = tilt_policy(mdp, policy, advantage, kind, scale)
    log_w = log_weights(advantage, kind, scale)
    with np.errstate(divide="ignore"):
        log_tilted = np.log(tilted.table)
        log_P = np.log(mdp.P)
    log_z = np.log(z)

    atoms: list[TrajectoryAtom] = []
    left = np.empty(len(paths))
    right = np.empty(len(paths))
    for k, (states, actions, logp) in enumerate(paths):
        steps = list(zip(states, actions))
        left[k] = logp + sum(log_w[s, a] for s, a in steps)
        transitions = sum(log_P[states[t], actions[t], states[t + 1]] for t in range(horizon - 1))
        right[k] = sum(log_tilted[s, a] + log_z[s] for s, a in steps) + transitions
        atoms.append(
            TrajectoryAtom(
                states=states,
                actions=actions,
                probability=float(np.exp(logp)),
                cumulative_reward=float(sum(mdp.R[s, a] for s, a in steps)),
                cumulative_advantage=float(sum(advantage[s, a] for s, a in steps)),
            )
        )

    logger.debug("enumerated %d trajectories of horizon %d from state %d", len(atoms), horizon, start_state)
    return TiltedDistribution(
        atoms=atoms,
        reweighted=np.exp(left - logsumexp(left)),
        policy_side=np.exp(right - logsumexp(right)),
        kind=kind,
        scale=scale,
    )


def branch_masses(distribution: TiltedDistribution, n_actions: int) -> tuple[np.ndarray, np.ndarray]:
    """Base and reweighted probability mass grouped by the first action."""
    base = np.zeros(n_actions)
    tilted = np.zeros(n_actions)
    for atom, mass in zip(distribution.atoms, distribution.reweighted):
        base[atom.actions[0]] += atom.probability
        tilted[atom.actions[0]] += mass
    return base, tilted
