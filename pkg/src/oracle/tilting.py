"""
Policies reweighted by a function of their advantage, and the improvement
checks over random MDPs.
"""
import logging
from enum import Enum

import numpy as np
from scipy.special import log_expit, logsumexp

from src.common.exceptions import AppException
from src.core.config import settings
from src.envs.tabular import TabularMDP, random_tabular_mdp
from src.models.dto.reports import ImprovementReport, ImprovementTrial
from src.oracle.evaluation import exact_advantage, exact_policy_value
from src.oracle.policy import ExactPolicy

logger = logging.getLogger(__name__)


class TiltKind(str, Enum):
    SIGMOID = "sigmoid"
    EXP = "exp"


def log_weights(values: np.ndarray, kind: TiltKind | str, scale: float = 1.0) -> np.ndarray:
    """log w(v): log sigmoid(scale * v) or scale * v."""
    kind = TiltKind(kind)
    scaled = scale * np.asarray(values, dtype=np.float64)
    return log_expit(scaled) if kind is TiltKind.SIGMOID else scaled


def _log_table(table: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.log(table)


def tilt_policy(
    mdp: TabularMDP,
    policy: ExactPolicy,
    advantage: np.ndarray,
    kind: TiltKind | str,
    scale: float = 1.0,
) -> tuple[ExactPolicy, np.ndarray]:
    """
    pi'(a|s) = pi(a|s) w(A(s,a)) / Z(s) with Z(s) = E_{a~pi}[w(A(s,a))].

    Computed in log space so exp-weights of large advantages do not overflow.
    """
    policy.check(mdp)
    log_joint = _log_table(policy.table) + log_weights(advantage, kind, scale)
    log_z = logsumexp(log_joint, axis=1)
    tilted = np.exp(log_joint - log_z[:, None])
    tilted /= tilted.sum(axis=1, keepdims=True)
    return ExactPolicy(tilted), np.exp(log_z)


def expected_advantage(policy: ExactPolicy, advantage: np.ndarray) -> np.ndarray:
    """E_{a~pi(.|s)}[A(s, a)] per state."""
    return (policy.table * advantage).sum(axis=1)


def check_improvement(mdp: TabularMDP, policy: ExactPolicy, kind: TiltKind | str, trial: int = 0) -> ImprovementTrial:
    kind = TiltKind(kind)
    advantage = exact_advantage(mdp, policy)
    tilted, _ = tilt_policy(mdp, policy, advantage, kind)
    j_original = exact_policy_value(mdp, policy)
    j_tilted = exact_policy_value(mdp, tilted)
    margin = j_tilted - j_original
    min_adv = float(expected_advantage(tilted, advantage).min())
    tol = settings.IMPROVEMENT_TOLERANCE
    return ImprovementTrial(
        trial=trial,
        kind=kind.value,
        j_original=j_original,
        j_tilted=j_tilted,
        margin=margin,
        min_expected_advantage=min_adv,
        ok=margin >= -tol and min_adv >= -tol,
    )


def verify_improvement(
    kind: TiltKind | str,
    n_trials: int,
    seed: int = 0,
    n_states: int = 5,
    n_actions: int = 3,
) -> ImprovementReport:
    """
    Tilt a random stochastic policy on each of ``n_trials`` random MDPs and
    check J(tilted) >= J(original) and E_{tilted}[A] >= 0 at every state.
    """
    kind = TiltKind(kind)
    if n_trials < 1:
        raise AppException(f"n_trials must be >= 1, got {n_trials}")
    root = np.random.SeedSequence(seed)
    trials: list[ImprovementTrial] = []
    for k, child in enumerate(root.spawn(n_trials)):
        rng = np.random.default_rng(child)
        mdp = random_tabular_mdp(int(rng.integers(2**31)), n_states=n_states, n_actions=n_actions)
        policy = ExactPolicy.random(mdp, rng)
        trials.append(check_improvement(mdp, policy, kind, trial=k))

    failures = [t for t in trials if not t.ok]
    if failures:
        logger.warning("%s tilt: %d of %d trials violated improvement", kind.value, len(failures), n_trials)
    return ImprovementReport(
        kind=kind.value,
        trials=n_trials,
        violations=len(failures),
        min_margin=min(t.margin for t in trials),
        min_expected_advantage=min(t.min_expected_advantage for t in trials),
        failures=failures,
    )
