"""Exact policy evaluation on finite MDPs."""
import numpy as np

from src.common.exceptions import InvalidMDPError, SingularSystemError
from src.envs.tabular import TabularMDP
from src.oracle.policy import ExactPolicy


def value_iteration(mdp: TabularMDP, policy: ExactPolicy, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    ``k`` synchronous Bellman backups under a fixed policy from V_0 = 0.

    Returns:
        (V_k, Q_k, A_k) with Q_k = R + gamma * P V_{k-1} and A_k = Q_k - V_k.
    """
    if k < 1:
        raise InvalidMDPError(f"value iteration needs k >= 1 backups, got {k}")
    policy.check(mdp)
    V = np.zeros(mdp.n_states)
    Q = np.zeros((mdp.n_states, mdp.n_actions))
    for _ in range(k):
        Q = mdp.R + mdp.gamma * mdp.P @ V
        V = (policy.table * Q).sum(axis=1)
    return V, Q, Q - V[:, None]


def _reaches_terminal(P_pi: np.ndarray, terminal: np.ndarray) -> np.ndarray:
    reach = terminal.copy()
    # backward closure: a state reaches a terminal if any successor does
    while True:
        grown = reach | ((P_pi > 0) & reach[None, :]).any(axis=1)
        if np.array_equal(grown, reach):
            return reach
        reach = grown


def state_values(mdp: TabularMDP, policy: ExactPolicy) -> np.ndarray:
    """
    Solve (I - gamma P_pi) V = r_pi. At gamma = 1 terminal states are fixed
    at 0 and the system is solved on the remaining states, which must all
    reach a terminal state under the policy.
    """
    policy.check(mdp)
    P_pi = np.einsum("sa,sat->st", policy.table, mdp.P)
    r_pi = (policy.table * mdp.R).sum(axis=1)

    if mdp.gamma < 1.0:
        return np.linalg.solve(np.eye(mdp.n_states) - mdp.gamma * P_pi, r_pi)

    reach = _reaches_terminal(P_pi, mdp.terminal)
    if not reach.all():
        stuck = [mdp.state_names[s] for s in np.flatnonzero(~reach)]
        raise SingularSystemError(
            f"gamma = 1 but states {stuck} never reach a terminal state under this policy; values are unbounded",
            details={"states": stuck},
        )
    live = ~mdp.terminal
    V = np.zeros(mdp.n_states)
    A = np.eye(int(live.sum())) - P_pi[np.ix_(live, live)]
    V[live] = np.linalg.solve(A, r_pi[live])
    return V


def exact_policy_value(mdp: TabularMDP, policy: ExactPolicy) -> float:
    """J(pi) = rho . V_pi."""
    return float(mdp.rho @ state_values(mdp, policy))


def exact_advantage(mdp: TabularMDP, policy: ExactPolicy, backups: int | None = None) -> np.ndarray:
    """
    A(s, a) = Q(s, a) - V(s), from ``backups`` value-iteration steps when given,
    otherwise from the exact linear solve.
    """
    if backups is not None:
        return value_iteration(mdp, policy, backups)[2]
    V = state_values(mdp, policy)
    Q = mdp.R + mdp.gamma * mdp.P @ V
    return Q - V[:, None]
