"""Reports on the two-branch chain where short-horizon reward misleads."""
import numpy as np

from src.envs.tabular import TabularMDP, build_motivating_mdp
from src.models.dto.reports import BranchSummary, ExampleReport, MyopiaReport
from src.oracle.enumeration import branch_masses, enumerate_tilted_distribution
from src.oracle.evaluation import exact_advantage, exact_policy_value, state_values, value_iteration
from src.oracle.policy import ExactPolicy
from src.oracle.tilting import TiltKind, tilt_policy

BACKUPS = 4
REFERENCE_ADVANTAGE = -7.0


def myopia_report(
    mdp: TabularMDP,
    policy: ExactPolicy,
    horizon: int = 3,
    backups: int = BACKUPS,
    start_state: int = 0,
) -> MyopiaReport:
    """
    Compare what reward-tilting and advantage-tilting over ``horizon`` steps
    prefer at ``start_state``, branch by branch (a branch is the first action).
    """
    advantage = exact_advantage(mdp, policy, backups)
    by_reward = enumerate_tilted_distribution(mdp, policy, mdp.R, horizon, TiltKind.EXP, start_state)
    by_advantage = enumerate_tilted_distribution(mdp, policy, advantage, horizon, TiltKind.EXP, start_state)
    base, reward_mass = branch_masses(by_reward, mdp.n_actions)
    _, advantage_mass = branch_masses(by_advantage, mdp.n_actions)

    branches: list[BranchSummary] = []
    for a in np.flatnonzero(policy.table[start_state] > 0):
        atoms = [atom for atom in by_reward.atoms if atom.actions[0] == a]
        mass = sum(atom.probability for atom in atoms)
        committed = ExactPolicy.deterministic(mdp, {start_state: int(a)}, default=policy)
        branches.append(
            BranchSummary(
                branch=f"tau{a + 1}",
                first_action=mdp.action_names[a],
                cumulative_reward=sum(atom.probability * atom.cumulative_reward for atom in atoms) / mass,
                cumulative_advantage=sum(atom.probability * atom.cumulative_advantage for atom in atoms) / mass,
                base_mass=float(base[a]),
                reward_tilted_mass=float(reward_mass[a]),
                advantage_tilted_mass=float(advantage_mass[a]),
                exact_return=float(state_values(mdp, committed)[start_state]),
            )
        )

    return MyopiaReport(
        horizon=horizon,
        branches=branches,
        reward_tilt_prefers=max(branches, key=lambda b: b.reward_tilted_mass).branch,
        advantage_tilt_prefers=max(branches, key=lambda b: b.advantage_tilted_mass).branch,
        optimal_branch=max(branches, key=lambda b: b.exact_return).branch,
    )


def motivating_example_report(
    r: float = -5.0,
    r_bar: float = -4.0,
    r_star: float = 10.0,
    horizon: int = 3,
) -> ExampleReport:
    """Advantages after four backups under the 50/50 policy, plus the myopia comparison."""
    mdp = build_motivating_mdp(r, r_bar, r_star)
    policy = ExactPolicy.uniform(mdp)
    _, _, advantage = value_iteration(mdp, policy, BACKUPS)
    exp_policy, _ = tilt_policy(mdp, policy, advantage, TiltKind.EXP)
    sig_policy, _ = tilt_policy(mdp, policy, advantage, TiltKind.SIGMOID)

    return ExampleReport(
        backups=BACKUPS,
        gamma=mdp.gamma,
        advantage_s1_a1=float(advantage[0, 0]),
        advantage_s1_a2=float(advantage[0, 1]),
        max_abs_advantage_elsewhere=float(np.max(np.abs(advantage[1:]))),
        reference_value_matches=bool(advantage[0, 0] == REFERENCE_ADVANTAGE),
        zero_claim_too_broad=bool(advantage[0, 1] != 0.0),
        j_original=exact_policy_value(mdp, policy),
        j_exp_tilted=exact_policy_value(mdp, exp_policy),
        j_sigmoid_tilted=exact_policy_value(mdp, sig_policy),
        advantages={name: advantage[s].tolist() for s, name in enumerate(mdp.state_names)},
        myopia=myopia_report(mdp, policy, horizon),
    )
