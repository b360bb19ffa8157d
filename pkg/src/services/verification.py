"""Exact checks of the tilted-policy results, bundled into one report."""
import logging
import time

import numpy as np

from src.common.exceptions import AppException
from src.core.config import settings
from src.envs.tabular import build_motivating_mdp, random_tabular_mdp
from src.models.dto.reports import IdentityReport, VerifyReport
from src.oracle.enumeration import enumerate_tilted_distribution
from src.oracle.evaluation import exact_advantage
from src.oracle.examples import BACKUPS, motivating_example_report
from src.oracle.policy import ExactPolicy
from src.oracle.tilting import TiltKind, verify_improvement

logger = logging.getLogger(__name__)

MAX_IDENTITY_HORIZON = 4


def check_identity(instances: int, seed: int = 0, tolerance: float | None = None) -> IdentityReport:
    """
    Compare both sides of the reweighted-sampling identity, for both tilts,
    on ``instances`` random MDPs (horizons 1 to 4, random start state) and on
    the two-branch chain at horizon 3.
    """
    if instances < 1:
        raise AppException(f"instances must be >= 1, got {instances}")
    tolerance = settings.IDENTITY_TOLERANCE if tolerance is None else tolerance
    differences: list[float] = []

    for child in np.random.SeedSequence(seed).spawn(instances):
        rng = np.random.default_rng(child)
        mdp = random_tabular_mdp(int(rng.integers(2**31)), n_states=int(rng.integers(2, 6)), n_actions=int(rng.integers(2, 4)))
        policy = ExactPolicy.random(mdp, rng)
        advantage = exact_advantage(mdp, policy)
        horizon = int(rng.integers(1, MAX_IDENTITY_HORIZON + 1))
        start = int(rng.integers(mdp.n_states))
        for kind in TiltKind:
            dist = enumerate_tilted_distribution(mdp, policy, advantage, horizon, kind, start)
            differences.append(dist.max_abs_difference)

    mdp = build_motivating_mdp()
    policy = ExactPolicy.uniform(mdp)
    advantage = exact_advantage(mdp, policy, BACKUPS)
    for kind in TiltKind:
        differences.append(enumerate_tilted_distribution(mdp, policy, advantage, 3, kind, 0).max_abs_difference)

    violations = sum(d > tolerance for d in differences)
    if violations:
        logger.warning("reweighted-sampling identity failed on %d of %d checks", violations, len(differences))
    return IdentityReport(
        instances=instances + 1,
        max_abs_difference=max(differences),
        violations=violations,
        tolerance=tolerance,
    )


def run_verification_suite(trials: int = 500, identity_instances: int = 100, seed: int = 0) -> VerifyReport:
    started = time.perf_counter()
    example = motivating_example_report()
    improvement = [verify_improvement(kind, trials, seed=seed) for kind in TiltKind]
    identity = check_identity(identity_instances, seed=seed)
    passed = (
        example.reference_value_matches
        and example.max_abs_advantage_elsewhere == 0.0
        and example.myopia.reward_tilt_prefers != example.myopia.advantage_tilt_prefers
        and example.myopia.advantage_tilt_prefers == example.myopia.optimal_branch
        and all(r.violations == 0 for r in improvement)
        and identity.violations == 0
    )
    report = VerifyReport(
        passed=passed,
        example=example,
        improvement=improvement,
        identity=identity,
        runtime_seconds=time.perf_counter() - started,
    )
    logger.info("verification %s in %.2fs", "passed" if passed else "FAILED", report.runtime_seconds)
    return report
