from typing import Any, Dict

from src.agd_mcp.server import mcp as oracle_mcp
from src.common.exceptions import AppException
from src.common.responses import AppResponse
from src.envs.tabular import build_motivating_mdp
from src.oracle.examples import motivating_example_report, myopia_report
from src.oracle.policy import ExactPolicy
from src.services.verification import run_verification_suite

MAX_TRIALS = 2000

# =========================
# EXACT CHECKS
# =========================

@oracle_mcp.tool()
def verify_propositions(trials: int = 500) -> Dict[str, Any]:
    """
    Check that sigmoid- and exponential-tilted policies never do worse than
    the policy they tilt, over random tabular MDPs.

    Use when:
    - User asks whether advantage tilting can hurt a policy
    - Agent needs the exact verification numbers

    Returns:
        Dict[str, Any]:
            {
                "status": bool,
                "message": str,
                "data": VerifyReport
            }
    """
    if not 1 <= trials <= MAX_TRIALS:
        return AppResponse.rejected(f"trials must be in [1, {MAX_TRIALS}]")
    report = run_verification_suite(trials=trials)
    message = (
        f"{report.proposition_violations} violations over {trials} trials per tilt; "
        f"identity max |diff| {report.identity.max_abs_difference:.2e}"
    )
    return AppResponse.report(report.passed, message, report)


@oracle_mcp.tool()
def motivating_example() -> Dict[str, Any]:
    """
    Advantages of the two-branch chain after four backups under the 50/50
    policy, with the values of the tilted policies.
    """
    report = motivating_example_report()
    message = f"A(s1,a1) = {report.advantage_s1_a1:g}, A(s1,a2) = {report.advantage_s1_a2:g}"
    return AppResponse.report(True, message, report)


@oracle_mcp.tool()
def myopia(horizon: int = 3) -> Dict[str, Any]:
    """
    Which first action reward-tilting and advantage-tilting prefer over
    ``horizon`` steps of the two-branch chain.
    """
    mdp = build_motivating_mdp()
    try:
        report = myopia_report(mdp, ExactPolicy.uniform(mdp), horizon)
    except AppException as exc:
        return AppResponse.rejected(exc.message)
    message = (
        f"reward tilting prefers {report.reward_tilt_prefers}, advantage tilting prefers "
        f"{report.advantage_tilt_prefers}, optimal is {report.optimal_branch}"
    )
    return AppResponse.report(True, message, report)
