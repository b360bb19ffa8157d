import pytest

from src.agd_mcp.tools.oracle_tools import MAX_TRIALS, motivating_example, myopia, verify_propositions
from src.common.exceptions import AppException
from src.harness.config import load_config
from src.harness.metrics import read_metrics
from src.models.dto.metrics import MetricsRow
from src.services.comparison import collapse_check, compare_guides
from src.services.verification import check_identity, run_verification_suite
from tests.test_harness import TINY


def test_identity_holds_on_random_instances():
    report = check_identity(12, seed=2)
    assert report.instances == 13
    assert report.violations == 0
    assert report.max_abs_difference <= report.tolerance


def test_identity_needs_an_instance():
    with pytest.raises(AppException):
        check_identity(0)


def test_small_suite_passes():
    report = run_verification_suite(trials=10, identity_instances=5, seed=1)
    assert report.passed
    assert report.proposition_violations == 0
    assert {r.kind for r in report.improvement} == {"sigmoid", "exp"}
    assert report.example.reference_value_matches


@pytest.mark.slow
def test_full_suite_passes():
    report = run_verification_suite()
    assert report.passed
    assert all(r.trials == 500 for r in report.improvement)


# ----------------------------------------------------------------------
# MCP tools
# ----------------------------------------------------------------------

def test_example_tool():
    response = motivating_example()
    assert response["status"] is True
    assert response["data"]["advantage_s1_a1"] == -7.0


def test_myopia_tool_reports_budget_errors():
    assert myopia(3)["data"]["optimal_branch"] == "tau2"
    response = myopia(40)
    assert response["status"] is False
    assert "budget" in response["message"]


def test_verify_tool_bounds_trials():
    assert verify_propositions(MAX_TRIALS + 1)["status"] is False
    assert verify_propositions(3)["status"] is True


# ----------------------------------------------------------------------
# Guide comparison
# ----------------------------------------------------------------------

def _rows(returns, stderrs):
    return [
        MetricsRow(iteration=k + 1, real_steps=100 * (k + 1), eval_return=r, eval_stderr=s)
        for k, (r, s) in enumerate(zip(returns, stderrs))
    ]


def test_final_within_three_stderrs_of_best_is_not_a_collapse():
    check = collapse_check(_rows([-50.0, -20.0, -25.0], [2.0, 2.0, 2.0]))
    assert check.best_return == -20.0 and check.best_iteration == 2
    assert check.final_return == -25.0
    assert not check.collapsed


def test_final_far_below_best_is_a_collapse():
    check = collapse_check(_rows([-50.0, -20.0, -40.0], [2.0, 2.0, 2.0]))
    assert check.collapsed


def test_collapse_skips_rows_without_evaluation():
    rows = _rows([-30.0, -10.0], [1.0, 1.0])
    rows.append(MetricsRow(iteration=3, real_steps=300))
    check = collapse_check(rows)
    assert check.final_return == -10.0
    assert not check.collapsed


def test_single_episode_best_allows_no_drop():
    check = collapse_check(_rows([-10.0, -10.5], [0.0, 0.0]))
    assert check.best_stderr == 0.0
    assert check.collapsed


def test_collapse_needs_an_evaluation():
    with pytest.raises(AppException):
        collapse_check([MetricsRow(iteration=1, real_steps=10)])


def test_comparison_needs_a_guided_kind(tmp_path):
    with pytest.raises(AppException):
        compare_guides(load_config(None, TINY), tmp_path, seeds=[0], kinds=["none"])


@pytest.mark.slow
def test_small_comparison_reports_paired_differences(tmp_path):
    cfg = load_config(None, TINY)
    report = compare_guides(cfg, tmp_path, seeds=[0, 1])
    assert report.baseline == "none"
    assert report.kinds == ["none", "sag", "eag"]
    assert [env.env for env in report.envs] == ["point-mass", "pendulum-like"]

    for env in report.envs:
        assert env.seeds == [0, 1]
        for seed_report in env.per_seed:
            finals = seed_report.final_returns
            assert set(seed_report.paired_differences) == {"sag", "eag"}
            for kind, diff in seed_report.paired_differences.items():
                assert diff == pytest.approx(finals[kind] - finals["none"])
            for kind, check in seed_report.collapse.items():
                csv_rows = read_metrics(tmp_path / env.env / kind / f"seed_{seed_report.seed}" / "metrics.csv")
                returns = [float(row["eval_return"]) for row in csv_rows if row["eval_return"]]
                assert check.final_return == returns[-1]
                assert check.best_return == max(returns)
        for kind in ("sag", "eag"):
            diffs = [s.paired_differences[kind] for s in env.per_seed]
            assert env.mean_difference[kind] == pytest.approx(sum(diffs) / len(diffs))
            assert env.not_worse[kind] == (env.mean_difference[kind] >= 0.0)
    assert report.passed == all(
        env.not_worse[k] and env.collapsed_runs[k] == 0 for env in report.envs for k in ("sag", "eag")
    )
