"""
Paired comparison of guide kinds across seeds and environments.

Every (environment, kind, seed) triple is one full Dyna run. Runs with the
same seed start from the same initialization and stream seeds, so the
guided minus unguided difference of final evaluation returns is paired
by seed.
"""
import logging
import time
from pathlib import Path
from typing import Sequence

import numpy as np

from src.common.exceptions import AppException
from src.guidance.config import GuideKind
from src.harness.config import RunConfig, build_config, flatten_keys
from src.models.dto.metrics import MetricsRow
from src.models.dto.reports import CollapseCheck, ComparisonReport, EnvComparison, SeedComparison
from src.services.experiments import train

logger = logging.getLogger(__name__)

DEFAULT_KINDS = (GuideKind.NONE, GuideKind.SAG, GuideKind.EAG)
DEFAULT_ENVS = ("point-mass", "pendulum-like")
DEFAULT_SEEDS = 5
COLLAPSE_STDERRS = 3.0


def collapse_check(rows: Sequence[MetricsRow], n_stderr: float = COLLAPSE_STDERRS) -> CollapseCheck:
    """
    Compare the last evaluation with the best one seen so far. The run has
    collapsed when the final return is more than ``n_stderr`` standard
    errors (of the best evaluation) below the best.
    """
    evaluated = [row for row in rows if row.eval_return is not None]
    if not evaluated:
        raise AppException("run produced no evaluation rows")
    best = max(evaluated, key=lambda row: row.eval_return)
    final = evaluated[-1]
    stderr = best.eval_stderr or 0.0
    return CollapseCheck(
        final_return=final.eval_return,
        best_return=best.eval_return,
        best_iteration=best.iteration,
        best_stderr=stderr,
        n_stderr=n_stderr,
        collapsed=final.eval_return < best.eval_return - n_stderr * stderr,
    )


def _run_config(cfg: RunConfig, env: str, kind: GuideKind, seeds: Sequence[int]) -> RunConfig:
    flat = flatten_keys(cfg.model_dump(mode="json"))
    flat.update({"env.name": env, "guide.kind": kind.value, "guide.alpha": None, "seeds": list(seeds)})
    return build_config(flat)


def _summarize(env: str, seeds: Sequence[int], kinds: Sequence[GuideKind], runs: dict) -> EnvComparison:
    baseline = kinds[0].value
    per_seed = []
    for seed in seeds:
        checks = {kind.value: collapse_check(runs[kind.value][seed]) for kind in kinds}
        finals = {name: check.final_return for name, check in checks.items()}
        per_seed.append(
            SeedComparison(
                seed=seed,
                final_returns=finals,
                paired_differences={name: finals[name] - finals[baseline] for name in finals if name != baseline},
                collapse=checks,
            )
        )

    mean_difference, stderr_difference, not_worse = {}, {}, {}
    for kind in kinds[1:]:
        diffs = np.array([s.paired_differences[kind.value] for s in per_seed])
        mean_difference[kind.value] = float(diffs.mean())
        stderr_difference[kind.value] = float(diffs.std(ddof=1) / np.sqrt(diffs.size)) if diffs.size > 1 else None
        not_worse[kind.value] = bool(diffs.mean() >= 0.0)
    collapsed = {kind.value: sum(s.collapse[kind.value].collapsed for s in per_seed) for kind in kinds}
    return EnvComparison(
        env=env,
        seeds=list(seeds),
        per_seed=per_seed,
        mean_difference=mean_difference,
        stderr_difference=stderr_difference,
        not_worse=not_worse,
        collapsed_runs=collapsed,
    )


def compare_guides(
    cfg: RunConfig,
    out_dir: str | Path,
    seeds: Sequence[int] | None = None,
    kinds: Sequence[GuideKind] = DEFAULT_KINDS,
    envs: Sequence[str] = DEFAULT_ENVS,
) -> ComparisonReport:
    """
    Train every kind on every environment for each seed, writing runs to
    ``out_dir/<env>/<kind>/seed_<k>``. The first kind is the baseline the
    others are paired against; each guided kind passes when its mean paired
    difference is nonnegative and none of its runs collapsed.
    """
    kinds = [GuideKind(kind) for kind in kinds]
    if len(kinds) < 2:
        raise AppException("a comparison needs a baseline and at least one guided kind")
    seeds = list(range(DEFAULT_SEEDS) if seeds is None else seeds)
    if not seeds:
        raise AppException("a comparison needs at least one seed")

    started = time.perf_counter()
    out_dir = Path(out_dir)
    envs_out = []
    for env in envs:
        runs: dict[str, dict[int, list[MetricsRow]]] = {}
        for kind in kinds:
            results = train(_run_config(cfg, env, kind, seeds), out_dir / env / kind.value)
            runs[kind.value] = {result.models.seed: result.rows for result in results}
            logger.info("%s / %s: %d seeds done", env, kind.value, len(results))
        envs_out.append(_summarize(env, seeds, kinds, runs))

    passed = all(
        env.not_worse[kind.value] and env.collapsed_runs[kind.value] == 0 for env in envs_out for kind in kinds[1:]
    )
    report = ComparisonReport(
        baseline=kinds[0].value,
        kinds=[kind.value for kind in kinds],
        real_steps=cfg.budget.real_steps,
        envs=envs_out,
        passed=passed,
        runtime_seconds=time.perf_counter() - started,
    )
    logger.info("guide comparison %s in %.1fs", "passed" if passed else "FAILED", report.runtime_seconds)
    return report
