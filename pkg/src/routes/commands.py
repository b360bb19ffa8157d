from pathlib import Path
from typing import Optional

import typer

from src.common.exceptions import AppException
from src.core.config import settings
from src.guidance.config import GuideKind
from src.harness.config import load_config
from src.oracle.examples import motivating_example_report
from src.services import comparison, experiments
from src.services.verification import run_verification_suite

cli = typer.Typer(
    name="agd",
    help="Advantage-guided diffusion world models: training, sampling and exact checks.",
    no_args_is_help=True,
    add_completion=False,
)

# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@cli.command()
def train(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="TOML run file with dotted keys."),
    seed: Optional[int] = typer.Option(None, "--seed", help="Run this single seed instead of the configured list."),
    guide: Optional[GuideKind] = typer.Option(None, "--guide", help="Guide kind, overriding guide.kind."),
    out: Path = typer.Option(Path(settings.OUTPUT_DIR), "--out", "-o", help="Output directory."),
):
    """Run the Dyna loop for every configured seed."""
    overrides: dict = {}
    if seed is not None:
        overrides["seeds"] = [seed]
    if guide is not None:
        overrides["guide.kind"] = guide.value
    cfg = load_config(config, overrides)
    run_dir = out / cfg.config_hash()[:12]
    results = experiments.train(cfg, run_dir)
    for result in results:
        last = result.rows[-1].eval_return if result.rows else None
        typer.echo(f"seed {result.models.seed}: {len(result.rows)} iterations, final eval return {last}, metrics {result.metrics}")


@cli.command()
def compare(
    config: Optional[Path] = typer.Option(None, "--config", "-c", help="TOML run file with dotted keys."),
    seeds: int = typer.Option(comparison.DEFAULT_SEEDS, "--seeds", min=1, help="Seeds 0..n-1 per kind and environment."),
    real_steps: Optional[int] = typer.Option(None, "--real-steps", min=1, help="Override budget.real_steps."),
    out: Path = typer.Option(Path(settings.OUTPUT_DIR), "--out", "-o", help="Output directory."),
    report: Optional[Path] = typer.Option(None, "--report", help="Write the full JSON report here."),
):
    """Paired final-return comparison of none, sag and eag on both environments."""
    overrides: dict = {}
    if real_steps is not None:
        overrides["budget.real_steps"] = real_steps
    cfg = load_config(config, overrides)
    result = comparison.compare_guides(cfg, out / f"compare_{cfg.config_hash()[:12]}", seeds=range(seeds))
    if report is not None:
        report.parent.mkdir(parents=True, exist_ok=True)
        report.write_text(result.model_dump_json(indent=2))

    for env in result.envs:
        for kind, mean in env.mean_difference.items():
            stderr = env.stderr_difference[kind]
            spread = "n/a" if stderr is None else f"{stderr:.4g}"
            typer.echo(
                f"{env.env}: {kind} - {result.baseline} = {mean:+.4g} (stderr {spread}) over {len(env.seeds)} seeds, "
                f"collapsed runs {env.collapsed_runs[kind]}"
            )
    if not result.passed:
        raise AppException("guided runs fell below the unguided baseline or collapsed")
    typer.echo(f"comparison passed in {result.runtime_seconds:.1f}s")


# ---------------------------------------------------------------------------
# Exact checks
# ---------------------------------------------------------------------------

@cli.command()
def verify(
    trials: int = typer.Option(500, "--trials", min=1, help="Random MDPs per tilt kind."),
    identity_instances: int = typer.Option(100, "--identity-instances", min=1),
    seed: int = typer.Option(0, "--seed"),
    report: Optional[Path] = typer.Option(None, "--report", help="Write the full JSON report here."),
):
    """Check policy improvement under both tilts and the reweighted-sampling identity."""
    result = run_verification_suite(trials, identity_instances, seed)
    if report is not None:
        report.parent.mkdir(parents=True, exist_ok=True)
        report.write_text(result.model_dump_json(indent=2))

    ex = result.example
    typer.echo(f"A(s1,a1) after {ex.backups} backups = {ex.advantage_s1_a1:g} (reference -7: {'ok' if ex.reference_value_matches else 'MISMATCH'})")
    for r in result.improvement:
        typer.echo(f"{r.kind:>7} tilt: {r.trials} trials, {r.violations} violations, min margin {r.min_margin:.3e}")
    typer.echo(
        f"identity: {result.identity.instances} instances, max |diff| {result.identity.max_abs_difference:.3e}, "
        f"{result.identity.violations} violations"
    )
    typer.echo(f"proposition violations: {result.proposition_violations}")
    if not result.passed:
        raise AppException("verification failed")
    typer.echo(f"verification passed in {result.runtime_seconds:.2f}s")


@cli.command()
def example(
    horizon: int = typer.Option(3, "--horizon", min=1),
    r: float = typer.Option(-5.0, "--r"),
    r_bar: float = typer.Option(-4.0, "--r-bar"),
    r_star: float = typer.Option(10.0, "--r-star"),
):
    """Print the two-branch chain's advantages and what each tilt prefers."""
    ex = motivating_example_report(r, r_bar, r_star, horizon)
    typer.echo(f"A(s1,a1) = {ex.advantage_s1_a1:g}")
    typer.echo(f"A(s1,a2) = {ex.advantage_s1_a2:g}" + ("  (nonzero: A(s,a) = 0 holds only for s != s1)" if ex.zero_claim_too_broad else ""))
    typer.echo(f"max |A| at other states = {ex.max_abs_advantage_elsewhere:g}")
    typer.echo(f"J(pi) = {ex.j_original:g}, J(exp tilt) = {ex.j_exp_tilted:g}, J(sigmoid tilt) = {ex.j_sigmoid_tilted:g}")
    typer.echo(f"horizon {ex.myopia.horizon} branches:")
    for b in ex.myopia.branches:
        typer.echo(
            f"  {b.branch} ({b.first_action}): sum r = {b.cumulative_reward:g}, sum A = {b.cumulative_advantage:g}, "
            f"reward-tilted mass = {b.reward_tilted_mass:.4f}, advantage-tilted mass = {b.advantage_tilted_mass:.4f}, "
            f"return = {b.exact_return:g}"
        )
    typer.echo(f"reward tilting prefers {ex.myopia.reward_tilt_prefers}")
    typer.echo(f"advantage tilting prefers {ex.myopia.advantage_tilt_prefers}")
    typer.echo(f"optimal branch is {ex.myopia.optimal_branch}")


# ---------------------------------------------------------------------------
# Checkpoints
# ---------------------------------------------------------------------------

@cli.command()
def sample(
    checkpoint: Path = typer.Option(..., "--checkpoint", exists=True, dir_okay=False),
    count: int = typer.Option(..., "--count", min=1),
    out: Path = typer.Option(..., "--out"),
    seed: int = typer.Option(0, "--seed"),
):
    """Export guided segments from a run checkpoint as JSON lines."""
    written = experiments.export_samples(checkpoint, count, out, seed=seed)
    typer.echo(f"wrote {written} segments to {out}")


@cli.command("eval")
def evaluate(
    checkpoint: Path = typer.Option(..., "--checkpoint", exists=True, dir_okay=False),
    episodes: Optional[int] = typer.Option(None, "--episodes", min=1),
    seed: int = typer.Option(0, "--seed"),
):
    """Mean-action return of a checkpoint's policy in the real environment."""
    result = experiments.evaluate_checkpoint(checkpoint, episodes, seed)
    stderr = "n/a (single episode)" if result.single_episode else f"{result.stderr:.4g}"
    typer.echo(f"mean return {result.mean:.4g} over {result.episodes} episodes, stderr {stderr}")


# ---------------------------------------------------------------------------
# MCP
# ---------------------------------------------------------------------------

@cli.command()
def serve(
    transport: str = typer.Option("stdio", "--transport", help="stdio, sse or streamable-http."),
):
    """Serve the exact-check reports as MCP tools."""
    from src.agd_mcp.server import mcp
    import src.agd_mcp.tools.oracle_tools  # noqa: F401  (registers the tools)

    mcp.run(transport=transport)
