"""
The Dyna loop: collect real transitions, refit the diffusion world model,
generate guided synthetic segments from buffered start states and improve
the policy on them with advantage actor-critic.
"""
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from src.agent.a2c import A2CLosses, a2c_update
from src.common.exceptions import AppException, RunAborted
from src.core.config import settings
from src.envs.continuous import ContinuousEnv, make_continuous_env
from src.guidance.sampler import guided_sample
from src.harness.buffer import ReplayBuffer
from src.harness.checkpoint import RunModels, build_models, save_run_checkpoint
from src.harness.config import RunConfig
from src.harness.metrics import MetricsWriter, TimingWriter
from src.models.dto.metrics import EvalResult, MetricsRow, TimingRow

logger = logging.getLogger(__name__)


# ----------------------------------------------------------------------
# Real environment
# ----------------------------------------------------------------------

def collect_real(
    env: ContinuousEnv,
    policy,
    n_steps: int,
    buffer: ReplayBuffer,
    rng: np.random.Generator,
) -> int:
    """
    Step ``env`` ``n_steps`` times with sampled actions, continuing the
    current episode and resetting when it ends. Returns the number of
    episodes that finished.
    """
    if n_steps < 1:
        raise AppException(f"n_steps must be >= 1, got {n_steps}")
    finished = 0
    for _ in range(n_steps):
        if env.episode < 0 or env.t >= env.max_steps:
            env.reset(rng)
        action = policy.sample(env.state[None, :], rng)[0]
        transition = env.step(action)
        buffer.add(transition)
        finished += int(transition.done)
    buffer.refresh_stats()
    return finished


def evaluate_policy(
    env: ContinuousEnv,
    policy,
    n_episodes: int,
    rng: np.random.Generator,
    start_state: np.ndarray | None = None,
) -> EvalResult:
    """Undiscounted return of the frozen policy's mean action over ``n_episodes``."""
    if n_episodes < 1:
        raise AppException(f"n_episodes must be >= 1, got {n_episodes}")
    returns = np.zeros(n_episodes)
    for k in range(n_episodes):
        state = env.reset(rng, start_state)
        done = False
        while not done:
            transition = env.step(policy.mean_action(state[None, :])[0])
            returns[k] += transition.reward
            state, done = transition.next_state, transition.done
    single = n_episodes == 1
    stderr = 0.0 if single else float(returns.std(ddof=1) / np.sqrt(n_episodes))
    return EvalResult(
        mean=float(returns.mean()),
        stderr=stderr,
        episodes=n_episodes,
        single_episode=single,
        returns=returns.tolist(),
    )


# ----------------------------------------------------------------------
# Loop
# ----------------------------------------------------------------------

@dataclass
class RunResult:
    models: RunModels
    checkpoint: Path
    metrics: Path
    timing: Path
    rows: list[MetricsRow]


@dataclass
class RunStreams:
    init: np.random.Generator
    collect: np.random.Generator
    model: np.random.Generator
    sample: np.random.Generator
    evaluate: np.random.Generator

    @classmethod
    def from_seed(cls, seed: int) -> "RunStreams":
        return cls(*(np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(5)))


def _mean(values: list[float]) -> float | None:
    return float(np.mean(values)) if values else None


def _average_losses(history: list[A2CLosses]) -> dict[str, float | None]:
    out: dict[str, float | None] = {}
    for key in ("policy", "critic", "advantage", "reward", "entropy"):
        out[key] = _mean([getattr(h, key) for h in history if getattr(h, key) is not None])
    return out


def run_agd_mbrl(cfg: RunConfig, out_dir: str | Path, seed: int) -> RunResult:
    """
    Run the loop for one seed until ``cfg.budget.real_steps`` real transitions
    have been collected. Writes ``metrics.csv``, ``timing.csv`` and the
    checkpoint under ``out_dir``; a failure mid-iteration raises ``RunAborted``
    pointing at the checkpoint of the last completed iteration.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    checkpoint_path = out_dir / settings.CHECKPOINT_FILE
    metrics_path = out_dir / settings.METRICS_FILE
    timing_path = out_dir / settings.TIMING_FILE

    streams = RunStreams.from_seed(seed)
    models = build_models(cfg, streams.init, seed=seed)
    eval_env = make_continuous_env(cfg.env.name)
    buffer = ReplayBuffer(cfg.buffer.capacity, models.env.state_dim, models.env.action_dim)
    metrics = MetricsWriter(metrics_path)
    timing = TimingWriter(timing_path)
    save_run_checkpoint(checkpoint_path, models)

    horizon = cfg.segment.horizon
    rows: list[MetricsRow] = []
    logger.info(
        "run %s seed %d: env=%s guide=%s budget=%d",
        cfg.config_hash()[:12],
        seed,
        cfg.env.name,
        cfg.guide.kind.value,
        cfg.budget.real_steps,
    )

    while models.real_steps < cfg.budget.real_steps:
        iteration = models.iteration + 1
        try:
            clock = time.perf_counter()
            n = min(cfg.budget.steps_per_iteration, cfg.budget.real_steps - models.real_steps)
            collect_real(models.env, models.nets.policy, n, buffer, streams.collect)
            t_collect = time.perf_counter()

            row = MetricsRow(iteration=iteration, real_steps=models.real_steps + n)
            models.world.normalizer = buffer.stats
            t_model = t_sample = t_update = t_collect
            if buffer.n_segments(horizon) == 0:
                logger.warning("iteration %d: no complete segment of horizon %d yet, skipping updates", iteration, horizon)
            else:
                segments = buffer.sample_segments(horizon, cfg.loop.model_segments, streams.model)
                row.diffusion_loss = _mean(models.world.fit(segments, cfg.diffusion, streams.model))
                t_model = time.perf_counter()

                history: list[A2CLosses] = []
                advantages, weights, norms, max_norms, zeroed = [], [], [], [], 0
                sample_seconds = 0.0
                for _ in range(cfg.loop.a2c_updates):
                    start = time.perf_counter()
                    starts = buffer.sample_states(cfg.loop.synthetic_batch, streams.sample)
                    guided = guided_sample(
                        models.world.predictor,
                        models.world.schedule,
                        cfg.guide,
                        starts,
                        streams.sample,
                        a_net=models.nets.advantage,
                        policy=models.nets.policy,
                        reward_model=models.nets.reward,
                        normalizer=models.world.normalizer,
                    )
                    sample_seconds += time.perf_counter() - start
                    synthetic = guided.batch
                    B, H = synthetic.rewards.shape
                    advantages.append(
                        float(
                            models.nets.advantage.predict(
                                synthetic.states[:, :H].reshape(B * H, -1), synthetic.actions.reshape(B * H, -1)
                            ).mean()
                        )
                    )
                    diag = guided.diagnostics
                    if diag.evaluations:
                        norms.append(diag.mean_grad_norm)
                        max_norms.append(diag.max_grad_norm)
                        zeroed += diag.zeroed_steps
                        if diag.mean_weight is not None:
                            weights.append(diag.mean_weight)
                    reward_batch = buffer.sample_segments(horizon, cfg.loop.reward_batch, streams.model)
                    history.append(a2c_update(synthetic, models.nets, cfg.agent, reward_batch))
                t_sample = t_model + sample_seconds
                t_update = time.perf_counter()

                losses = _average_losses(history)
                row.policy_loss = losses["policy"]
                row.critic_loss = losses["critic"]
                row.advantage_loss = losses["advantage"]
                row.reward_loss = losses["reward"]
                row.entropy = losses["entropy"]
                row.synthetic_mean_advantage = _mean(advantages)
                if norms:
                    row.guide_mean_weight = _mean(weights)
                    row.guide_mean_grad_norm = _mean(norms)
                    row.guide_max_grad_norm = float(max(max_norms))
                    row.guide_zeroed_steps = zeroed

            if iteration % cfg.loop.eval_every == 0:
                result = evaluate_policy(eval_env, models.nets.policy, cfg.loop.eval_episodes, streams.evaluate)
                row.eval_return = result.mean
                row.eval_stderr = result.stderr
                row.eval_single_episode = result.single_episode
            t_eval = time.perf_counter()
        except Exception as exc:
            logger.warning("iteration %d failed: %s", iteration, exc, exc_info=True)
            raise RunAborted(
                f"run aborted in iteration {iteration}: {exc}; last good state at {checkpoint_path}",
                checkpoint=str(checkpoint_path),
            ) from exc

        models.iteration = iteration
        models.real_steps = row.real_steps
        metrics.write(row)
        timing.write(
            TimingRow(
                iteration=iteration,
                collect_seconds=t_collect - clock,
                model_seconds=t_model - t_collect,
                sample_seconds=t_sample - t_model,
                update_seconds=t_update - t_sample,
                eval_seconds=t_eval - t_update,
                total_seconds=t_eval - clock,
            )
        )
        rows.append(row)
        save_run_checkpoint(checkpoint_path, models)
        logger.info(
            "iteration %d: real_steps=%d diffusion_loss=%s eval_return=%s",
            iteration,
            models.real_steps,
            row.diffusion_loss,
            row.eval_return,
        )

    return RunResult(models=models, checkpoint=checkpoint_path, metrics=metrics_path, timing=timing_path, rows=rows)
