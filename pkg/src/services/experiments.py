"""Training, sampling export and evaluation driven by run checkpoints."""
import json
import logging
from pathlib import Path

import numpy as np

from src.common.exceptions import AppException
from src.guidance.config import GuidanceConfig
from src.guidance.sampler import guided_sample
from src.harness.checkpoint import load_run_checkpoint
from src.harness.config import RunConfig
from src.harness.dyna import RunResult, evaluate_policy, run_agd_mbrl
from src.models.dto.metrics import EvalResult

logger = logging.getLogger(__name__)


def train(cfg: RunConfig, out_dir: str | Path) -> list[RunResult]:
    """One run per configured seed, each in ``out_dir/seed_<k>``."""
    out_dir = Path(out_dir)
    results = []
    for seed in cfg.seeds:
        results.append(run_agd_mbrl(cfg, out_dir / f"seed_{seed}", seed))
    return results


def export_samples(
    checkpoint: str | Path,
    count: int,
    out: str | Path,
    seed: int = 0,
    guide: GuidanceConfig | None = None,
) -> int:
    """
    Draw ``count`` guided segments from start states of the checkpoint's
    environment and write them as JSON lines, one segment per line, in raw
    units. Returns the number of records written.
    """
    if count < 1:
        raise AppException(f"count must be >= 1, got {count}")
    models = load_run_checkpoint(checkpoint)
    guide = guide or models.config.guide
    start_rng, sample_rng = (np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(2))
    starts = np.stack([models.env.sample_initial_state(start_rng) for _ in range(count)])
    samples = guided_sample(
        models.world.predictor,
        models.world.schedule,
        guide,
        starts,
        sample_rng,
        a_net=models.nets.advantage,
        policy=models.nets.policy,
        reward_model=models.nets.reward,
        normalizer=models.world.normalizer,
    )
    batch = samples.batch
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w") as fh:
        for k in range(len(batch)):
            record = {
                "index": k,
                "guide": guide.kind.value,
                "alpha": guide.scale,
                "states": batch.states[k].tolist(),
                "actions": batch.actions[k].tolist(),
                "rewards": batch.rewards[k].tolist(),
            }
            fh.write(json.dumps(record) + "\n")
    logger.info("wrote %d segments to %s", len(batch), out)
    return len(batch)


def evaluate_checkpoint(checkpoint: str | Path, episodes: int | None = None, seed: int = 0) -> EvalResult:
    models = load_run_checkpoint(checkpoint)
    n = episodes or models.config.loop.eval_episodes
    return evaluate_policy(models.env, models.nets.policy, n, np.random.default_rng(seed))
