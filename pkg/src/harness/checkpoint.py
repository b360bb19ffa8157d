"""
Run checkpoints: every network, the diffusion schedule and normalizer, and
the resolved run configuration in one container file.
"""
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from src.agent.a2c import AgentNets
from src.common.exceptions import ShapeError
from src.envs.continuous import ContinuousEnv, make_continuous_env
from src.harness.config import RunConfig
from src.numerics.checkpoint import load_container, save_container
from src.worldmodel.diffusion import DiffusionWorldModel
from src.worldmodel.segment import SegmentLayout

logger = logging.getLogger(__name__)


@dataclass
class RunModels:
    config: RunConfig
    env: ContinuousEnv
    nets: AgentNets
    world: DiffusionWorldModel
    seed: int = 0
    iteration: int = 0
    real_steps: int = 0


def build_models(cfg: RunConfig, rng: np.random.Generator, seed: int = 0) -> RunModels:
    """Fresh networks for ``cfg``; ``rng`` drives every initialization."""
    env = make_continuous_env(cfg.env.name)
    layout = SegmentLayout(cfg.segment.horizon, env.state_dim, env.action_dim)
    nets = AgentNets.build(
        env.state_dim,
        env.action_dim,
        cfg.agent,
        rng,
        action_low=env.action_low,
        action_high=env.action_high,
    )
    world = DiffusionWorldModel.build(layout, cfg.diffusion, rng)
    return RunModels(config=cfg, env=env, nets=nets, world=world, seed=seed)


def save_run_checkpoint(path: str | Path, models: RunModels) -> Path:
    arrays = {f"agent.{k}": v for k, v in models.nets.state_dict().items()}
    arrays.update(models.world.to_arrays())
    meta = {
        "config": models.config.canonical_json(),
        "config_hash": models.config.config_hash(),
        "seed": models.seed,
        "iteration": models.iteration,
        "real_steps": models.real_steps,
    }
    path = save_container(path, arrays, meta)
    logger.debug("checkpoint written to %s (iteration %d)", path, models.iteration)
    return path


def load_run_checkpoint(path: str | Path) -> RunModels:
    """Rebuild every network from the stored configuration, then load the stored weights."""
    arrays, meta = load_container(path)
    if "config" not in meta:
        raise ShapeError(f"{path} is not a run checkpoint (no stored configuration)")
    cfg = RunConfig.model_validate_json(meta["config"])
    if cfg.config_hash() != meta.get("config_hash"):
        raise ShapeError(f"{path}: stored configuration does not match its hash")
    models = build_models(cfg, np.random.default_rng(0), seed=int(meta.get("seed", 0)))
    models.nets.load_state_dict({k.removeprefix("agent."): v for k, v in arrays.items() if k.startswith("agent.")})
    models.world.load_arrays(arrays)
    models.iteration = int(meta.get("iteration", 0))
    models.real_steps = int(meta.get("real_steps", 0))
    return models
