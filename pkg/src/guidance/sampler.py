"""
Guided reverse diffusion over trajectory segments.

Each reverse step inpaints the start state, evaluates the guide at the
denoised mean, shifts the mean by alpha * Sigma_i * g (normalized units) and
then couples the action block to the policy at the new states.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from src.common.exceptions import ShapeError
from src.guidance.config import GuidanceConfig, GuideKind
from src.guidance.coupling import make_coupler
from src.guidance.gradients import GuideGradient, eag_gradient, policy_gradient, reward_gradient, sag_gradient
from src.worldmodel.diffusion import NoisePredictor, reverse_chain, sample_with_retries
from src.worldmodel.normalizer import Normalizer
from src.worldmodel.schedule import DiffusionSchedule
from src.worldmodel.segment import SegmentBatch

logger = logging.getLogger(__name__)


@dataclass
class GuidanceDiagnostics:
    """Running summaries of every guide evaluation made while sampling."""

    evaluations: int = 0
    grad_norm_sum: float = 0.0
    grad_norm_count: int = 0
    max_grad_norm: float = 0.0
    weight_sum: float = 0.0
    weight_count: int = 0
    zeroed_steps: int = 0
    final_values: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def record(self, guide: GuideGradient, i: int) -> None:
        self.evaluations += 1
        self.grad_norm_sum += float(guide.norms.sum())
        self.grad_norm_count += guide.norms.size
        self.max_grad_norm = max(self.max_grad_norm, float(guide.norms.max(initial=0.0)))
        if guide.weights is not None:
            self.weight_sum += float(guide.weights.sum())
            self.weight_count += guide.weights.size
        self.zeroed_steps += guide.zeroed
        if i == 1:
            self.final_values = guide.values.copy()
        logger.debug("guide step %d: mean |g| %.4g", i, float(guide.norms.mean()) if guide.norms.size else 0.0)

    @property
    def mean_grad_norm(self) -> float:
        return self.grad_norm_sum / self.grad_norm_count if self.grad_norm_count else 0.0

    @property
    def mean_weight(self) -> float | None:
        return self.weight_sum / self.weight_count if self.weight_count else None


@dataclass
class GuidedSamples:
    batch: SegmentBatch
    diagnostics: GuidanceDiagnostics


def guide_gradient(
    cfg: GuidanceConfig,
    states: np.ndarray,
    actions: np.ndarray,
    a_net=None,
    policy=None,
    reward_model=None,
    rng: np.random.Generator | None = None,
) -> GuideGradient | None:
    """Dispatch on ``cfg.kind``; ``none`` has no gradient."""
    if cfg.kind is GuideKind.NONE:
        return None
    if cfg.kind is GuideKind.EAG:
        return eag_gradient(states, actions, a_net, cfg.clip)
    if cfg.kind is GuideKind.SAG:
        return sag_gradient(states, actions, a_net, cfg.clip, policy=policy if cfg.center else None, n_mc=cfg.n_mc, rng=rng)
    if cfg.kind is GuideKind.REWARD:
        return reward_gradient(states, actions, reward_model, cfg.clip)
    return policy_gradient(states, actions, policy, cfg.clip)


def make_guide(
    cfg: GuidanceConfig,
    schedule: DiffusionSchedule,
    predictor: NoisePredictor,
    normalizer: Normalizer,
    diagnostics: GuidanceDiagnostics,
    a_net=None,
    policy=None,
    reward_model=None,
):
    """
    Build the reverse-chain hook returning alpha * Sigma_i * g in normalized
    units. Gradients are taken in raw units and mapped back by the
    normalizer's std; the inpainted start state and the reward channel are
    never shifted.
    """
    layout = predictor.layout
    variance = schedule.guidance_variance
    alpha = cfg.scale

    def guide(mean: np.ndarray, cond: np.ndarray, i: int, rng: np.random.Generator):
        B = mean.shape[0]
        states = normalizer.denormalize_states(layout.states_view(mean))
        actions = normalizer.denormalize_actions(cond.reshape(B, layout.horizon, layout.action_dim))
        grad = guide_gradient(cfg, states, actions, a_net, policy, reward_model, rng)
        diagnostics.record(grad, i)

        state_grad = grad.state_grad * normalizer.state_std
        state_grad[:, 0] = 0.0
        shift = np.zeros_like(mean)
        shift[:, : (layout.horizon + 1) * layout.state_dim] = alpha * variance[i] * state_grad.reshape(B, -1)

        cond_shift = None
        if cfg.apply_to_actions:
            cond_shift = alpha * variance[i] * (grad.action_grad * normalizer.action_std).reshape(B, -1)
        return shift, cond_shift

    return guide


def guided_sample(
    predictor: NoisePredictor,
    schedule: DiffusionSchedule,
    cfg: GuidanceConfig,
    start_states: np.ndarray,
    rng: np.random.Generator,
    a_net=None,
    policy=None,
    reward_model=None,
    normalizer: Normalizer | None = None,
) -> GuidedSamples:
    """
    Draw one segment per row of ``start_states`` (raw units). Returns raw-unit
    segments whose first state equals the requested start state exactly.
    """
    layout = predictor.layout
    normalizer = normalizer or Normalizer.identity(layout.state_dim, layout.action_dim)
    start_states = np.atleast_2d(np.asarray(start_states, dtype=np.float64))
    if start_states.shape[1] != layout.state_dim:
        raise ShapeError(f"start states must have {layout.state_dim} columns, got {start_states.shape[1]}")
    needs = {
        GuideKind.SAG: a_net,
        GuideKind.EAG: a_net,
        GuideKind.REWARD: reward_model,
        GuideKind.POLICY_ONLY: policy,
    }
    if cfg.kind in needs and needs[cfg.kind] is None:
        raise ShapeError(f"guide '{cfg.kind.value}' is missing the network it differentiates")

    count = start_states.shape[0]
    start = normalizer.normalize_states(start_states)
    diagnostics = GuidanceDiagnostics()
    guide = None
    if cfg.kind is not GuideKind.NONE:
        guide = make_guide(cfg, schedule, predictor, normalizer, diagnostics, a_net, policy, reward_model)
    couple = None
    if policy is not None:
        couple = make_coupler(policy, schedule, layout, normalizer, cfg.couple_strength)

    def draw(rows: np.ndarray, attempt_rng: np.random.Generator):
        return reverse_chain(predictor, schedule, rows.size, attempt_rng, start_states=start[rows], guide=guide, couple=couple)

    x, cond = sample_with_retries(draw, count, layout, rng)
    batch = normalizer.denormalize(layout.unflatten(x, cond))
    # denormalizing can round the inpainted coordinates; restore them exactly
    batch.states[:, 0] = start_states
    return GuidedSamples(batch=batch, diagnostics=diagnostics)
