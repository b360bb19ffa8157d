"""
Advantage actor-critic update over a batch of segments.

One call to ``a2c_update`` computes GAE targets with the current critic and
then takes one Adam step on each of the policy, the critic, the advantage
network and (when a real-data batch is given) the reward model.
"""
import logging
from dataclasses import dataclass, field

import numpy as np

from src.agent.config import AgentConfig
from src.agent.critics import AdvantageNet, RewardModel, StateActionNet, ValueCritic
from src.agent.gae import gae_batch
from src.agent.policies import CategoricalPolicy, GaussianPolicy
from src.common.decorators import skip_non_finite
from src.common.exceptions import SegmentError, ShapeError
from src.numerics.optim import Adam
from src.numerics.tensor import Tensor, square, tmean
from src.worldmodel.segment import SegmentBatch

logger = logging.getLogger(__name__)


@dataclass
class AgentNets:
    policy: GaussianPolicy | CategoricalPolicy
    critic: ValueCritic
    advantage: AdvantageNet
    reward: RewardModel
    optimizers: dict[str, Adam] = field(default_factory=dict)

    @classmethod
    def build(
        cls,
        state_dim: int,
        action_dim: int,
        cfg: AgentConfig,
        rng: np.random.Generator,
        action_low=None,
        action_high=None,
        n_actions: int | None = None,
    ) -> "AgentNets":
        """
        Continuous agents need ``action_low``/``action_high``; categorical
        agents need ``n_actions`` and use a single float action coordinate.
        """
        if n_actions is not None:
            policy = CategoricalPolicy(state_dim, n_actions, cfg.hidden, rng, activation=cfg.activation)
            action_dim = 1
        else:
            if action_low is None or action_high is None:
                raise ShapeError("a continuous policy needs action bounds")
            policy = GaussianPolicy(
                state_dim,
                action_dim,
                action_low,
                action_high,
                cfg.hidden,
                rng,
                squash=cfg.squash,
                init_log_std=cfg.init_log_std,
                activation=cfg.activation,
            )
        critic = ValueCritic(state_dim, cfg.hidden, rng, activation=cfg.activation)
        advantage = AdvantageNet(state_dim, action_dim, cfg.hidden, rng, activation=cfg.activation)
        reward = RewardModel(state_dim, action_dim, cfg.hidden, rng, activation=cfg.activation)
        return cls(
            policy=policy,
            critic=critic,
            advantage=advantage,
            reward=reward,
            optimizers={
                "policy": Adam(policy.parameters(), lr=cfg.policy_lr),
                "critic": Adam(critic.parameters(), lr=cfg.critic_lr),
                "advantage": Adam(advantage.parameters(), lr=cfg.advantage_lr),
                "reward": Adam(reward.parameters(), lr=cfg.reward_lr),
            },
        )

    def named_parameters(self) -> dict[str, Tensor]:
        params: dict[str, Tensor] = {}
        for prefix in ("policy", "critic", "advantage", "reward"):
            for name, p in getattr(self, prefix).named_parameters().items():
                params[f"{prefix}.{name}"] = p
        return params

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters().items()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        for name, p in self.named_parameters().items():
            if name not in state:
                raise ShapeError(f"state dict is missing parameter '{name}'")
            value = np.asarray(state[name], dtype=np.float64)
            if value.shape != p.shape:
                raise ShapeError(f"parameter '{name}' has shape {p.shape}, checkpoint holds {value.shape}")
            p.data = value.copy()


@dataclass
class A2CLosses:
    policy: float | None = None
    critic: float | None = None
    advantage: float | None = None
    reward: float | None = None
    entropy: float | None = None


def policy_loss(policy, states, actions, advantages: np.ndarray, entropy_coef: float) -> tuple[Tensor, Tensor]:
    """Return ``(loss, mean entropy)`` with loss = -mean(A * log pi) - c * entropy."""
    if isinstance(policy, GaussianPolicy):
        actions = policy.interior(actions)
    logp = policy.log_prob(states, actions)
    entropy = tmean(policy.entropy(states))
    loss = -tmean(logp * Tensor(advantages)) - entropy_coef * entropy
    return loss, entropy


@skip_non_finite("policy update")
def policy_step(nets: AgentNets, states, actions, advantages, entropy_coef: float) -> tuple[float, float] | None:
    optimizer = nets.optimizers["policy"]
    optimizer.zero_grad()
    loss, entropy = policy_loss(nets.policy, states, actions, advantages, entropy_coef)
    loss.backward()
    if not optimizer.step():
        return None
    return loss.item(), entropy.item()


@skip_non_finite("critic update")
def critic_step(nets: AgentNets, states, targets: np.ndarray, critic_coef: float) -> float | None:
    optimizer = nets.optimizers["critic"]
    optimizer.zero_grad()
    loss = critic_coef * tmean(square(nets.critic.value(states) - Tensor(targets)))
    loss.backward()
    return loss.item() if optimizer.step() else None


@skip_non_finite("regression update")
def regression_step(net: StateActionNet, optimizer: Adam, states, actions, targets: np.ndarray) -> float | None:
    """One Adam step on the mean squared error of ``net(s, a)`` to ``targets``."""
    optimizer.zero_grad()
    loss = tmean(square(net.forward(states, actions) - Tensor(targets)))
    loss.backward()
    return loss.item() if optimizer.step() else None


def _flatten_steps(batch: SegmentBatch) -> tuple[np.ndarray, np.ndarray]:
    B, H = batch.rewards.shape
    states = batch.states[:, :H].reshape(B * H, -1)
    actions = batch.actions.reshape(B * H, -1)
    return states, actions


def a2c_update(
    batch: SegmentBatch,
    nets: AgentNets,
    cfg: AgentConfig,
    reward_batch: SegmentBatch | None = None,
) -> A2CLosses:
    """
    One actor-critic step on ``batch``.

    The reward model only ever sees ``reward_batch``, which callers fill with
    real transitions; synthetic segments never train it.
    """
    if len(batch) == 0:
        raise SegmentError("a2c_update needs a nonempty batch")

    advantages, targets = gae_batch(batch, nets.critic, cfg.gamma, cfg.lam)
    states, actions = _flatten_steps(batch)
    adv_flat = advantages.reshape(-1)

    losses = A2CLosses()
    result = policy_step(nets, states, actions, adv_flat, cfg.entropy_coef)
    if result is not None:
        losses.policy, losses.entropy = result
    losses.critic = critic_step(nets, states, targets.reshape(-1), cfg.critic_coef)
    losses.advantage = regression_step(nets.advantage, nets.optimizers["advantage"], states, actions, adv_flat)

    if reward_batch is not None and len(reward_batch):
        r_states, r_actions = _flatten_steps(reward_batch)
        losses.reward = regression_step(
            nets.reward, nets.optimizers["reward"], r_states, r_actions, reward_batch.rewards.reshape(-1)
        )

    logger.debug("a2c losses: %s", losses)
    return losses
