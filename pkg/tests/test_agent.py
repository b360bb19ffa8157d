import numpy as np
import pytest
from scipy import stats

from src.agent.a2c import AgentNets, a2c_update, policy_loss, regression_step
from src.agent.centering import center_advantage
from src.agent.config import AgentConfig
from src.agent.critics import AdvantageNet, ValueCritic, input_gradients
from src.agent.gae import compute_gae, gae_advantages, gae_batch
from src.agent.policies import CategoricalPolicy, GaussianPolicy
from src.common.exceptions import SegmentError
from src.numerics.optim import Adam
from src.worldmodel.segment import SegmentBatch, TrajectorySegment
from tests.helpers import assert_gradients_close, numeric_gradient


class TableCritic:
    """V(s) = sum of the state coordinates."""

    def predict(self, states):
        return np.atleast_2d(states).sum(axis=1)


class TableQ:
    def __init__(self, table):
        self.table = np.asarray(table)

    def predict(self, states, actions):
        s = np.argmax(states, axis=1)
        a = np.asarray(actions).reshape(-1).astype(int)
        return self.table[s, a]


# ----------------------------------------------------------------------
# GAE
# ----------------------------------------------------------------------

def test_gae_with_lambda_one_is_return_minus_value():
    rewards = np.array([1.0, 2.0, 3.0])
    values = np.array([0.5, -0.5, 1.0])
    gamma = 0.9
    adv, targets = compute_gae(rewards, values, bootstrap=2.0, gamma=gamma, lam=1.0)
    returns = np.array(
        [
            1 + gamma * 2 + gamma**2 * 3 + gamma**3 * 2.0,
            2 + gamma * 3 + gamma**2 * 2.0,
            3 + gamma * 2.0,
        ]
    )
    np.testing.assert_allclose(adv, returns - values)
    np.testing.assert_allclose(targets, returns)


def test_gae_with_lambda_zero_is_td_residual():
    rewards = np.array([1.0, -1.0])
    values = np.array([0.2, 0.4])
    adv, _ = compute_gae(rewards, values, bootstrap=1.0, gamma=0.5, lam=0.0)
    np.testing.assert_allclose(adv, [1.0 + 0.5 * 0.4 - 0.2, -1.0 + 0.5 * 1.0 - 0.4])


def test_terminal_segment_ignores_bootstrap():
    a, _ = compute_gae(np.ones(2), np.zeros(2), bootstrap=100.0, gamma=1.0, lam=1.0, terminal=True)
    np.testing.assert_allclose(a, [2.0, 1.0])


def test_batched_gae_matches_per_segment(rng):
    B, H, ds = 5, 4, 2
    batch = SegmentBatch(
        states=rng.normal(size=(B, H + 1, ds)),
        actions=rng.normal(size=(B, H, 1)),
        rewards=rng.normal(size=(B, H)),
        terminal=np.array([False, True, False, False, True]),
    )
    adv, targets = gae_batch(batch, TableCritic(), 0.97, 0.9)
    for k in range(B):
        a_k, t_k = gae_advantages(batch[k], TableCritic(), 0.97, 0.9)
        np.testing.assert_allclose(adv[k], a_k)
        np.testing.assert_allclose(targets[k], t_k)


def test_segment_without_bootstrap_state_is_rejected():
    segment = TrajectorySegment(states=np.zeros((3, 2)), actions=np.zeros((3, 1)), rewards=np.zeros(3))
    with pytest.raises(SegmentError):
        gae_advantages(segment, TableCritic(), 0.99, 0.95)


# ----------------------------------------------------------------------
# Policies
# ----------------------------------------------------------------------

def test_unsquashed_gaussian_log_prob_matches_scipy(rng):
    policy = GaussianPolicy(3, 2, [-1, -1], [1, 1], (8,), rng, squash=False, init_log_std=-0.3)
    states = rng.normal(size=(6, 3))
    actions = rng.uniform(-1, 1, size=(6, 2))
    mean = policy.net.predict(states)
    expected = stats.norm.logpdf(actions, loc=mean, scale=np.exp(-0.3)).sum(axis=1)
    np.testing.assert_allclose(policy.log_prob(states, actions).data, expected)


def test_squashed_gaussian_log_prob_has_change_of_variables(rng):
    policy = GaussianPolicy(2, 1, [-2.0], [2.0], (4,), rng, squash=True)
    states = rng.normal(size=(5, 2))
    actions = rng.uniform(-1.9, 1.9, size=(5, 1))
    u = np.arctanh(actions / 2.0)
    mean = policy.net.predict(states)
    expected = stats.norm.logpdf(u, loc=mean, scale=policy.std()) - np.log(2.0 * (1.0 - (actions / 2.0) ** 2))
    np.testing.assert_allclose(policy.log_prob(states, actions).data, expected.reshape(-1))


def test_gaussian_entropy_matches_scipy(rng):
    policy = GaussianPolicy(2, 3, -np.ones(3), np.ones(3), (4,), rng, init_log_std=0.2)
    expected = stats.norm(scale=np.exp(0.2)).entropy() * 3
    np.testing.assert_allclose(policy.entropy(np.zeros((4, 2))).data, np.full(4, expected))


def test_gaussian_samples_stay_in_bounds(rng):
    policy = GaussianPolicy(2, 2, [-0.5, 0.0], [0.5, 3.0], (4,), rng, init_log_std=1.0)
    actions = policy.sample(rng.normal(size=(1000, 2)), rng)
    assert np.all(actions >= [-0.5, 0.0]) and np.all(actions <= [0.5, 3.0])


def test_policy_loss_gradient_matches_finite_differences(rng):
    policy = GaussianPolicy(2, 1, [-1.0], [1.0], (5,), rng)
    states = rng.normal(size=(8, 2))
    actions = policy.sample(states, rng)
    advantages = rng.normal(size=8)
    loss, _ = policy_loss(policy, states, actions, advantages, 0.01)
    loss.backward()
    param = policy.net.layers[0].weight
    analytic = param.grad.copy()
    original = param.data.copy()

    def f(v):
        param.data = v
        return float(policy_loss(policy, states, actions, advantages, 0.01)[0].data)

    numeric = numeric_gradient(f, original)
    param.data = original
    assert_gradients_close(analytic, numeric)


def test_categorical_probabilities_normalize(rng):
    policy = CategoricalPolicy(3, 4, (6,), rng)
    policy.net.layers[-1].weight.data = rng.normal(size=policy.net.layers[-1].weight.shape)
    probs = policy.probs(rng.normal(size=(5, 3)))
    np.testing.assert_allclose(probs.sum(axis=1), np.ones(5))


def test_policy_gradient_prefers_the_better_arm(rng):
    policy = CategoricalPolicy(1, 2, (), rng)
    opt = Adam(policy.parameters(), lr=0.1)
    states = np.ones((2, 1))
    actions = np.array([[0.0], [1.0]])
    advantages = np.array([-1.0, 1.0])
    for _ in range(50):
        opt.zero_grad()
        loss, _ = policy_loss(policy, states, actions, advantages, 0.0)
        loss.backward()
        opt.step()
    assert policy.probs(np.ones((1, 1)))[0, 1] > 0.9


# ----------------------------------------------------------------------
# Critics and centering
# ----------------------------------------------------------------------

def test_input_gradients_match_finite_differences(rng):
    net = AdvantageNet(3, 2, (8,), rng)
    for _ in range(10):
        s = rng.normal(size=(1, 3))
        a = rng.normal(size=(1, 2))
        values, ds, da = input_gradients(net, s, a)
        assert_gradients_close(ds, numeric_gradient(lambda v: float(net.predict(v, a)[0]), s))
        assert_gradients_close(da, numeric_gradient(lambda v: float(net.predict(s, v)[0]), a))
        assert values[0] == pytest.approx(net.predict(s, a)[0])
    assert all(p.grad is None for p in net.parameters())


def test_value_critic_predict_shape(rng):
    critic = ValueCritic(4, (8,), rng)
    assert critic.predict(rng.normal(size=(7, 4))).shape == (7,)


def test_categorical_centering_is_exact():
    pi = np.array([[0.2, 0.8], [0.5, 0.5], [0.9, 0.1]])
    Q = np.array([[1.0, 3.0], [-2.0, 2.0], [0.0, 10.0]])
    policy = CategoricalPolicy(3, 2, (), np.random.default_rng(0))
    policy.net.layers[0].weight.data = np.log(pi)
    policy.net.layers[0].bias.data = np.zeros(2)
    states = np.eye(3)

    centered = center_advantage(TableQ(Q), states, policy, n_mc=1)
    V = (pi * Q).sum(axis=1)
    np.testing.assert_allclose(centered.baseline, V)
    np.testing.assert_allclose(centered(np.ones((3, 1))), Q[:, 1] - V)
    per_action = np.stack([centered(a) for a in centered.actions])
    np.testing.assert_allclose((centered.weights * per_action).sum(axis=0), np.zeros(3), atol=1e-12)


def test_deterministic_centering_uses_mean_action(rng):
    policy = GaussianPolicy(2, 1, [-1.0], [1.0], (4,), rng)
    net = AdvantageNet(2, 1, (4,), rng)
    states = rng.normal(size=(3, 2))
    centered = center_advantage(net, states, policy, n_mc=4, deterministic=True)
    np.testing.assert_allclose(centered(policy.mean_action(states)), np.zeros(3), atol=1e-12)


# ----------------------------------------------------------------------
# Actor-critic update
# ----------------------------------------------------------------------

def _random_batch(rng, B=6, H=4, ds=4, da=2):
    return SegmentBatch(
        states=rng.normal(size=(B, H + 1, ds)),
        actions=rng.uniform(-0.9, 0.9, size=(B, H, da)),
        rewards=rng.normal(size=(B, H)),
        terminal=np.zeros(B, dtype=bool),
    )


def _nets(rng, **overrides):
    return AgentNets.build(4, 2, AgentConfig(hidden=(8,), **overrides), rng, action_low=-np.ones(2), action_high=np.ones(2))


def test_a2c_update_steps_every_network(rng):
    nets = _nets(rng)
    before = nets.state_dict()
    losses = a2c_update(_random_batch(rng), nets, AgentConfig(hidden=(8,)), reward_batch=_random_batch(rng))
    for value in (losses.policy, losses.critic, losses.advantage, losses.reward, losses.entropy):
        assert value is not None and np.isfinite(value)
    after = nets.state_dict()
    for prefix in ("policy.", "critic.", "advantage.", "reward."):
        assert any(not np.array_equal(before[k], after[k]) for k in before if k.startswith(prefix))


def test_reward_model_untouched_without_real_batch(rng):
    nets = _nets(rng)
    before = {k: v for k, v in nets.state_dict().items() if k.startswith("reward.")}
    losses = a2c_update(_random_batch(rng), nets, AgentConfig(hidden=(8,)))
    assert losses.reward is None
    for k, v in before.items():
        np.testing.assert_array_equal(nets.state_dict()[k], v)


def test_regression_reduces_error(rng):
    nets = _nets(rng, reward_lr=1e-2)
    states = rng.normal(size=(32, 4))
    actions = rng.uniform(-1, 1, size=(32, 2))
    targets = states[:, 0] - actions[:, 1]
    first = regression_step(nets.reward, nets.optimizers["reward"], states, actions, targets)
    for _ in range(300):
        last = regression_step(nets.reward, nets.optimizers["reward"], states, actions, targets)
    assert last < 0.5 * first


def test_agent_state_round_trips_between_instances(rng):
    source, target = _nets(rng), _nets(np.random.default_rng(99))
    target.load_state_dict(source.state_dict())
    states = rng.normal(size=(3, 4))
    np.testing.assert_array_equal(source.policy.mean_action(states), target.policy.mean_action(states))
    np.testing.assert_array_equal(source.critic.predict(states), target.critic.predict(states))
