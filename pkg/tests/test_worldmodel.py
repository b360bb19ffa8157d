import numpy as np
import pytest

from src.common.exceptions import NonFiniteError, SamplingError, ShapeError
from src.guidance.config import GuidanceConfig
from src.guidance.sampler import guided_sample
from src.numerics.optim import Adam
from src.worldmodel.config import DiffusionConfig
from src.worldmodel.diffusion import (
    DiffusionWorldModel,
    NoisePredictor,
    ancestral_sample,
    forward_noise,
    reverse_chain,
    reverse_mean,
    sample_with_retries,
    train_step,
)
from src.worldmodel.normalizer import Normalizer
from src.worldmodel.schedule import DiffusionSchedule
from src.worldmodel.segment import SegmentBatch, SegmentLayout


class OraclePredictor:
    """Returns a fixed noise array regardless of its input."""

    def __init__(self, layout, eps):
        self.layout = layout
        self.eps = eps

    def predict(self, x, cond, steps):
        return self.eps


def _batch(rng, B=8, H=3, ds=2, da=1):
    return SegmentBatch(
        states=rng.normal(size=(B, H + 1, ds)),
        actions=rng.normal(size=(B, H, da)),
        rewards=rng.normal(size=(B, H)),
        terminal=np.zeros(B, dtype=bool),
    )


# ----------------------------------------------------------------------
# Schedule
# ----------------------------------------------------------------------

def test_default_schedule_nearly_destroys_signal():
    schedule = DiffusionSchedule.linear(100)
    assert schedule.alpha_bar[-1] < 0.01
    assert np.all(np.diff(schedule.betas) > 0)
    assert schedule.alpha_bar[0] == 1.0


def test_thousand_step_schedule_keeps_quoted_endpoints():
    schedule = DiffusionSchedule.linear(1000, 1e-4, 0.02)
    assert schedule.betas[0] == pytest.approx(1e-4)
    assert schedule.betas[-1] == pytest.approx(0.02)


def test_posterior_variance_conventions():
    schedule = DiffusionSchedule.linear(20)
    var = schedule.posterior_variance
    assert var[1] == 0.0
    assert np.all(var[2:] > 0)
    assert np.all(var[1:] <= schedule.beta[1:] + 1e-15)
    assert schedule.guidance_variance[1] == var[2]


def test_non_increasing_betas_are_rejected():
    with pytest.raises(ShapeError):
        DiffusionSchedule(np.array([0.1, 0.1, 0.2]))


# ----------------------------------------------------------------------
# Layout and normalization
# ----------------------------------------------------------------------

def test_layout_flatten_orders_states_then_rewards(rng):
    layout = SegmentLayout(3, 2, 1)
    batch = _batch(rng)
    x, cond = layout.flatten(batch)
    assert x.shape == (8, layout.diffused_dim) == (8, 11)
    assert cond.shape == (8, 3)
    np.testing.assert_array_equal(x[:, layout.state_slice(2)], batch.states[:, 2])
    np.testing.assert_array_equal(x[:, layout.reward_slice], batch.rewards)
    back = layout.unflatten(x, cond)
    np.testing.assert_array_equal(back.states, batch.states)
    np.testing.assert_array_equal(back.actions, batch.actions)


def test_layout_rejects_mismatched_batch(rng):
    with pytest.raises(ShapeError):
        SegmentLayout(4, 2, 1).flatten(_batch(rng, H=3))


def test_normalizer_fit_matches_direct_moments(rng):
    states = rng.normal(3.0, 2.0, size=(500, 2))
    actions = rng.uniform(-1, 1, size=(500, 1))
    rewards = rng.normal(size=500)
    norm = Normalizer.fit(states, actions, rewards)
    np.testing.assert_allclose(norm.state_mean, states.mean(axis=0))
    np.testing.assert_allclose(norm.state_std, states.std(axis=0))
    np.testing.assert_allclose(norm.normalize_states(states).mean(axis=0), np.zeros(2), atol=1e-12)


def test_constant_feature_gets_std_floor():
    norm = Normalizer.fit(np.ones((10, 2)), np.zeros((10, 1)), np.zeros(10))
    assert np.all(norm.state_std > 0)
    assert np.all(np.isfinite(norm.normalize_states(np.ones((1, 2)))))


# ----------------------------------------------------------------------
# Forward and reverse process
# ----------------------------------------------------------------------

def test_forward_noise_step_zero_is_identity(rng):
    schedule = DiffusionSchedule.linear(10)
    x0 = rng.normal(size=(4, 5))
    np.testing.assert_array_equal(forward_noise(x0, 0, rng.normal(size=(4, 5)), schedule), x0)


def test_forward_noise_moments(rng):
    schedule = DiffusionSchedule.linear(50)
    x0 = np.full((200_000, 1), 2.0)
    xi = forward_noise(x0, 10, rng.standard_normal(x0.shape), schedule)
    ab = schedule.alpha_bar[10]
    assert xi.mean() == pytest.approx(np.sqrt(ab) * 2.0, abs=0.01)
    assert xi.var() == pytest.approx(1.0 - ab, rel=0.02)


def test_perfect_predictor_recovers_data_at_step_one(rng):
    layout = SegmentLayout(2, 1, 1)
    schedule = DiffusionSchedule.linear(10)
    x0 = rng.normal(size=(5, layout.diffused_dim))
    eps = rng.normal(size=x0.shape)
    x1 = forward_noise(x0, 1, eps, schedule)
    mean = reverse_mean(OraclePredictor(layout, eps), x1, np.zeros((5, 2)), 1, schedule)
    np.testing.assert_allclose(mean, x0, atol=1e-12)


def test_train_step_reduces_loss_on_fixed_noise(rng):
    layout = SegmentLayout(2, 1, 1)
    schedule = DiffusionSchedule.linear(20)
    predictor = NoisePredictor(layout, (32,), rng, embedding_dim=8)
    optimizer = Adam(predictor.parameters(), lr=1e-2)
    batch = _batch(rng, B=16, H=2, ds=1)
    steps = rng.integers(1, 21, size=16)
    noise = rng.standard_normal((16, layout.diffused_dim))
    first = train_step(batch, predictor, schedule, optimizer, rng, steps=steps, noise=noise)
    for _ in range(150):
        last = train_step(batch, predictor, schedule, optimizer, rng, steps=steps, noise=noise)
    assert last < 0.5 * first


def test_zero_shift_guide_changes_nothing(rng):
    layout = SegmentLayout(2, 2, 1)
    schedule = DiffusionSchedule.linear(10)
    predictor = NoisePredictor(layout, (16,), rng)
    predictor.net.layers[-1].weight.data = rng.normal(scale=0.1, size=predictor.net.layers[-1].weight.shape)
    starts = rng.normal(size=(6, 2))

    def zero_guide(mean, cond, i, guide_rng):
        guide_rng.standard_normal(3)
        return np.zeros_like(mean), None

    plain = reverse_chain(predictor, schedule, 6, np.random.default_rng(5), start_states=starts)
    guided = reverse_chain(predictor, schedule, 6, np.random.default_rng(5), start_states=starts, guide=zero_guide)
    np.testing.assert_array_equal(plain[0], guided[0])
    np.testing.assert_array_equal(plain[1], guided[1])


def test_unguided_sampler_matches_ancestral_bitwise(rng):
    layout = SegmentLayout(3, 2, 1)
    schedule = DiffusionSchedule.linear(15)
    predictor = NoisePredictor(layout, (16,), rng)
    predictor.net.layers[-1].weight.data = rng.normal(scale=0.1, size=predictor.net.layers[-1].weight.shape)
    normalizer = Normalizer.fit(rng.normal(size=(50, 2)), rng.normal(size=(50, 1)), rng.normal(size=50))
    starts = rng.normal(size=(7, 2))

    ancestral = ancestral_sample(predictor, schedule, 7, np.random.default_rng(11), normalizer=normalizer, start_states=starts)
    guided = guided_sample(predictor, schedule, GuidanceConfig(kind="none"), starts, np.random.default_rng(11), normalizer=normalizer)
    assert ancestral.states.tobytes() == guided.batch.states.tobytes()
    assert ancestral.actions.tobytes() == guided.batch.actions.tobytes()
    assert ancestral.rewards.tobytes() == guided.batch.rewards.tobytes()


def test_start_states_are_inpainted_exactly(rng):
    layout = SegmentLayout(2, 3, 1)
    predictor = NoisePredictor(layout, (8,), rng)
    starts = rng.normal(size=(4, 3))
    normalizer = Normalizer.fit(rng.normal(size=(20, 3)), rng.normal(size=(20, 1)), rng.normal(size=20))
    batch = ancestral_sample(predictor, DiffusionSchedule.linear(8), 4, rng, normalizer=normalizer, start_states=starts)
    np.testing.assert_array_equal(batch.states[:, 0], starts)


def test_same_seed_same_samples(rng):
    layout = SegmentLayout(2, 1, 1)
    predictor = NoisePredictor(layout, (8,), rng)
    schedule = DiffusionSchedule.linear(8)
    a = ancestral_sample(predictor, schedule, 5, np.random.default_rng(3))
    b = ancestral_sample(predictor, schedule, 5, np.random.default_rng(3))
    np.testing.assert_array_equal(a.states, b.states)


# ----------------------------------------------------------------------
# Retries
# ----------------------------------------------------------------------

def test_non_finite_rows_are_redrawn():
    layout = SegmentLayout(1, 1, 1)
    calls = []

    def draw(rows, attempt_rng):
        calls.append(rows.copy())
        x = np.ones((rows.size, layout.diffused_dim))
        if len(calls) == 1:
            x[0] = np.nan
        return x, np.zeros((rows.size, layout.condition_dim))

    x, cond = sample_with_retries(draw, 3, layout, np.random.default_rng(0), max_retries=2)
    assert np.all(np.isfinite(x))
    np.testing.assert_array_equal(calls[1], [0])


def test_non_finite_error_aborts_attempt_then_retries():
    layout = SegmentLayout(1, 1, 1)
    attempts = []

    def draw(rows, attempt_rng):
        attempts.append(1)
        if len(attempts) == 1:
            raise NonFiniteError("overflow")
        return np.zeros((rows.size, layout.diffused_dim)), np.zeros((rows.size, layout.condition_dim))

    x, _ = sample_with_retries(draw, 2, layout, np.random.default_rng(0), max_retries=1)
    assert len(attempts) == 2
    assert x.shape == (2, layout.diffused_dim)


def test_exhausted_retries_raise():
    layout = SegmentLayout(1, 1, 1)

    def draw(rows, attempt_rng):
        return np.full((rows.size, layout.diffused_dim), np.inf), np.zeros((rows.size, layout.condition_dim))

    with pytest.raises(SamplingError):
        sample_with_retries(draw, 2, layout, np.random.default_rng(0), max_retries=2)


# ----------------------------------------------------------------------
# World model bundle
# ----------------------------------------------------------------------

def test_world_model_arrays_reload(rng):
    layout = SegmentLayout(2, 2, 1)
    cfg = DiffusionConfig(n_steps=10, hidden=(8,), epochs=1, batch_size=4)
    model = DiffusionWorldModel.build(layout, cfg, rng)
    model.normalizer = Normalizer.fit(rng.normal(size=(20, 2)), rng.normal(size=(20, 1)), rng.normal(size=20))
    losses = model.fit(_batch(rng, B=8, H=2, ds=2), cfg, rng)
    assert len(losses) == 2

    other = DiffusionWorldModel.build(layout, cfg, np.random.default_rng(42))
    other.load_arrays(model.to_arrays())
    a = model.sample(3, np.random.default_rng(1))
    b = other.sample(3, np.random.default_rng(1))
    np.testing.assert_array_equal(a.states, b.states)


@pytest.mark.slow
def test_two_mode_dataset_is_recovered():
    rng = np.random.default_rng(0)
    layout = SegmentLayout(1, 1, 1)
    n = 4000
    upper = rng.random(n) < 0.3
    centers = np.where(upper, 1.0, -1.0)[:, None]
    values = centers + 0.05 * rng.standard_normal((n, layout.diffused_dim))
    data = SegmentBatch(
        states=values[:, :2].reshape(n, 2, 1),
        actions=np.zeros((n, 1, 1)),
        rewards=values[:, 2:],
        terminal=np.zeros(n, dtype=bool),
    )
    schedule = DiffusionSchedule.linear(50)
    predictor = NoisePredictor(layout, (64, 64), rng, embedding_dim=16)
    optimizer = Adam(predictor.parameters(), lr=2e-3)
    for _ in range(4000):
        train_step(data.select(rng.integers(0, n, size=128)), predictor, schedule, optimizer, rng)

    samples = ancestral_sample(predictor, schedule, 4000, rng, actions=np.zeros((4000, 1, 1)))
    x, _ = layout.flatten(samples)
    is_upper = x.mean(axis=1) > 0
    assert abs(is_upper.mean() - 0.3) < 0.1
    np.testing.assert_allclose(x[is_upper].mean(axis=0), np.ones(3), atol=0.05)
    np.testing.assert_allclose(x[~is_upper].mean(axis=0), -np.ones(3), atol=0.05)
