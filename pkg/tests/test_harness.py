import numpy as np
import pytest

from src.common.exceptions import ConfigError, RunAborted, SegmentError, ShapeError
from src.envs.continuous import PendulumLike, PointMass
from src.envs.transition import Transition
from src.harness import dyna
from src.harness.buffer import ReplayBuffer
from src.harness.checkpoint import load_run_checkpoint
from src.harness.config import load_config
from src.harness.dyna import collect_real, evaluate_policy, run_agd_mbrl
from src.harness.metrics import METRICS_HEADER, MetricsWriter, read_metrics
from src.models.dto.metrics import MetricsRow

TINY = {
    "budget.real_steps": 60,
    "budget.steps_per_iteration": 25,
    "segment.horizon": 3,
    "diffusion.n_steps": 5,
    "diffusion.hidden": [8],
    "diffusion.epochs": 1,
    "diffusion.batch_size": 8,
    "agent.hidden": [8],
    "agent.n_mc": 2,
    "guide.kind": "sag",
    "guide.n_mc": 2,
    "loop.model_segments": 8,
    "loop.synthetic_batch": 4,
    "loop.reward_batch": 4,
    "loop.eval_episodes": 1,
    "buffer.capacity": 1000,
}


class UniformPolicy:
    def __init__(self, low, high):
        self.low, self.high = low, high

    def sample(self, states, rng):
        return rng.uniform(self.low, self.high, size=(len(states), len(self.low)))

    def mean_action(self, states):
        return np.zeros((len(states), len(self.low)))


def _transition(episode, t, value=0.0, done=False):
    return Transition(
        state=np.array([value, float(t)]),
        action=np.array([0.1 * t]),
        reward=-float(t),
        next_state=np.array([value, float(t + 1)]),
        done=done,
        episode=episode,
        t=t,
    )


def _episode(episode, length):
    return [_transition(episode, t, float(episode), done=t == length - 1) for t in range(length)]


# ----------------------------------------------------------------------
# Configuration
# ----------------------------------------------------------------------

def test_dotted_keys_and_tables_load_the_same(tmp_path):
    dotted = tmp_path / "dotted.toml"
    dotted.write_text('guide.kind = "eag"\nguide.alpha = 0.2\nsegment.horizon = 5\n')
    tables = tmp_path / "tables.toml"
    tables.write_text('[guide]\nkind = "eag"\nalpha = 0.2\n\n[segment]\nhorizon = 5\n')
    a, b = load_config(dotted), load_config(tables)
    assert a.guide.kind.value == "eag"
    assert a.guide.alpha == 0.2
    assert a.segment.horizon == 5
    assert a.config_hash() == b.config_hash()


def test_overrides_win_over_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('guide.kind = "eag"\n')
    assert load_config(path, {"guide.kind": "none"}).guide.kind.value == "none"


def test_unknown_key_is_named():
    with pytest.raises(ConfigError) as info:
        load_config(None, {"guide.strength": 1.0})
    assert info.value.key == "guide.strength"
    assert "unknown key" in str(info.value)


def test_invalid_guide_kind_rejected():
    with pytest.raises(ConfigError) as info:
        load_config(None, {"guide.kind": "ucb"})
    assert info.value.key == "guide.kind"


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.toml")


def test_config_hash_is_stable_and_sensitive():
    assert load_config().config_hash() == load_config().config_hash()
    assert load_config().config_hash() != load_config(None, {"agent.gamma": 0.9}).config_hash()


# ----------------------------------------------------------------------
# Replay buffer
# ----------------------------------------------------------------------

def test_segments_never_cross_episodes():
    buffer = ReplayBuffer(100, 2, 1)
    buffer.extend(_episode(0, 2) + _episode(1, 5) + _episode(2, 2))
    starts = buffer.valid_starts(3)
    assert buffer.n_segments(3) == 3
    batch = buffer.segments_at(starts, 3)
    assert np.all(batch.states[:, :, 0] == 1.0)
    np.testing.assert_array_equal(batch.states[:, 0, 1], [0.0, 1.0, 2.0])


def test_segment_carries_bootstrap_state():
    buffer = ReplayBuffer(100, 2, 1)
    buffer.extend(_episode(0, 4))
    batch = buffer.segments_at(buffer.valid_starts(4), 4)
    assert batch.states.shape == (1, 5, 2)
    np.testing.assert_array_equal(batch.states[0, :, 1], [0.0, 1.0, 2.0, 3.0, 4.0])
    np.testing.assert_array_equal(batch.rewards[0], [0.0, -1.0, -2.0, -3.0])


def test_ring_overwrites_oldest():
    buffer = ReplayBuffer(4, 2, 1)
    buffer.extend(_episode(0, 6))
    assert len(buffer) == 4
    assert buffer.total_added == 6
    batch = buffer.segments_at(buffer.valid_starts(3), 3)
    np.testing.assert_array_equal(sorted(batch.states[:, 0, 1]), [2.0, 3.0])


def test_empty_buffer_sampling_raises(rng):
    buffer = ReplayBuffer(10, 2, 1)
    with pytest.raises(SegmentError):
        buffer.sample_segments(3, 4, rng)
    with pytest.raises(SegmentError):
        buffer.sample_states(4, rng)


def test_non_finite_transition_refused():
    buffer = ReplayBuffer(10, 2, 1)
    bad = _transition(0, 0)
    bad.reward = float("nan")
    with pytest.raises(ShapeError):
        buffer.add(bad)
    assert len(buffer) == 0


# ----------------------------------------------------------------------
# Real environment
# ----------------------------------------------------------------------

def test_collect_accounts_episodes_and_stats():
    env = PointMass()
    buffer = ReplayBuffer(1000, env.state_dim, env.action_dim)
    policy = UniformPolicy(env.action_low, env.action_high)
    finished = collect_real(env, policy, 250, buffer, np.random.default_rng(0))
    assert finished == 2
    assert len(buffer) == 250
    assert env.episode == 2 and env.t == 50
    np.testing.assert_allclose(buffer.stats.state_mean, buffer.states[:250].mean(axis=0))
    np.testing.assert_allclose(buffer.stats.reward_mean, buffer.rewards[:250].mean())


def test_collect_continues_the_current_episode():
    env = PointMass()
    buffer = ReplayBuffer(1000, env.state_dim, env.action_dim)
    policy = UniformPolicy(env.action_low, env.action_high)
    rng = np.random.default_rng(0)
    collect_real(env, policy, 30, buffer, rng)
    collect_real(env, policy, 30, buffer, rng)
    assert np.all(buffer.episodes[:60] == 0)
    assert buffer.n_segments(60) == 1


def test_collect_is_deterministic():
    def run():
        env = PendulumLike()
        buffer = ReplayBuffer(500, env.state_dim, env.action_dim)
        collect_real(env, UniformPolicy(env.action_low, env.action_high), 300, buffer, np.random.default_rng(5))
        return buffer.states[:300]

    np.testing.assert_array_equal(run(), run())


def test_zero_force_at_goal_scores_zero(rng):
    env = PointMass()
    result = evaluate_policy(env, UniformPolicy(env.action_low, env.action_high), 3, rng, start_state=np.zeros(4))
    assert result.mean == 0.0
    assert result.stderr == 0.0
    assert not result.single_episode
    assert result.returns == [0.0, 0.0, 0.0]


def test_single_episode_is_flagged(rng):
    env = PendulumLike()
    upright = np.array([1.0, 0.0, 0.0])
    result = evaluate_policy(env, UniformPolicy(env.action_low, env.action_high), 1, rng, start_state=upright)
    assert result.single_episode
    assert result.mean == 0.0


# ----------------------------------------------------------------------
# Metrics
# ----------------------------------------------------------------------

def test_metrics_writer_round_trip(tmp_path):
    writer = MetricsWriter(tmp_path / "metrics.csv")
    writer.write(MetricsRow(iteration=1, real_steps=10, diffusion_loss=0.25, eval_single_episode=True))
    rows = read_metrics(tmp_path / "metrics.csv")
    assert tuple(rows[0]) == METRICS_HEADER
    assert rows[0]["diffusion_loss"] == "0.25"
    assert rows[0]["eval_single_episode"] == "1"
    assert rows[0]["policy_loss"] == ""


# ----------------------------------------------------------------------
# Dyna loop
# ----------------------------------------------------------------------

def test_zero_budget_writes_header_and_initial_checkpoint(tmp_path):
    cfg = load_config(None, {**TINY, "budget.real_steps": 0})
    result = run_agd_mbrl(cfg, tmp_path, seed=0)
    assert result.rows == []
    assert result.metrics.read_text() == ",".join(METRICS_HEADER) + "\n"
    models = load_run_checkpoint(result.checkpoint)
    assert models.iteration == 0 and models.real_steps == 0


def test_tiny_run_spends_exact_budget(tmp_path):
    cfg = load_config(None, TINY)
    result = run_agd_mbrl(cfg, tmp_path, seed=0)
    assert [row.real_steps for row in result.rows] == [25, 50, 60]
    rows = read_metrics(result.metrics)
    assert len(rows) == 3
    assert all(row["eval_single_episode"] == "1" for row in rows)
    assert rows[-1]["diffusion_loss"] != ""
    assert "seconds" not in ",".join(rows[0])
    assert len(read_metrics(result.timing)) == 3


def test_same_seed_gives_identical_metrics(tmp_path):
    cfg = load_config(None, TINY)
    first = run_agd_mbrl(cfg, tmp_path / "a", seed=3)
    second = run_agd_mbrl(cfg, tmp_path / "b", seed=3)
    assert first.metrics.read_bytes() == second.metrics.read_bytes()


def test_checkpoint_restores_run(tmp_path):
    cfg = load_config(None, TINY)
    result = run_agd_mbrl(cfg, tmp_path, seed=1)
    models = load_run_checkpoint(result.checkpoint)
    assert models.iteration == 3
    assert models.real_steps == 60
    assert models.config.config_hash() == cfg.config_hash()
    saved, live = models.nets.state_dict(), result.models.nets.state_dict()
    assert saved.keys() == live.keys()
    for key in saved:
        np.testing.assert_array_equal(saved[key], live[key])
    np.testing.assert_array_equal(models.world.normalizer.state_mean, result.models.world.normalizer.state_mean)


def test_failure_points_at_last_checkpoint(tmp_path, monkeypatch):
    def broken(*args, **kwargs):
        raise FloatingPointError("boom")

    monkeypatch.setattr(dyna, "a2c_update", broken)
    with pytest.raises(RunAborted) as info:
        run_agd_mbrl(load_config(None, TINY), tmp_path, seed=0)
    assert info.value.checkpoint == str(tmp_path / "checkpoint.npz")
    assert load_run_checkpoint(info.value.checkpoint).iteration == 0
