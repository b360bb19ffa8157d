import numpy as np
import pytest
from scipy import stats

from src.common.exceptions import AppException, InvalidMDPError
from src.envs.continuous import PendulumLike, PointMass, make_continuous_env
from src.envs.tabular import TabularEnv, TabularMDP, build_motivating_mdp, random_tabular_mdp


def test_motivating_mdp_structure(motivating_mdp):
    assert motivating_mdp.n_states == 9
    assert motivating_mdp.n_actions == 2
    assert motivating_mdp.gamma == 1.0
    assert motivating_mdp.P[0, 0, 1] == 1.0
    assert motivating_mdp.P[0, 1, 5] == 1.0
    assert motivating_mdp.R[1, 0] == -4.0
    assert motivating_mdp.R[7, 1] == 10.0
    assert list(np.flatnonzero(motivating_mdp.terminal)) == [4, 8]


def test_rows_that_do_not_sum_to_one_are_rejected():
    mdp = random_tabular_mdp(0)
    P = mdp.P.copy()
    P[0, 0] *= 1.01
    with pytest.raises(InvalidMDPError):
        TabularMDP(P=P, R=mdp.R, gamma=mdp.gamma, rho=mdp.rho, terminal=mdp.terminal)


def test_gamma_outside_unit_interval_is_rejected():
    mdp = random_tabular_mdp(1)
    with pytest.raises(InvalidMDPError):
        TabularMDP(P=mdp.P, R=mdp.R, gamma=1.5, rho=mdp.rho, terminal=mdp.terminal)


def test_terminal_state_must_self_loop():
    mdp = build_motivating_mdp()
    terminal = mdp.terminal.copy()
    terminal[3] = True
    with pytest.raises(InvalidMDPError):
        TabularMDP(P=mdp.P, R=mdp.R, gamma=1.0, rho=mdp.rho, terminal=terminal)


def test_saved_mdp_reloads_equal(tmp_path, motivating_mdp):
    path = tmp_path / "mdp.json"
    motivating_mdp.save(path)
    loaded = TabularMDP.load(path)
    np.testing.assert_array_equal(loaded.P, motivating_mdp.P)
    np.testing.assert_array_equal(loaded.R, motivating_mdp.R)
    assert loaded.state_names == motivating_mdp.state_names


def test_serialized_mdp_missing_field():
    with pytest.raises(InvalidMDPError):
        TabularMDP.from_dict({"P": [[[1.0]]]})


def test_tabular_step_frequencies_match_transition_row(rng):
    mdp = random_tabular_mdp(7, n_states=4, n_actions=2)
    counts = np.zeros(mdp.n_states)
    n = 20_000
    for _ in range(n):
        nxt, _, _ = mdp.step(1, 0, rng)
        counts[nxt] += 1
    result = stats.chisquare(counts, n * mdp.P[1, 0])
    assert result.pvalue > 1e-3


def test_tabular_env_stops_at_terminal(motivating_mdp, rng):
    env = TabularEnv(motivating_mdp)
    env.reset(rng)
    transitions = [env.step(1, rng) for _ in range(4)]
    assert [t.done for t in transitions] == [False, False, False, True]
    assert transitions[-1].terminal
    assert [t.reward for t in transitions] == [-5.0, -5.0, -5.0, 10.0]
    assert [t.t for t in transitions] == [0, 1, 2, 3]


def test_tabular_env_time_limit(rng):
    env = TabularEnv(random_tabular_mdp(3), max_steps=5)
    env.reset(rng)
    dones = [env.step(0, rng).done for _ in range(5)]
    assert dones == [False] * 4 + [True]


def test_point_mass_euler_step(rng):
    env = PointMass()
    env.reset(rng, state=np.array([0.5, -0.5, 1.0, 0.0]))
    transition = env.step(np.array([1.0, -1.0]))
    np.testing.assert_allclose(transition.next_state, [0.5 + 0.05, -0.5, 1.0 + 0.05, -0.05])
    assert transition.reward == pytest.approx(-(0.25 + 0.25) - 0.01 * 2.0)


def test_actions_are_clipped_to_bounds(rng):
    env = PendulumLike()
    env.reset(rng)
    transition = env.step(np.array([100.0]))
    assert transition.action[0] == 2.0


def test_point_mass_episode_length(rng):
    env = PointMass()
    env.reset(rng)
    transitions = [env.step(np.zeros(2)) for _ in range(env.max_steps)]
    assert transitions[-1].done
    assert not any(t.done for t in transitions[:-1])


def test_pendulum_state_stays_on_circle(rng):
    env = PendulumLike()
    state = env.reset(rng)
    for _ in range(50):
        state = env.step(rng.uniform(-2, 2, size=1)).next_state
    assert state[0] ** 2 + state[1] ** 2 == pytest.approx(1.0)
    assert abs(state[2]) <= env.max_speed


def test_unknown_env_name():
    with pytest.raises(AppException):
        make_continuous_env("cartpole")
