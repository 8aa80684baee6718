import numpy as np
import pytest

from erpbvi.envs import (
    EAST,
    NORTH,
    CrosswalkParams,
    GridWorldParams,
    TigerParams,
    build,
    build_crosswalk,
    build_gridworld,
    build_tiger,
    crosswalk_car_kernel,
)
from erpbvi.errors import ConfigError


def test_tiger_tables():
    m = build_tiger(TigerParams(p_correct=0.7))
    assert (m.n_states, m.n_actions, m.n_observations) == (2, 3, 2)
    np.testing.assert_allclose(m.observation[0], [[0.7, 0.3], [0.3, 0.7]])
    np.testing.assert_allclose(m.reward, [[-1, -100, 10], [-1, 10, -100]])
    np.testing.assert_allclose(m.transition[:, 1, :], 0.5)
    assert m.discount == 0.95


def test_tiger_episodic_variant():
    m = build_tiger(TigerParams(reset_on_open=False))
    assert m.n_states == 3 and m.terminal_states == {2}
    assert m.transition[0, 1, 2] == 1.0
    np.testing.assert_allclose(m.initial_belief, [0.5, 0.5, 0.0])


def test_tiger_rejects_bad_probability():
    with pytest.raises(ConfigError):
        TigerParams(p_correct=1.5)


def test_gridworld_moves_and_slip():
    p = GridWorldParams(p_slip=0.3)
    m = build_gridworld(p)
    s = p.state_index((0, 0))
    assert m.transition[s, EAST, p.state_index((1, 0))] == pytest.approx(0.7)
    assert m.transition[s, EAST, s] == pytest.approx(0.3)
    # bumping into the wall is a self-loop regardless of slip
    assert m.transition[s, 1, s] == 1.0
    assert m.n_states == 37 and m.initial_belief[s] == 1.0


def test_gridworld_goal_and_failure_cells():
    p = GridWorldParams()
    m = build_gridworld(p)
    g = p.state_index((5, 0))
    f = p.state_index((3, 2))
    assert m.reward[g].tolist() == [1.0] * 4
    assert m.reward[f].tolist() == [-1.0] * 4
    assert m.transition[g, NORTH, p.terminal_index] == 1.0
    assert m.observation[0, g].argmax() == 1 and m.observation[0, f].argmax() == 2
    assert m.observation[0, p.state_index((1, 1))].argmax() == 0


def test_gridworld_inference_layouts():
    right = build("gridworld", goal_variant="right", include_failures=False)
    top = build("gridworld", goal_variant="top", include_failures=False)
    assert right.reward.max() == top.reward.max() == 1.0
    assert right.reward.min() == 0.0
    with pytest.raises(ConfigError):
        build("gridworld", goal_variant="nowhere")
    with pytest.raises(ConfigError):
        build("gridworld", goal_cells=[(0, 0)])


def test_crosswalk_sizes_and_kernel():
    p = CrosswalkParams()
    m = build_crosswalk(p)
    assert m.n_states == 10 * 11 * 3 + 1
    assert m.n_observations == 10 * 11
    K = crosswalk_car_kernel(p)
    np.testing.assert_allclose(K.sum(axis=1), 1.0)
    assert K[5, 5] == 0.8 and K[5, 4] == 0.1
    assert K[0, 0] == pytest.approx(0.8 / 0.9)
    np.testing.assert_allclose(m.initial_belief[[p.state_index(0, 0, v) for v in range(3)]], 1 / 3)


def test_crosswalk_collision_and_crossing():
    p = CrosswalkParams()
    m = build_crosswalk(p)
    term = m.n_states - 1
    hit = p.state_index(5, 8, 1)
    assert m.reward[hit, 0] == -100.0 and m.transition[hit, 0, term] == 1.0
    done = p.state_index(9, 2, 0)
    assert m.reward[done, 2] == 10.0
    # car in the zone while the pedestrian is still on the curb is harmless
    safe = p.state_index(2, 8, 1)
    assert m.reward[safe, 0] == 0.0
    unsafe = build("crosswalk", collision_penalty=0.0)
    assert unsafe.reward[hit, 0] == 0.0


def test_crosswalk_braking():
    p = CrosswalkParams()
    m = build_crosswalk(p)
    s = p.state_index(0, 0, 1)
    row = m.transition[s, 0]
    assert row[p.state_index(1, 0, 0)] == pytest.approx(0.5)
    assert row[p.state_index(1, 2, 2)] == pytest.approx(0.5)
    s = p.state_index(5, 0, 2)
    row = m.transition[s, 2]
    assert row[p.state_index(5, 1, 1)] == pytest.approx(0.9)


def test_build_rejects_unknown():
    with pytest.raises(ConfigError):
        build("maze")
    with pytest.raises(ConfigError):
        build("tiger", colour="red")
