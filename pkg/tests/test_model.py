import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import random_pomdp
from erpbvi.envs import build_tiger
from erpbvi.errors import DimensionMismatch, ValidationError, ZeroLikelihood
from erpbvi.model import (
    TabularPomdp,
    belief_update,
    check_belief,
    observation_marginals,
    one_hot,
    sample_transition,
    uniform_belief,
)


def enumerate_posterior(model, b, a, o):
    """Bayes by brute force over (s, s') pairs."""
    joint = np.zeros(model.n_states)
    for s, s2 in itertools.product(range(model.n_states), repeat=2):
        joint[s2] += b[s] * model.transition[s, a, s2] * model.observation[a, s2, o]
    return joint / joint.sum()


def test_belief_update_matches_enumeration(rng):
    for _ in range(100):
        S, A, O = rng.integers(1, 6, size=3)
        m = random_pomdp(rng, S, A, O)
        b = rng.dirichlet(np.ones(S))
        a, o = rng.integers(A), rng.integers(O)
        np.testing.assert_allclose(belief_update(m, b, a, o), enumerate_posterior(m, b, a, o), atol=1e-10)


def test_tiger_listen_update():
    m = build_tiger()
    b = belief_update(m, uniform_belief(2), 0, 0)
    np.testing.assert_allclose(b, [0.85, 0.15])
    b = belief_update(m, b, 0, 0)
    assert b[0] == pytest.approx(0.85**2 / (0.85**2 + 0.15**2))


def test_zero_likelihood():
    T = np.ones((2, 1, 2)) * 0.5
    Z = np.array([[[1.0, 0.0], [1.0, 0.0]]])
    m = TabularPomdp(T, Z, np.zeros((2, 1)), 0.9)
    with pytest.raises(ZeroLikelihood):
        belief_update(m, uniform_belief(2), 0, 1)


def test_out_of_range_indices():
    m = build_tiger()
    with pytest.raises(IndexError):
        belief_update(m, uniform_belief(2), 3, 0)
    with pytest.raises(IndexError):
        belief_update(m, uniform_belief(2), 0, 2)


def test_validation_errors():
    T = np.ones((2, 1, 2)) * 0.5
    Z = np.ones((1, 2, 1))
    R = np.zeros((2, 1))
    with pytest.raises(ValidationError):
        TabularPomdp(T * 0.9, Z, R, 0.9)
    with pytest.raises(ValidationError):
        TabularPomdp(T, Z, R, 1.0)
    with pytest.raises(ValidationError):
        TabularPomdp(T, Z, np.zeros((3, 1)), 0.9)
    with pytest.raises(ValidationError):
        TabularPomdp(T, Z, R, 0.9, initial_belief=[0.7, 0.7])
    # terminal state must self-loop
    with pytest.raises(ValidationError):
        TabularPomdp(T, Z, R, 0.9, terminal_states={1})


def test_terminal_needs_zero_reward():
    T = np.zeros((2, 1, 2))
    T[:, 0, 1] = 1.0
    Z = np.ones((1, 2, 1))
    TabularPomdp(T, Z, np.zeros((2, 1)), 0.9, terminal_states={1})
    with pytest.raises(ValidationError):
        TabularPomdp(T, Z, np.ones((2, 1)), 0.9, terminal_states={1})


def test_arrays_are_read_only():
    m = build_tiger()
    with pytest.raises(ValueError):
        m.transition[0, 0, 0] = 0.3


def test_fingerprint_tracks_tables():
    m = build_tiger()
    assert m.fingerprint == build_tiger().fingerprint
    R = m.reward.copy()
    R[0, 0] = -2.0
    assert m.replace(reward=R).fingerprint != m.fingerprint


def test_check_belief():
    with pytest.raises(DimensionMismatch):
        check_belief([1.0], 2)
    with pytest.raises(ValidationError):
        check_belief([0.5, 0.6], 2)
    np.testing.assert_array_equal(check_belief(one_hot(3, 1), 3), [0, 1, 0])


def test_sample_transition_frequencies(rng):
    m = build_tiger()
    draws = [sample_transition(m, 0, 0, rng)[1] for _ in range(4000)]
    assert abs(np.mean(np.array(draws) == 0) - 0.85) < 0.03


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 5), st.integers(1, 4), st.integers(1, 4))
def test_update_is_distribution(seed, S, A, O):
    rng = np.random.default_rng(seed)
    m = random_pomdp(rng, S, A, O)
    b = rng.dirichlet(np.ones(S))
    a = int(rng.integers(A))
    marg = observation_marginals(m, b, a)
    assert marg.sum() == pytest.approx(1.0)
    for o in range(O):
        if marg[o] > 1e-12:
            post = belief_update(m, b, a, o)
            assert post.min() >= 0.0
            assert post.sum() == pytest.approx(1.0)
