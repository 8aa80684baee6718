import numpy as np
import pytest

from conftest import random_pomdp
from erpbvi.alpha import AlphaSet, QBank, bank_value, soft_max_value
from erpbvi.envs import build_tiger
from erpbvi.errors import ConfigError, ValidationError
from erpbvi.erpbvi import (
    SoftPolicy,
    entropy,
    erpbvi,
    erpbvi_action_vectors,
    policy_distribution,
    policy_sample,
    soft_alpha_ao,
)
from erpbvi.model import TabularPomdp, uniform_belief
from erpbvi.pbvi import (
    BeliefSet,
    SolverConfig,
    expand,
    lower_bound_vector,
    pbvi,
    pbvi_action_vectors,
    pbvi_backup,
    pbvi_policy_action,
)

SMALL = SolverConfig(n_iterations=4, backups_per_improve=2, max_beliefs=12)


def test_solver_config_validation():
    with pytest.raises(ConfigError):
        SolverConfig(n_iterations=0)
    with pytest.raises(ConfigError):
        SolverConfig(max_beliefs=-1)


def test_lower_bound_vector():
    m = build_tiger()
    np.testing.assert_allclose(lower_bound_vector(m), -100 / 0.05)


def test_belief_set_dedupes():
    bs = BeliefSet([[0.5, 0.5], [0.5, 0.5 + 1e-12], [1.0, 0.0]])
    assert len(bs) == 2


def test_expand_adds_farthest_successor():
    m = build_tiger()
    bs = expand(m, BeliefSet([uniform_belief(2)]))
    assert len(bs) == 2
    # listening moves the belief by 0.35 in L1 per coordinate pair; opening goes nowhere
    assert np.abs(bs[1] - 0.5).sum() == pytest.approx(0.7)
    assert len(expand(m, bs, max_beliefs=2)) == 2


def test_pbvi_backup_one_step_horizon():
    # with a zero value function the backup is the immediate reward
    m = build_tiger()
    zero = AlphaSet(np.zeros((1, 2)), [0])
    vecs = pbvi_action_vectors(m, uniform_belief(2), zero)
    np.testing.assert_allclose(vecs, m.reward.T)
    best = pbvi_backup(m, uniform_belief(2), zero)
    assert best.action_tag == 0


def test_tiger_pbvi_reaches_known_value():
    m = build_tiger()
    sol = pbvi(m, SolverConfig(n_iterations=60))
    v = sol.alpha_set.values(uniform_belief(2)[None])[0]
    assert v == pytest.approx(19.37, abs=0.02)
    assert pbvi_policy_action(sol.alpha_set, m, uniform_belief(2)) == 0
    assert pbvi_policy_action(sol.alpha_set, m, np.array([0.999, 0.001])) == 2


def test_pbvi_monotone_lower_bound():
    rng = np.random.default_rng(11)
    models = [build_tiger()] + [random_pomdp(rng, 4, 3, 3) for _ in range(5)]
    for m in models:
        sol = pbvi(m, SolverConfig(n_iterations=5, backups_per_improve=3, max_beliefs=20))
        hist = sol.value_history
        for prev, cur in zip(hist, hist[1:]):
            # later sweeps cover a superset of beliefs
            assert np.all(cur[: len(prev)] >= prev - 1e-9)


def test_pbvi_without_pruning_same_values():
    m = build_tiger()
    a = pbvi(m, SMALL)
    b = pbvi(m, SolverConfig(n_iterations=4, backups_per_improve=2, max_beliefs=12, prune=False))
    pts = a.beliefs.points
    np.testing.assert_allclose(a.alpha_set.values(pts), b.alpha_set.values(pts), atol=1e-9)
    assert len(a.alpha_set) < len(b.alpha_set)


def value_at(bank, b):
    return soft_max_value([(g.vectors @ b).max() for g in bank.per_action], bank.lam)


def test_soft_alpha_ao_is_gradient():
    rng = np.random.default_rng(5)
    h = 1e-6
    for k in range(100):
        lam = (0.1, 1.0, 10.0)[k % 3]
        S, A = int(rng.integers(2, 6)), int(rng.integers(1, 4))
        bank = QBank([AlphaSet(rng.normal(size=(4, S)), [a] * 4) for a in range(A)], lam)
        b = rng.dirichlet(np.ones(S))
        grad = soft_alpha_ao(bank, b, 0, 0).coeffs
        fd = np.array([(value_at(bank, b + h * e) - value_at(bank, b - h * e)) / (2 * h) for e in np.eye(S)])
        np.testing.assert_allclose(grad, fd, atol=1e-5)


def test_soft_alpha_ao_single_action_is_dominating_vector():
    V = np.array([[1.0, 0.0], [0.0, 2.0]])
    bank = QBank([AlphaSet(V, [0, 0])], 3.0)
    np.testing.assert_array_equal(soft_alpha_ao(bank, [0.9, 0.1], 0, 0).coeffs, V[0])


def test_soft_alpha_ao_applies_update_with_model():
    m = build_tiger()
    bank = QBank([AlphaSet([[1.0, 0.0], [0.0, 1.0]], [a, a]) for a in range(3)], 0.0)
    # hearing left from uniform puts mass on tiger-left
    out = soft_alpha_ao(bank, [0.5, 0.5], 0, 0, model=m)
    np.testing.assert_array_equal(out.coeffs, [1.0, 0.0])


def test_erpbvi_zero_lambda_matches_pbvi_tiger():
    m = build_tiger()
    p = pbvi(m)
    e = erpbvi(m, 0.0)
    pts = p.beliefs.points
    np.testing.assert_allclose(p.alpha_set.values(pts), e.bank.q_matrix(pts).max(axis=1), atol=1e-9)


def test_erpbvi_zero_lambda_matches_pbvi_random():
    rng = np.random.default_rng(21)
    cfg = SolverConfig(n_iterations=4, backups_per_improve=2, max_beliefs=16)
    for _ in range(50):
        S, A, O = int(rng.integers(1, 5)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
        m = random_pomdp(rng, S, A, O, sparse=bool(rng.integers(2)))
        p = pbvi(m, cfg)
        e = erpbvi(m, 0.0, cfg)
        pts = p.beliefs.points
        np.testing.assert_array_equal(pts, e.beliefs.points)
        np.testing.assert_allclose(p.alpha_set.values(pts), e.bank.q_matrix(pts).max(axis=1), atol=1e-9)


def test_erpbvi_soft_value_above_hard():
    m = build_tiger()
    e = erpbvi(m, 2.0, SMALL)
    b = uniform_belief(2)
    q = e.bank.q_values(b)
    assert q.max() <= bank_value(e.bank, b) <= q.max() + 2.0 * np.log(3) + 1e-9


def test_erpbvi_action_vectors_shape():
    m = build_tiger()
    lb = lower_bound_vector(m)
    bank = QBank([AlphaSet(lb[None], [a]) for a in range(3)], 1.0)
    vecs = erpbvi_action_vectors(m, uniform_belief(2), bank)
    assert vecs.shape == (3, 2)
    # constant lower bound backs up to R + gamma * lb
    np.testing.assert_allclose(vecs, m.reward.T + m.discount * lb[None])


def test_soft_policy_limits_and_entropy():
    m = build_tiger()
    b = uniform_belief(2)
    bank = erpbvi(m, 1.0, SMALL).bank
    hot = policy_distribution(SoftPolicy(bank, 0.0), b)
    assert sorted(hot.tolist()) == [0.0, 0.0, 1.0]
    flat = policy_distribution(SoftPolicy(bank, 1e12), b)
    np.testing.assert_allclose(flat, 1 / 3)
    assert entropy(flat) == pytest.approx(np.log(3))
    assert entropy(hot) == 0.0
    with pytest.raises(ValidationError):
        SoftPolicy(bank, -1.0)


def test_policy_sample_follows_distribution():
    m = build_tiger()
    pol = SoftPolicy(erpbvi(m, 5.0, SMALL).bank)
    b = np.array([0.7, 0.3])
    rng = np.random.default_rng(0)
    draws = np.bincount([policy_sample(pol, b, rng) for _ in range(6000)], minlength=3) / 6000
    np.testing.assert_allclose(draws, policy_distribution(pol, b), atol=0.03)


def test_soft_policy_json_roundtrip():
    m = build_tiger()
    pol = SoftPolicy(erpbvi(m, 0.5, SMALL).bank, 0.7)
    back = SoftPolicy.from_json(pol.to_json(m.fingerprint))
    assert back.lam == 0.7 and back.bank == pol.bank


def test_single_state_model():
    m = TabularPomdp(np.ones((1, 2, 1)), np.ones((2, 1, 1)), [[1.0, 0.0]], 0.5)
    sol = pbvi(m, SMALL)
    assert sol.alpha_set.values(np.ones((1, 1)))[0] == pytest.approx(2.0 * (1 - 0.5**8), rel=0.02)
