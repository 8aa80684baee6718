"""Batched rollouts with common random numbers, policy evaluation and visitation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from erpbvi.errors import DimensionMismatch
from erpbvi.model import ZERO_LIKELIHOOD, TabularPomdp, same_spaces

# uniforms consumed per step: action draw, transition draw, observation draw
_DRAWS_PER_STEP = 3


@dataclass
class Trajectory:
    steps: list = field(default_factory=list)  # (belief_before, action, observation, reward)
    states: list = field(default_factory=list)
    discount: float = 1.0
    zero_likelihood_steps: int = 0

    @property
    def total_discounted_return(self) -> float:
        return float(sum(self.discount**t * r for t, (_, _, _, r) in enumerate(self.steps)))

    def trace(self) -> list:
        return [(a, o) for _, a, o, _ in self.steps]


@dataclass
class EvalReport:
    mean_return: float
    std_error: float
    n_rollouts: int
    horizon: int
    seed: int
    policy: dict = field(default_factory=dict)
    zero_likelihood_events: int = 0

    def as_row(self) -> dict:
        return {
            "mean_return": self.mean_return,
            "std_error": self.std_error,
            "n_rollouts": self.n_rollouts,
            "horizon": self.horizon,
            "seed": self.seed,
        }


@dataclass
class BatchResult:
    returns: np.ndarray
    zero_likelihood: np.ndarray
    # (n, horizon + 1) histories; -1 marks steps after termination
    states: Optional[np.ndarray] = None
    actions: Optional[np.ndarray] = None
    observations: Optional[np.ndarray] = None
    rewards: Optional[np.ndarray] = None
    beliefs: Optional[List[np.ndarray]] = None


def rollout_uniforms(seed: int, n_rollouts: int, horizon: int, start: int = 0) -> np.ndarray:
    """Per-rollout random streams keyed on ``(seed, rollout index)``.

    Row ``i`` depends only on ``seed`` and ``start + i``; two policies
    evaluated with the same seed see the same environment randomness.
    """
    out = np.empty((n_rollouts, 1 + _DRAWS_PER_STEP * horizon))
    for i in range(n_rollouts):
        out[i] = np.random.default_rng([seed, start + i]).random(out.shape[1])
    return out


def _inverse_cdf(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(probs, axis=1)
    idx = (cdf < (u * cdf[:, -1])[:, None]).sum(axis=1)
    return np.minimum(idx, probs.shape[1] - 1)


def simulate(
    true_model: TabularPomdp,
    agent_model: TabularPomdp,
    policy,
    horizon: int,
    uniforms: np.ndarray,
    initial_belief=None,
    record: bool = False,
) -> BatchResult:
    """Run one rollout per row of ``uniforms`` in lockstep.

    The world evolves under ``true_model``; the agent filters with
    ``agent_model`` and acts from ``policy.action_probs``.  An observation
    the agent's model deems impossible leaves its belief unchanged and is
    counted in ``zero_likelihood``.
    """
    if not same_spaces(true_model, agent_model):
        raise DimensionMismatch("true and agent models must share state, action and observation spaces")
    n = uniforms.shape[0]
    S = true_model.n_states
    b0 = agent_model.initial_belief if initial_belief is None else np.asarray(initial_belief, dtype=np.float64)
    start_dist = true_model.initial_belief if initial_belief is None else b0
    state = _inverse_cdf(np.broadcast_to(start_dist, (n, S)), uniforms[:, 0])
    beliefs = np.tile(b0, (n, 1))
    alive = ~true_model.terminal_mask()[state]
    returns = np.zeros(n)
    zl = np.zeros(n, dtype=np.int64)
    gamma = true_model.discount
    Ttrue, Ztrue, Rtrue = true_model.transition, true_model.observation, true_model.reward
    Tag, Zag = agent_model.transition, agent_model.observation

    if record:
        states = np.full((n, horizon + 1), -1, dtype=np.int64)
        actions = np.full((n, horizon), -1, dtype=np.int64)
        observations = np.full((n, horizon), -1, dtype=np.int64)
        rewards = np.zeros((n, horizon))
        belief_hist = []
        states[:, 0] = state

    for t in range(horizon):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        base = 1 + _DRAWS_PER_STEP * t
        b = beliefs[idx]
        if record:
            snapshot = np.full((n, S), np.nan)
            snapshot[idx] = b
            belief_hist.append(snapshot)
        a = _inverse_cdf(policy.action_probs(b), uniforms[idx, base])
        s = state[idx]
        r = Rtrue[s, a]
        returns[idx] += gamma**t * r
        s2 = _inverse_cdf(Ttrue[s, a], uniforms[idx, base + 1])
        o = _inverse_cdf(Ztrue[a, s2], uniforms[idx, base + 2])

        new_b = np.empty_like(b)
        for act in np.unique(a):
            rows = np.flatnonzero(a == act)
            pred = b[rows] @ Tag[:, act, :]
            post = pred * Zag[act][:, o[rows]].T
            tot = post.sum(axis=1)
            ok = tot > ZERO_LIKELIHOOD
            post[ok] /= tot[ok, None]
            post[~ok] = b[rows][~ok]
            zl[idx[rows[~ok]]] += 1
            new_b[rows] = post
        beliefs[idx] = new_b
        state[idx] = s2
        alive[idx] = ~true_model.terminal_mask()[s2]
        if record:
            actions[idx, t] = a
            observations[idx, t] = o
            rewards[idx, t] = r
            states[idx, t + 1] = s2

    res = BatchResult(returns, zl)
    if record:
        res.states, res.actions, res.observations, res.rewards = states, actions, observations, rewards
        res.beliefs = belief_hist
    return res


def rollout(true_model: TabularPomdp, agent_model: TabularPomdp, policy, horizon: int, rng: np.random.Generator) -> Trajectory:
    u = rng.random((1, 1 + _DRAWS_PER_STEP * horizon))
    res = simulate(true_model, agent_model, policy, horizon, u, record=True)
    traj = Trajectory(discount=true_model.discount, zero_likelihood_steps=int(res.zero_likelihood[0]))
    for t in range(horizon):
        a = int(res.actions[0, t])
        if a < 0:
            break
        traj.steps.append((res.beliefs[t][0].copy(), a, int(res.observations[0, t]), float(res.rewards[0, t])))
    traj.states = [int(s) for s in res.states[0] if s >= 0]
    return traj


def evaluate(
    true_model: TabularPomdp,
    agent_model: TabularPomdp,
    policy,
    n_rollouts: int,
    horizon: int,
    seed: int,
    policy_meta: dict | None = None,
    uniforms: np.ndarray | None = None,
) -> EvalReport:
    if n_rollouts <= 0:
        raise ValueError("n_rollouts must be positive")
    if uniforms is None:
        uniforms = rollout_uniforms(seed, n_rollouts, horizon)
    res = simulate(true_model, agent_model, policy, horizon, uniforms)
    returns = res.returns
    se = float(returns.std(ddof=1) / math.sqrt(n_rollouts)) if n_rollouts > 1 else 0.0
    return EvalReport(
        float(returns.mean()),
        se,
        n_rollouts,
        horizon,
        seed,
        dict(policy_meta or {}),
        int(res.zero_likelihood.sum()),
    )


def visitation_counts(
    true_model: TabularPomdp,
    agent_model: TabularPomdp,
    policy,
    n_rollouts: int,
    horizon: int,
    seed: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Visit frequencies of underlying states over all decision steps.

    Returns ``(frequencies, counts)``; ``counts[s]`` is the number of
    steps at which some rollout occupied ``s`` before acting.
    """
    uniforms = rollout_uniforms(seed, n_rollouts, horizon)
    res = simulate(true_model, agent_model, policy, horizon, uniforms, record=True)
    occupied = res.states[:, :horizon]
    acted = res.actions >= 0
    counts = np.bincount(occupied[acted], minlength=true_model.n_states).astype(np.int64)
    total = counts.sum()
    freqs = counts / total if total else counts.astype(float)
    return freqs, counts
