"""Policy adapters exposing ``action_probs(beliefs) -> (n, |A|)``."""
from __future__ import annotations

import numpy as np

from erpbvi.alpha import AlphaSet, soft_weights
from erpbvi.model import TabularPomdp

_CHUNK_ROWS = 200_000


class AlphaPolicy:
    """Greedy alpha-vector policy: the tag of the maximizing vector, lowest action on ties."""

    def __init__(self, alpha_set: AlphaSet, n_actions: int):
        self.alpha_set = alpha_set
        self.n_actions = n_actions

    def actions(self, beliefs) -> np.ndarray:
        vals = np.atleast_2d(beliefs) @ self.alpha_set.vectors.T
        best = vals.max(axis=1, keepdims=True)
        tags = np.where(vals >= best, self.alpha_set.actions[None, :], self.n_actions)
        return tags.min(axis=1)

    def action_probs(self, beliefs) -> np.ndarray:
        a = self.actions(beliefs)
        out = np.zeros((a.shape[0], self.n_actions))
        out[np.arange(a.shape[0]), a] = 1.0
        return out


class UniformPolicy:
    def __init__(self, n_actions: int):
        self.n_actions = n_actions

    def action_probs(self, beliefs) -> np.ndarray:
        n = np.atleast_2d(beliefs).shape[0]
        return np.full((n, self.n_actions), 1.0 / self.n_actions)


class EpsilonRandomPolicy:
    """With probability ``epsilon`` a uniformly random action, else ``base``."""

    def __init__(self, base, epsilon: float):
        if not 0.0 <= epsilon <= 1.0:
            raise ValueError("epsilon must lie in [0, 1]")
        self.base = base
        self.epsilon = float(epsilon)
        self.n_actions = base.n_actions

    def action_probs(self, beliefs) -> np.ndarray:
        p = self.base.action_probs(beliefs)
        return (1.0 - self.epsilon) * p + self.epsilon / self.n_actions


def lookahead_q(alpha_set: AlphaSet, model: TabularPomdp, beliefs) -> np.ndarray:
    """``Q(b, a) = R(b, a) + gamma * sum_o P(o | b, a) U(Update(b, a, o))`` for each row.

    Uses ``P(o) max_alpha alpha.b'_o = max_alpha alpha.(joint row)`` so no
    normalization is needed; zero-probability observations drop out.
    """
    beliefs = np.atleast_2d(np.asarray(beliefs, dtype=np.float64))
    n, S = beliefs.shape
    O = model.n_observations
    V = alpha_set.vectors
    q = beliefs @ model.reward
    chunk = max(1, _CHUNK_ROWS // O)
    for a in range(model.n_actions):
        pred = beliefs @ model.transition[:, a, :]
        Za = model.observation[a]
        fut = np.empty(n)
        for lo in range(0, n, chunk):
            p = pred[lo : lo + chunk]
            joint = p[:, None, :] * Za.T[None, :, :]  # (m, O, S)
            vals = (joint.reshape(-1, S) @ V.T).max(axis=1).reshape(p.shape[0], O)
            fut[lo : lo + chunk] = vals.sum(axis=1)
        q[:, a] += model.discount * fut
    return q


class SoftmaxLookaheadPolicy:
    """Softmax over one-step-lookahead Q-values of a single alpha-vector set."""

    def __init__(self, alpha_set: AlphaSet, model: TabularPomdp, lam: float):
        if lam < 0:
            raise ValueError("temperature must be >= 0")
        self.alpha_set = alpha_set
        self.model = model
        self.lam = float(lam)
        self.n_actions = model.n_actions

    def q_values(self, beliefs) -> np.ndarray:
        return lookahead_q(self.alpha_set, self.model, beliefs)

    def action_probs(self, beliefs) -> np.ndarray:
        return soft_weights(self.q_values(beliefs), self.lam)


def softmax_pbvi_policy(alpha_set: AlphaSet, model: TabularPomdp, lam: float) -> SoftmaxLookaheadPolicy:
    return SoftmaxLookaheadPolicy(alpha_set, model, lam)
