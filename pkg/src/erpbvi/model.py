"""Tabular POMDP model, beliefs and the exact Bayes filter."""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from erpbvi.errors import DimensionMismatch, ValidationError, ZeroLikelihood

PROB_TOL = 1e-9
ZERO_LIKELIHOOD = 1e-300


@dataclass(frozen=True, eq=False)
class TabularPomdp:
    """Explicit-matrix POMDP.

    Array conventions: ``transition[s, a, s']``, ``observation[a, s', o]``
    and ``reward[s, a]``.  Arrays are copied, validated and made read-only
    on construction.
    """

    transition: np.ndarray
    observation: np.ndarray
    reward: np.ndarray
    discount: float
    terminal_states: frozenset = frozenset()
    initial_belief: Optional[np.ndarray] = None
    state_labels: Optional[tuple] = None
    action_labels: Optional[tuple] = None
    observation_labels: Optional[tuple] = None
    _fingerprint: str = field(default="", repr=False)

    def __post_init__(self):
        T = np.array(self.transition, dtype=np.float64)
        Z = np.array(self.observation, dtype=np.float64)
        R = np.array(self.reward, dtype=np.float64)
        for arr in (T, Z, R):
            arr.setflags(write=False)
        object.__setattr__(self, "transition", T)
        object.__setattr__(self, "observation", Z)
        object.__setattr__(self, "reward", R)
        object.__setattr__(self, "discount", float(self.discount))
        object.__setattr__(self, "terminal_states", frozenset(int(s) for s in self.terminal_states))
        if self.initial_belief is None:
            b0 = np.full(T.shape[0], 1.0 / max(T.shape[0], 1))
        else:
            b0 = np.array(self.initial_belief, dtype=np.float64)
        b0.setflags(write=False)
        object.__setattr__(self, "initial_belief", b0)
        for name in ("state_labels", "action_labels", "observation_labels"):
            labels = getattr(self, name)
            if labels is not None:
                object.__setattr__(self, name, tuple(str(x) for x in labels))
        self.validate()
        object.__setattr__(self, "_fingerprint", self._compute_fingerprint())

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_observations(self) -> int:
        return self.observation.shape[2]

    @property
    def fingerprint(self) -> str:
        """Stable hash of the numeric tables."""
        return self._fingerprint

    def validate(self) -> None:
        T, Z, R = self.transition, self.observation, self.reward
        if T.ndim != 3 or T.shape[0] != T.shape[2] or T.shape[0] == 0 or T.shape[1] == 0:
            raise ValidationError(f"transition must have shape (S, A, S), got {T.shape}")
        S, A = T.shape[0], T.shape[1]
        if Z.ndim != 3 or Z.shape[:2] != (A, S) or Z.shape[2] == 0:
            raise ValidationError(f"observation must have shape ({A}, {S}, O), got {Z.shape}")
        if R.shape != (S, A):
            raise ValidationError(f"reward must have shape ({S}, {A}), got {R.shape}")
        if not (np.all(np.isfinite(T)) and np.all(np.isfinite(Z)) and np.all(np.isfinite(R))):
            raise ValidationError("model tables must be finite")
        if np.any(T < 0) or np.any(Z < 0):
            raise ValidationError("probabilities must be nonnegative")
        bad = np.argwhere(np.abs(T.sum(axis=2) - 1.0) > PROB_TOL)
        if len(bad):
            s, a = bad[0]
            raise ValidationError(f"transition row (s={s}, a={a}) sums to {T[s, a].sum()!r}, not 1")
        bad = np.argwhere(np.abs(Z.sum(axis=2) - 1.0) > PROB_TOL)
        if len(bad):
            a, s2 = bad[0]
            raise ValidationError(f"observation row (a={a}, s'={s2}) sums to {Z[a, s2].sum()!r}, not 1")
        if not 0.0 <= self.discount < 1.0:
            raise ValidationError(f"discount must lie in [0, 1), got {self.discount}")
        for s in self.terminal_states:
            if not 0 <= s < S:
                raise ValidationError(f"terminal state {s} out of range")
            if np.any(np.abs(T[s, :, s] - 1.0) > PROB_TOL):
                raise ValidationError(f"terminal state {s} must self-loop with probability 1")
            if np.any(R[s] != 0.0):
                raise ValidationError(f"terminal state {s} must have zero reward")
        b0 = self.initial_belief
        if b0.shape != (S,) or np.any(b0 < 0) or abs(b0.sum() - 1.0) > PROB_TOL:
            raise ValidationError("initial belief must be a probability vector over states")
        for name, n in (("state_labels", S), ("action_labels", A), ("observation_labels", Z.shape[2])):
            labels = getattr(self, name)
            if labels is not None and len(labels) != n:
                raise ValidationError(f"{name} has {len(labels)} entries, expected {n}")

    def _compute_fingerprint(self) -> str:
        h = hashlib.sha256()
        for arr in (self.transition, self.observation, self.reward, self.initial_belief):
            h.update(str(arr.shape).encode())
            h.update(np.ascontiguousarray(arr).tobytes())
        h.update(repr(self.discount).encode())
        h.update(repr(sorted(self.terminal_states)).encode())
        return h.hexdigest()[:16]

    def terminal_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_states, dtype=bool)
        mask[list(self.terminal_states)] = True
        return mask

    def replace(self, **changes) -> "TabularPomdp":
        kwargs = dict(
            transition=self.transition,
            observation=self.observation,
            reward=self.reward,
            discount=self.discount,
            terminal_states=self.terminal_states,
            initial_belief=self.initial_belief,
            state_labels=self.state_labels,
            action_labels=self.action_labels,
            observation_labels=self.observation_labels,
        )
        kwargs.update(changes)
        return TabularPomdp(**kwargs)


def check_belief(b, n_states: int) -> np.ndarray:
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (n_states,):
        raise DimensionMismatch(f"belief has shape {b.shape}, expected ({n_states},)")
    if np.any(b < 0) or abs(b.sum() - 1.0) > 1e-6:
        raise ValidationError("belief must be a probability vector")
    return b


def predict(model: TabularPomdp, b: np.ndarray, a: int) -> np.ndarray:
    """Distribution over next states, sum_s T[s, a, s'] b(s)."""
    return b @ model.transition[:, a, :]


def unnormalized_successors(model: TabularPomdp, b: np.ndarray, a: int) -> np.ndarray:
    """Joint P(s', o | b, a) as an (O, S) array."""
    return model.observation[a].T * predict(model, b, a)[None, :]


def observation_marginals(model: TabularPomdp, b: np.ndarray, a: int) -> np.ndarray:
    return predict(model, b, a) @ model.observation[a]


def belief_update(model: TabularPomdp, b, a: int, o: int) -> np.ndarray:
    """Bayes filter step ``b'(s') ∝ Z[a, s', o] sum_s T[s, a, s'] b(s)``.

    Raises ZeroLikelihood when ``o`` cannot occur after taking ``a`` from ``b``.
    """
    if not 0 <= a < model.n_actions:
        raise IndexError(f"action {a} out of range")
    if not 0 <= o < model.n_observations:
        raise IndexError(f"observation {o} out of range")
    b = np.asarray(b, dtype=np.float64)
    post = model.observation[a, :, o] * predict(model, b, a)
    total = post.sum()
    if total <= ZERO_LIKELIHOOD:
        raise ZeroLikelihood(f"observation {o} has zero likelihood after action {a}")
    return post / total


def belief_reward(model: TabularPomdp, b, a: int) -> float:
    return float(np.asarray(b, dtype=np.float64) @ model.reward[:, a])


def _categorical(p: np.ndarray, rng: np.random.Generator) -> int:
    cdf = np.cumsum(p)
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(idx, len(p) - 1)


def sample_transition(model: TabularPomdp, s: int, a: int, rng: np.random.Generator):
    """Draw ``(s', o, r)`` from the generative model."""
    s_next = _categorical(model.transition[s, a], rng)
    o = _categorical(model.observation[a, s_next], rng)
    return s_next, o, float(model.reward[s, a])


def sample_belief_successor(model: TabularPomdp, b, a: int, rng: np.random.Generator):
    """Sample ``s ~ b`` and step the generative model; returns ``(o, b')``."""
    b = np.asarray(b, dtype=np.float64)
    s = _categorical(b, rng)
    _, o, _ = sample_transition(model, s, a, rng)
    return o, belief_update(model, b, a, o)


def same_spaces(m1: TabularPomdp, m2: TabularPomdp) -> bool:
    return (m1.n_states, m1.n_actions, m1.n_observations) == (
        m2.n_states,
        m2.n_actions,
        m2.n_observations,
    )


def uniform_belief(n_states: int) -> np.ndarray:
    return np.full(n_states, 1.0 / n_states)


def one_hot(n: int, i: int) -> np.ndarray:
    v = np.zeros(n)
    v[i] = 1.0
    return v


def as_belief_array(beliefs: Sequence) -> np.ndarray:
    return np.atleast_2d(np.asarray(beliefs, dtype=np.float64))
