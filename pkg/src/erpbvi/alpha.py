"""Alpha-vector sets, per-action Q banks, LogSumExp values and LP pruning."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from typing import List, Sequence

import highspy
import numpy as np
from scipy.special import logsumexp

from erpbvi.errors import LpFailure, ValidationError

logger = logging.getLogger(__name__)

HARD_MAX_LAMBDA = 1e-10
LP_RETAIN_TOL = 1e-9
# lazy LP: probes used to seed constraints, violators added per round
_SEED_PROBES = 4
_LAZY_BATCH = 8
DOMINANCE_TOL = 1e-12
POLICY_FORMAT_VERSION = 1


@dataclass(frozen=True)
class AlphaVector:
    coeffs: np.ndarray
    action_tag: int

    def value(self, b) -> float:
        return float(self.coeffs @ np.asarray(b, dtype=np.float64))


class AlphaSet:
    """Nonempty set of hyperplanes over the belief simplex.

    Stored as a dense ``(n_vectors, n_states)`` matrix plus one action tag
    per row, so evaluation at many beliefs is a single matmul.
    """

    __slots__ = ("vectors", "actions")

    def __init__(self, vectors, actions=None):
        vectors = np.array(vectors, dtype=np.float64, ndmin=2)
        if vectors.shape[0] == 0:
            raise ValidationError("AlphaSet must contain at least one vector")
        if not np.all(np.isfinite(vectors)):
            raise ValidationError("alpha vector coefficients must be finite")
        if actions is None:
            actions = np.zeros(vectors.shape[0], dtype=np.int64)
        actions = np.array(actions, dtype=np.int64).reshape(-1)
        if actions.shape[0] != vectors.shape[0]:
            raise ValidationError("one action tag per vector is required")
        vectors.setflags(write=False)
        actions.setflags(write=False)
        self.vectors = vectors
        self.actions = actions

    @classmethod
    def from_vectors(cls, alphas: Sequence[AlphaVector]) -> "AlphaSet":
        return cls([a.coeffs for a in alphas], [a.action_tag for a in alphas])

    @property
    def n_states(self) -> int:
        return self.vectors.shape[1]

    def __len__(self) -> int:
        return self.vectors.shape[0]

    def __getitem__(self, i: int) -> AlphaVector:
        return AlphaVector(self.vectors[i], int(self.actions[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def __eq__(self, other):
        if not isinstance(other, AlphaSet):
            return NotImplemented
        return np.array_equal(self.vectors, other.vectors) and np.array_equal(self.actions, other.actions)

    def __repr__(self):
        return f"AlphaSet(n_vectors={len(self)}, n_states={self.n_states})"

    def append(self, coeffs, action_tag: int) -> "AlphaSet":
        return self.extend(np.asarray(coeffs)[None, :], [action_tag])

    def extend(self, vectors, actions) -> "AlphaSet":
        return AlphaSet(
            np.vstack([self.vectors, np.asarray(vectors, dtype=np.float64)]),
            np.concatenate([self.actions, np.asarray(actions, dtype=np.int64)]),
        )

    def subset(self, idx) -> "AlphaSet":
        return AlphaSet(self.vectors[idx], self.actions[idx])

    def values(self, beliefs) -> np.ndarray:
        """Upper envelope at each row of ``beliefs``."""
        return (np.atleast_2d(beliefs) @ self.vectors.T).max(axis=1)


def max_value(alpha_set: AlphaSet, b) -> tuple[float, int]:
    """Best dot product at ``b`` and its index; ties go to the lowest index."""
    vals = alpha_set.vectors @ np.asarray(b, dtype=np.float64)
    i = int(np.argmax(vals))
    return float(vals[i]), i


class QBank:
    """One AlphaSet per action plus the entropy temperature."""

    __slots__ = ("per_action", "lam")

    def __init__(self, per_action: List[AlphaSet], lam: float):
        if lam < 0 or not np.isfinite(lam):
            raise ValidationError(f"temperature must be a finite value >= 0, got {lam}")
        if not per_action:
            raise ValidationError("QBank needs at least one action")
        n = {s.n_states for s in per_action}
        if len(n) != 1:
            raise ValidationError("all Q-function sets must share the state dimension")
        self.per_action = list(per_action)
        self.lam = float(lam)

    @property
    def n_actions(self) -> int:
        return len(self.per_action)

    @property
    def n_states(self) -> int:
        return self.per_action[0].n_states

    def q_values(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=np.float64)
        return np.array([(g.vectors @ b).max() for g in self.per_action])

    def q_matrix(self, beliefs) -> np.ndarray:
        """Q-values for each belief row, shape ``(n_beliefs, n_actions)``."""
        beliefs = np.atleast_2d(beliefs)
        return np.stack([(beliefs @ g.vectors.T).max(axis=1) for g in self.per_action], axis=1)

    def union(self) -> AlphaSet:
        return AlphaSet(
            np.vstack([g.vectors for g in self.per_action]),
            np.concatenate([np.full(len(g), a) for a, g in enumerate(self.per_action)]),
        )

    def __eq__(self, other):
        if not isinstance(other, QBank):
            return NotImplemented
        return self.lam == other.lam and all(x == y for x, y in zip(self.per_action, other.per_action)) and (
            self.n_actions == other.n_actions
        )

    def __repr__(self):
        sizes = [len(g) for g in self.per_action]
        return f"QBank(lam={self.lam:g}, sizes={sizes})"


def q_value(bank: QBank, a: int, b) -> float:
    return max_value(bank.per_action[a], b)[0]


def soft_max_value(q, lam: float) -> float:
    """``lam * log sum exp(q / lam)``; the hard max below the temperature floor."""
    q = np.asarray(q, dtype=np.float64)
    if lam < HARD_MAX_LAMBDA:
        return float(q.max())
    return float(lam * logsumexp(q / lam))


def bank_value(bank: QBank, b) -> float:
    return soft_max_value(bank.q_values(b), bank.lam)


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    z = x - x.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def soft_weights(q: np.ndarray, lam: float) -> np.ndarray:
    """Softmax of ``q / lam`` along the last axis, one-hot argmax below the floor."""
    q = np.asarray(q, dtype=np.float64)
    if lam < HARD_MAX_LAMBDA:
        w = np.zeros_like(q)
        idx = np.argmax(q, axis=-1)
        np.put_along_axis(w, np.expand_dims(idx, -1), 1.0, axis=-1)
        return w
    return softmax(q / lam)


# --- pruning -------------------------------------------------------------


def _pairwise_filter(vectors: np.ndarray) -> np.ndarray:
    """Indices of vectors not weakly dominated componentwise by another.

    Among (near-)duplicates the lowest index survives.
    """
    n = vectors.shape[0]
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        if not keep[i]:
            continue
        # i dominates j: v_i >= v_j everywhere
        dom = np.all(vectors[i][None, :] >= vectors - DOMINANCE_TOL, axis=1)
        dom[i] = False
        keep &= ~dom
    return np.flatnonzero(keep)


class _MarginLp:
    """Warm-started LP for the dominance margin of one candidate vector.

    Variables are ``[b_0..b_{S-1}, d]``; each added row encodes
    ``b.(other - alpha) / scale + d <= 0``.  Re-solving after adding rows
    restarts from the previous basis, which keeps lazy constraint
    generation cheap.
    """

    def __init__(self, alpha: np.ndarray, scale: float):
        self.alpha = alpha
        self.scale = max(float(scale), 1e-12)
        n = alpha.shape[0]
        self.n = n
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("presolve", "off")
        inf = highspy.kHighsInf
        none = np.array([], dtype=np.int32)
        h.addCols(
            n + 1,
            np.r_[np.zeros(n), -1.0],
            np.r_[np.zeros(n), -inf],
            np.full(n + 1, inf),
            0,
            none,
            none,
            np.array([]),
        )
        h.addRow(1.0, 1.0, n, np.arange(n, dtype=np.int32), np.ones(n))
        self.h = h

    def add(self, others: np.ndarray) -> None:
        others = np.atleast_2d(others)
        m = others.shape[0]
        rows = np.hstack([(others - self.alpha[None, :]) / self.scale, np.ones((m, 1))])
        nz = rows != 0
        starts = np.r_[0, np.cumsum(nz.sum(axis=1))[:-1]].astype(np.int32)
        cols = np.nonzero(nz)[1].astype(np.int32)
        self.h.addRows(m, np.full(m, -highspy.kHighsInf), np.zeros(m), cols.size, starts, cols, rows[nz])

    def solve(self) -> tuple[float, np.ndarray]:
        self.h.run()
        status = self.h.getModelStatus()
        if status != highspy.HighsModelStatus.kOptimal:
            raise LpFailure(f"pruning LP failed: {self.h.modelStatusToString(status)}")
        x = np.asarray(self.h.getSolution().col_value)
        b = np.clip(x[: self.n], 0.0, None)
        return float(x[-1]) * self.scale, b / b.sum()


def _lp_margin(alpha: np.ndarray, others: np.ndarray) -> tuple[float, np.ndarray]:
    """Largest ``d`` with ``b.alpha >= b.other + d`` for all others, b in the simplex.

    Returns ``(d, b)`` at the optimum.
    """
    lp = _MarginLp(alpha, np.abs(others - alpha[None, :]).max())
    lp.add(others)
    return lp.solve()


def _is_dominated(
    i: int,
    V: np.ndarray,
    alive: np.ndarray,
    top: tuple,
    found: list | None = None,
) -> bool:
    """Decide whether ``V[i]`` falls below the other live vectors everywhere.

    Constraints are generated lazily.  The LP starts from the vectors that
    win at the probes where ``V[i]`` comes closest to the envelope; whenever
    its optimal belief is beaten by live vectors outside the constraint set,
    the worst offenders are added.  A margin at or below ``-LP_RETAIN_TOL``
    settles dominance because more constraints can only lower it; a belief
    where ``V[i]`` stays within tolerance of every live vector settles
    retention.
    """
    others = alive.copy()
    others[i] = False
    # best rival per probe from the precomputed top two (rivals may have died since)
    first, second, v1, v2, own = top
    rival = np.where(first == i, second, first)
    gap = np.where(first == i, v2, v1) - own[:, i]
    near = np.argpartition(gap, min(_SEED_PROBES, gap.size - 1))[:_SEED_PROBES]
    active = np.zeros_like(others)
    active[rival[near]] = True
    active &= others
    if not active.any():
        active[np.flatnonzero(others)[0]] = True
    lp = _MarginLp(V[i], np.abs(V[others] - V[i][None, :]).max())
    lp.add(V[active])
    while True:
        margin, b = lp.solve()
        if margin <= -LP_RETAIN_TOL:
            return True
        scores = V @ b
        excess = scores - V[i] @ b
        excess[~others] = -np.inf
        if excess.max() < LP_RETAIN_TOL:
            if found is not None:
                found.append(b)
            return False
        fresh = np.flatnonzero((excess >= LP_RETAIN_TOL) & ~active)
        if fresh.size == 0:
            # LP tolerance mismatch; fall back to a cold solve on every live vector
            margin, _ = _lp_margin(V[i], V[others])
            return margin <= -LP_RETAIN_TOL
        fresh = fresh[np.argsort(-excess[fresh])[:_LAZY_BATCH]]
        active[fresh] = True
        lp.add(V[fresh])


def prune(alpha_set: AlphaSet, witness_beliefs=None, found: list | None = None) -> AlphaSet:
    """Remove vectors that are never maximal anywhere on the simplex.

    A componentwise-dominance pass runs first.  Vectors that attain the
    envelope (within ``LP_RETAIN_TOL``) at one of ``witness_beliefs`` (the simplex corners are always
    included) are kept without an LP; every other vector is kept iff its
    LP margin against the remaining vectors exceeds ``-LP_RETAIN_TOL``.
    Beliefs at which an LP certified a vector are appended to ``found``;
    feeding them back as witnesses makes later rounds cheaper.
    """
    if len(alpha_set) == 1:
        return alpha_set
    idx = _pairwise_filter(alpha_set.vectors)
    if len(idx) == 1:
        return alpha_set.subset(idx)
    V = alpha_set.vectors[idx]
    n_states = V.shape[1]

    probes = np.eye(n_states)
    if witness_beliefs is not None and len(witness_beliefs):
        probes = np.vstack([probes, np.atleast_2d(witness_beliefs)])
    vals = probes @ V.T
    # anything within tolerance of the envelope at some probe is retained outright
    witnessed = (vals >= vals.max(axis=1, keepdims=True) - LP_RETAIN_TOL).any(axis=0)

    order = np.argsort(-vals, axis=1)[:, :2]
    rows = np.arange(vals.shape[0])
    top = (order[:, 0], order[:, 1], vals[rows, order[:, 0]], vals[rows, order[:, 1]], vals)
    alive = np.ones(len(idx), dtype=bool)
    for i in np.flatnonzero(~witnessed):
        if _is_dominated(i, V, alive, top, found):
            alive[i] = False
    return alpha_set.subset(idx[alive])


def prune_bank(bank: QBank, witness_beliefs=None, pools: list | None = None) -> QBank:
    """Prune every Q-function; ``pools[a]`` holds extra witnesses for action ``a``."""
    out = []
    for a, g in enumerate(bank.per_action):
        if pools is None:
            out.append(prune(g, witness_beliefs))
            continue
        out.append(prune(g, pools[a].probes(witness_beliefs), pools[a].found))
        pools[a].trim()
    return QBank(out, bank.lam)


class WitnessPool:
    """Beliefs that certified vectors in earlier pruning rounds, plus fixed random probes."""

    def __init__(self, n_states: int, n_random: int = 64, seed: int = 0, capacity: int = 2000):
        rng = np.random.default_rng(seed)
        self.base = rng.dirichlet(np.ones(n_states), size=n_random) if n_random else np.zeros((0, n_states))
        self.found: list = []
        self.capacity = capacity

    def probes(self, extra=None) -> np.ndarray:
        parts = [self.base]
        if self.found:
            parts.append(np.asarray(self.found))
        if extra is not None and len(extra):
            parts.append(np.atleast_2d(extra))
        return np.vstack(parts)

    def trim(self) -> None:
        if len(self.found) > self.capacity:
            del self.found[: len(self.found) - self.capacity]


# --- serialization -------------------------------------------------------


def _set_to_dict(alpha_set: AlphaSet) -> dict:
    return {
        "vectors": alpha_set.vectors.tolist(),
        "actions": alpha_set.actions.tolist(),
    }


def _set_from_dict(d: dict) -> AlphaSet:
    return AlphaSet(d["vectors"], d["actions"])


def policy_to_dict(policy, fingerprint: str = "", metadata: dict | None = None) -> dict:
    """Versioned JSON-ready document for an AlphaSet or a QBank."""
    doc = {"format": "erpbvi-policy", "version": POLICY_FORMAT_VERSION, "model_fingerprint": fingerprint}
    if isinstance(policy, QBank):
        doc["kind"] = "qbank"
        doc["lambda"] = policy.lam
        doc["per_action"] = [_set_to_dict(g) for g in policy.per_action]
    elif isinstance(policy, AlphaSet):
        doc["kind"] = "alpha_set"
        doc["alpha_set"] = _set_to_dict(policy)
    else:
        raise TypeError(f"cannot serialize {type(policy).__name__}")
    if metadata:
        doc["metadata"] = metadata
    return doc


def policy_from_dict(doc: dict):
    if doc.get("format") != "erpbvi-policy":
        raise ValidationError("not an erpbvi policy document")
    if doc.get("version") != POLICY_FORMAT_VERSION:
        raise ValidationError(f"unsupported policy format version {doc.get('version')}")
    if doc["kind"] == "qbank":
        return QBank([_set_from_dict(d) for d in doc["per_action"]], doc["lambda"])
    if doc["kind"] == "alpha_set":
        return _set_from_dict(doc["alpha_set"])
    raise ValidationError(f"unknown policy kind {doc['kind']!r}")


def dumps_policy(policy, fingerprint: str = "", metadata: dict | None = None) -> str:
    return json.dumps(policy_to_dict(policy, fingerprint, metadata), sort_keys=True)


def loads_policy(text: str):
    return policy_from_dict(json.loads(text))
