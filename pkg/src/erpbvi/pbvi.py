"""Point-based value iteration with a single alpha-vector set."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from erpbvi.alpha import AlphaSet, AlphaVector, WitnessPool, prune
from erpbvi.errors import ConfigError, LpFailure
from erpbvi.model import ZERO_LIKELIHOOD, TabularPomdp

logger = logging.getLogger(__name__)

DUPLICATE_TOL = 1e-9


@dataclass(frozen=True)
class SolverConfig:
    n_iterations: int = 20
    backups_per_improve: int = 3
    max_beliefs: int = 200
    rng_seed: int = 0
    prune: bool = True

    def __post_init__(self):
        for name in ("n_iterations", "backups_per_improve", "max_beliefs"):
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.rng_seed < 0:
            raise ConfigError("rng_seed must be nonnegative")


class BeliefSet:
    """Ordered collection of distinct belief points (L1 separation > 1e-9)."""

    def __init__(self, points):
        pts = np.array(points, dtype=np.float64, ndmin=2)
        if pts.shape[0] == 0:
            raise ConfigError("BeliefSet must be nonempty")
        kept = [pts[0]]
        for p in pts[1:]:
            if np.abs(np.asarray(kept) - p).sum(axis=1).min() > DUPLICATE_TOL:
                kept.append(p)
        self.points = np.asarray(kept)

    def __len__(self):
        return self.points.shape[0]

    def __iter__(self):
        return iter(self.points)

    def __getitem__(self, i):
        return self.points[i]


def lower_bound_vector(model: TabularPomdp) -> np.ndarray:
    """Constant vector ``min R / (1 - gamma)``, a valid lower bound on any value."""
    return np.full(model.n_states, model.reward.min() / (1.0 - model.discount))


def action_successors(model: TabularPomdp, b: np.ndarray, a: int):
    """Posterior beliefs for every observation after ``a``.

    Returns ``(posteriors, marginals, valid)``.  Rows for observations with
    zero marginal hold a surrogate belief proportional to the observation
    likelihood column; those rows carry zero weight at ``b`` but keep every
    backed-up vector a valid lower bound elsewhere in the simplex.
    """
    pred = b @ model.transition[:, a, :]
    Za = model.observation[a]  # (S', O)
    joint = Za.T * pred[None, :]
    marg = joint.sum(axis=1)
    valid = marg > ZERO_LIKELIHOOD
    post = np.empty_like(joint)
    post[valid] = joint[valid] / marg[valid, None]
    if not valid.all():
        surrogate = Za.T[~valid]
        norm = surrogate.sum(axis=1, keepdims=True)
        flat = np.full(model.n_states, 1.0 / model.n_states)
        post[~valid] = np.where(norm > 0, surrogate / np.where(norm > 0, norm, 1.0), flat)
    return post, marg, valid


def lookahead_vector(model: TabularPomdp, a: int, alpha_ao: np.ndarray) -> np.ndarray:
    """``R[s,a] + gamma * sum_{s',o} Z[a,s',o] T[s,a,s'] alpha_ao[o,s']``."""
    g = np.einsum("so,os->s", model.observation[a], alpha_ao)
    return model.reward[:, a] + model.discount * (model.transition[:, a, :] @ g)


def pbvi_action_vectors(model: TabularPomdp, b, gamma_set: AlphaSet) -> np.ndarray:
    """Backed-up vector for every action at ``b``, shape ``(A, S)``."""
    b = np.asarray(b, dtype=np.float64)
    V = gamma_set.vectors
    out = np.empty((model.n_actions, model.n_states))
    for a in range(model.n_actions):
        post, _, _ = action_successors(model, b, a)
        best = np.argmax(post @ V.T, axis=1)
        out[a] = lookahead_vector(model, a, V[best])
    return out


def pbvi_backup(model: TabularPomdp, b, gamma_set: AlphaSet) -> AlphaVector:
    vecs = pbvi_action_vectors(model, b, gamma_set)
    a = int(np.argmax(vecs @ np.asarray(b, dtype=np.float64)))
    return AlphaVector(vecs[a], a)


def expand(model: TabularPomdp, beliefs: BeliefSet, rng=None, max_beliefs: Optional[int] = None) -> BeliefSet:
    """Add, per existing point, the reachable successor farthest (L1) from the set.

    Successors are enumerated action-major then observation; the first
    maximizer wins.  ``rng`` is accepted for interface symmetry; expansion
    is deterministic.
    """
    points = [p for p in beliefs.points]
    current = np.array(points)
    limit = max_beliefs if max_beliefs is not None else np.inf
    for b in beliefs.points:
        if len(points) >= limit:
            break
        cands = []
        for a in range(model.n_actions):
            post, _, valid = action_successors(model, b, a)
            cands.append(post[valid])
        cands = np.vstack(cands)
        if cands.shape[0] == 0:
            continue
        dist = np.abs(cands[:, None, :] - current[None, :, :]).sum(axis=2).min(axis=1)
        i = int(np.argmax(dist))
        if dist[i] <= DUPLICATE_TOL:
            continue
        points.append(cands[i])
        current = np.vstack([current, cands[i][None, :]])
    return BeliefSet(np.array(points))


@dataclass
class PbviSolution:
    alpha_set: AlphaSet
    beliefs: BeliefSet
    # values at the training beliefs after each backup sweep
    value_history: List[np.ndarray] = field(default_factory=list)
    lp_skips: int = 0


def prune_by_action(alpha_set: AlphaSet, witnesses=None, pools: dict | None = None) -> AlphaSet:
    """Prune each action-tag group on its own.

    Keeps a superset of ``prune(alpha_set)`` with the same upper envelope;
    within a group most vectors are maximal at the belief that produced
    them, so far fewer LPs are needed than for the pooled set.
    """
    parts = []
    for a in np.unique(alpha_set.actions):
        group = alpha_set.subset(np.flatnonzero(alpha_set.actions == a))
        if pools is None:
            parts.append(prune(group, witnesses))
            continue
        pool = pools.setdefault(int(a), WitnessPool(alpha_set.n_states, seed=int(a)))
        parts.append(prune(group, pool.probes(witnesses), pool.found))
        pool.trim()
    return AlphaSet(np.vstack([p.vectors for p in parts]), np.concatenate([p.actions for p in parts]))


def _safe_prune(fn, alpha_set: AlphaSet, *args) -> tuple[AlphaSet, bool]:
    try:
        return fn(alpha_set, *args), False
    except LpFailure as exc:
        logger.warning("skipping pruning this round: %s", exc)
        return alpha_set, True


def pbvi(model: TabularPomdp, config: SolverConfig = SolverConfig(), initial_belief=None) -> PbviSolution:
    b0 = model.initial_belief if initial_belief is None else np.asarray(initial_belief, dtype=np.float64)
    beliefs = BeliefSet(b0[None, :])
    gamma_set = AlphaSet(lower_bound_vector(model)[None, :], [0])
    sol = PbviSolution(gamma_set, beliefs)
    pools: dict = {}
    for _ in range(config.n_iterations):
        for _ in range(config.backups_per_improve):
            for b in beliefs.points:
                # every per-action candidate is kept, not just the argmax: the
                # extra vectors only tighten the bound away from b
                vecs = pbvi_action_vectors(model, b, gamma_set)
                gamma_set = gamma_set.extend(vecs, np.arange(model.n_actions))
            sol.value_history.append(gamma_set.values(beliefs.points))
        if config.prune:
            gamma_set, skipped = _safe_prune(prune_by_action, gamma_set, beliefs.points, pools)
            sol.lp_skips += skipped
        beliefs = expand(model, beliefs, max_beliefs=config.max_beliefs)
    if config.prune:
        found = [pool.probes() for pool in pools.values()]
        gamma_set, skipped = _safe_prune(prune, gamma_set, np.vstack([beliefs.points, *found]))
        sol.lp_skips += skipped
    sol.alpha_set = gamma_set
    sol.beliefs = beliefs
    return sol


def solve_pbvi(model: TabularPomdp, config: SolverConfig = SolverConfig()) -> AlphaSet:
    return pbvi(model, config).alpha_set


def pbvi_policy_action(gamma_set: AlphaSet, model: TabularPomdp, b) -> int:
    """Action tag of the maximizing vector; among tied vectors the lowest action wins."""
    vals = gamma_set.vectors @ np.asarray(b, dtype=np.float64)
    best = vals.max()
    return int(gamma_set.actions[vals >= best].min())
