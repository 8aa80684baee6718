"""Entropy-regularized point-based value iteration over per-action Q banks."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np
from scipy.special import logsumexp

from erpbvi.alpha import (
    HARD_MAX_LAMBDA,
    AlphaSet,
    AlphaVector,
    QBank,
    WitnessPool,
    dumps_policy,
    loads_policy,
    prune_bank,
    soft_weights,
)
from erpbvi.errors import LpFailure, ValidationError
from erpbvi.model import TabularPomdp, belief_update
from erpbvi.pbvi import (
    BeliefSet,
    SolverConfig,
    action_successors,
    expand,
    lookahead_vector,
    lower_bound_vector,
)

logger = logging.getLogger(__name__)


def entropy(dist) -> float:
    """Shannon entropy in nats, with ``0 log 0 = 0``."""
    p = np.asarray(dist, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


class SoftPolicy:
    """Softmax policy over the Q-values of a bank."""

    def __init__(self, bank: QBank, lam: float | None = None):
        self.bank = bank
        self.lam = bank.lam if lam is None else float(lam)
        if self.lam < 0:
            raise ValidationError("temperature must be >= 0")

    @property
    def n_actions(self) -> int:
        return self.bank.n_actions

    def q_values(self, beliefs) -> np.ndarray:
        return self.bank.q_matrix(beliefs)

    def action_probs(self, beliefs) -> np.ndarray:
        return soft_weights(self.q_values(beliefs), self.lam)

    def to_json(self, fingerprint: str = "", metadata: dict | None = None) -> str:
        meta = {"policy_lambda": self.lam, **(metadata or {})}
        return dumps_policy(self.bank, fingerprint, meta)

    @classmethod
    def from_json(cls, text: str) -> "SoftPolicy":
        doc = json.loads(text)
        bank = loads_policy(text)
        lam = doc.get("metadata", {}).get("policy_lambda", bank.lam)
        return cls(bank, lam)


def policy_distribution(policy: SoftPolicy, b) -> np.ndarray:
    return policy.action_probs(np.asarray(b, dtype=np.float64)[None, :])[0]


def policy_sample(policy: SoftPolicy, b, rng: np.random.Generator) -> int:
    p = policy_distribution(policy, b)
    cdf = np.cumsum(p)
    return min(int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right")), len(p) - 1)


def dominating_columns(bank: QBank, beliefs: np.ndarray) -> np.ndarray:
    """For each belief row, the maximal vector of every Gamma_i.

    Returns an array of shape ``(n_beliefs, n_actions, n_states)``.
    """
    beliefs = np.atleast_2d(beliefs)
    cols = np.empty((beliefs.shape[0], bank.n_actions, bank.n_states))
    for i, g in enumerate(bank.per_action):
        cols[:, i, :] = g.vectors[np.argmax(beliefs @ g.vectors.T, axis=1)]
    return cols


def soft_combine(columns: np.ndarray, beliefs: np.ndarray, lam: float) -> np.ndarray:
    """``A @ softmax(A^T b / lam)`` for a batch of column stacks ``A``."""
    vals = np.einsum("nis,ns->ni", columns, beliefs)
    w = soft_weights(vals, lam)
    return np.einsum("ni,nis->ns", w, columns)


def soft_alpha_ao(bank: QBank, b, a: int, o: int, model: TabularPomdp | None = None) -> AlphaVector:
    """Gradient of the soft next-belief value, a hyperplane tangent at Update(b, a, o).

    With ``model`` given, ``b`` is the current belief and the update is
    applied here; without it, ``b`` is taken to be the posterior already.
    """
    bp = np.asarray(b, dtype=np.float64)
    if model is not None:
        bp = belief_update(model, bp, a, o)
    cols = dominating_columns(bank, bp[None, :])
    vec = soft_combine(cols, bp[None, :], bank.lam)[0]
    return AlphaVector(vec, a)


def erpbvi_action_vectors(model: TabularPomdp, b, bank: QBank) -> np.ndarray:
    """One backed-up vector per Q-function at ``b``, shape ``(A, S)``."""
    b = np.asarray(b, dtype=np.float64)
    out = np.empty((model.n_actions, model.n_states))
    for a in range(model.n_actions):
        post, _, _ = action_successors(model, b, a)
        cols = dominating_columns(bank, post)
        alpha_ao = soft_combine(cols, post, bank.lam)
        out[a] = lookahead_vector(model, a, alpha_ao)
    return out


def erpbvi_backup(model: TabularPomdp, b, bank: QBank) -> List[AlphaVector]:
    vecs = erpbvi_action_vectors(model, b, bank)
    return [AlphaVector(vecs[a], a) for a in range(model.n_actions)]


@dataclass
class ErpbviSolution:
    policy: SoftPolicy
    beliefs: BeliefSet
    value_history: List[np.ndarray] = field(default_factory=list)
    lp_skips: int = 0

    @property
    def bank(self) -> QBank:
        return self.policy.bank


def erpbvi(model: TabularPomdp, lam: float, config: SolverConfig = SolverConfig(), initial_belief=None) -> ErpbviSolution:
    if lam < 0:
        raise ValidationError("temperature must be >= 0")
    b0 = model.initial_belief if initial_belief is None else np.asarray(initial_belief, dtype=np.float64)
    beliefs = BeliefSet(b0[None, :])
    lb = lower_bound_vector(model)
    # growable per-action buffers; the bank snapshot is refreshed after every belief
    buffers = [[lb] for _ in range(model.n_actions)]
    bank = QBank([AlphaSet(lb[None, :], [a]) for a in range(model.n_actions)], lam)
    history, skips = [], 0
    pools = [WitnessPool(model.n_states, seed=a) for a in range(model.n_actions)]
    for _ in range(config.n_iterations):
        for _ in range(config.backups_per_improve):
            for b in beliefs.points:
                vecs = erpbvi_action_vectors(model, b, bank)
                for a in range(model.n_actions):
                    buffers[a].append(vecs[a])
                bank = QBank(
                    [AlphaSet(np.asarray(buf), np.full(len(buf), a)) for a, buf in enumerate(buffers)],
                    lam,
                )
            history.append(_soft_values(bank, beliefs.points))
        if config.prune:
            try:
                bank = prune_bank(bank, beliefs.points, pools)
            except LpFailure as exc:
                logger.warning("skipping pruning this round: %s", exc)
                skips += 1
            buffers = [list(g.vectors) for g in bank.per_action]
        beliefs = expand(model, beliefs, max_beliefs=config.max_beliefs)
    return ErpbviSolution(SoftPolicy(bank), beliefs, history, skips)


def _soft_values(bank: QBank, beliefs: np.ndarray) -> np.ndarray:
    q = bank.q_matrix(beliefs)
    if bank.lam < HARD_MAX_LAMBDA:
        return q.max(axis=1)
    return bank.lam * logsumexp(q / bank.lam, axis=1)


def solve_erpbvi(model: TabularPomdp, lam: float, config: SolverConfig = SolverConfig()) -> SoftPolicy:
    return erpbvi(model, lam, config).policy
