"""Goal inference from action-observation prefixes under per-goal policies."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, List, Sequence

import numpy as np
from scipy.special import logsumexp

from erpbvi.errors import DimensionMismatch, EmptyDataset, ZeroLikelihood
from erpbvi.model import ZERO_LIKELIHOOD, TabularPomdp, belief_update, check_belief, same_spaces
from erpbvi.policies import AlphaPolicy, EpsilonRandomPolicy
from erpbvi.sim import rollout_uniforms, simulate


@dataclass
class GoalHypothesis:
    goal_id: Any
    model: TabularPomdp
    policy: Any  # anything with action_probs(beliefs) -> (n, |A|)


@dataclass
class InferenceResult:
    posterior: np.ndarray
    ml_goal: Any
    log_likelihoods: np.ndarray
    degenerate: bool = False


@dataclass
class TraceDataset:
    """Padded traces; ``actions[i, t] == -1`` past the end of trace ``i``."""

    actions: np.ndarray
    observations: np.ndarray
    labels: np.ndarray
    goal_ids: list = field(default_factory=list)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def trace(self, i: int) -> list:
        keep = self.actions[i] >= 0
        return list(zip(self.actions[i][keep].tolist(), self.observations[i][keep].tolist()))


def _check_hypotheses(hyps: Sequence[GoalHypothesis]) -> None:
    if not hyps:
        raise ValueError("need at least one goal hypothesis")
    for h in hyps[1:]:
        if not same_spaces(hyps[0].model, h.model):
            raise DimensionMismatch(f"hypothesis {h.goal_id!r} has different spaces")


def trace_log_likelihood(hyp: GoalHypothesis, b0, trace) -> float:
    """Sum of log action probabilities along the trace, beliefs rolled forward with ``hyp.model``."""
    b = check_belief(b0, hyp.model.n_states)
    total = 0.0
    for a, o in trace:
        p = float(hyp.policy.action_probs(b[None, :])[0, a])
        if p <= 0.0:
            return -np.inf
        total += np.log(p)
        try:
            b = belief_update(hyp.model, b, a, o)
        except ZeroLikelihood:
            return -np.inf
    return float(total)


def posterior_from_loglik(loglik) -> InferenceResult:
    ll = np.asarray(loglik, dtype=np.float64)
    if not np.isfinite(ll).any():
        n = ll.shape[0]
        return InferenceResult(np.full(n, 1.0 / n), 0, ll, degenerate=True)
    post = np.exp(ll - logsumexp(ll))
    return InferenceResult(post, int(np.argmax(ll)), ll)


def infer_goal(hyps: Sequence[GoalHypothesis], b0, trace) -> InferenceResult:
    """Posterior over goals under a uniform prior; ``ml_goal`` is the goal's index."""
    _check_hypotheses(hyps)
    res = posterior_from_loglik([trace_log_likelihood(h, b0, trace) for h in hyps])
    return res


def dataset_log_likelihoods(hyps: Sequence[GoalHypothesis], b0, data: TraceDataset) -> np.ndarray:
    """Batched ``trace_log_likelihood`` over every trace, shape ``(n_traces, n_goals)``."""
    _check_hypotheses(hyps)
    b0 = check_belief(b0, hyps[0].model.n_states)
    n, horizon = data.actions.shape
    out = np.zeros((n, len(hyps)))
    for g, hyp in enumerate(hyps):
        Tm, Zm = hyp.model.transition, hyp.model.observation
        beliefs = np.tile(b0, (n, 1))
        ll = np.zeros(n)
        live = np.ones(n, dtype=bool)  # trace continues and likelihood still finite
        for t in range(horizon):
            idx = np.flatnonzero(live & (data.actions[:, t] >= 0))
            if idx.size == 0:
                break
            a = data.actions[idx, t]
            p = hyp.policy.action_probs(beliefs[idx])[np.arange(idx.size), a]
            with np.errstate(divide="ignore"):
                ll[idx] += np.log(p)
            for act in np.unique(a):
                rows = idx[a == act]
                post = (beliefs[rows] @ Tm[:, act, :]) * Zm[act][:, data.observations[rows, t]].T
                tot = post.sum(axis=1)
                bad = tot <= ZERO_LIKELIHOOD
                ll[rows[bad]] = -np.inf
                tot[bad] = 1.0
                beliefs[rows] = post / tot[:, None]
            live &= np.isfinite(ll)
        out[:, g] = ll
    return out


def infer_dataset(hyps: Sequence[GoalHypothesis], b0, data: TraceDataset) -> List[InferenceResult]:
    return [posterior_from_loglik(row) for row in dataset_log_likelihoods(hyps, b0, data)]


def generate_inference_dataset(
    models: Sequence[TabularPomdp],
    alpha_sets: Sequence,
    n_traces: int,
    prefix_len: int,
    epsilon: float,
    seed: int,
    goal_ids: Sequence | None = None,
) -> TraceDataset:
    """Epsilon-random greedy-PBVI traces, ``n_traces`` split evenly across goals.

    Goal ``g`` gets rollout streams ``g * per_goal ...`` of ``seed`` so adding
    goals never perturbs earlier ones.
    """
    if len(models) != len(alpha_sets):
        raise ValueError("need one alpha set per goal model")
    k = len(models)
    per_goal = n_traces // k
    if per_goal == 0:
        raise EmptyDataset("fewer traces than goals")
    acts, obs, labels = [], [], []
    for g, (m, aset) in enumerate(zip(models, alpha_sets)):
        policy = EpsilonRandomPolicy(AlphaPolicy(aset, m.n_actions), epsilon)
        u = rollout_uniforms(seed, per_goal, prefix_len, start=g * per_goal)
        res = simulate(m, m, policy, prefix_len, u, record=True)
        acts.append(res.actions)
        obs.append(res.observations)
        labels.append(np.full(per_goal, g, dtype=np.int64))
    ids = list(goal_ids) if goal_ids is not None else list(range(k))
    return TraceDataset(np.vstack(acts), np.vstack(obs), np.concatenate(labels), ids)


def classification_metrics(results: Sequence[InferenceResult], labels, positive_goal=0) -> tuple[float, float, float]:
    """``(tpr, fpr, accuracy)`` of the maximum-likelihood goal against ``labels``.

    A rate whose denominator is empty is reported as NaN.
    """
    labels = np.asarray(labels)
    if len(results) == 0 or labels.size == 0:
        raise EmptyDataset("no traces to score")
    if len(results) != labels.size:
        raise ValueError("results and labels differ in length")
    pred = np.array([r.ml_goal for r in results])
    pos = labels == positive_goal
    hit = pred == positive_goal
    tpr = float(hit[pos].mean()) if pos.any() else float("nan")
    fpr = float(hit[~pos].mean()) if (~pos).any() else float("nan")
    acc = float((pred == labels).mean())
    return tpr, fpr, acc
