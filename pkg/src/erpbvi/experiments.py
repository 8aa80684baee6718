"""Experiment configs and the solve / evaluate / sweep / visitation runners.

Every runner returns plain rows and writes CSV or JSON whose bytes depend
only on the config, the seed and the package version.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from erpbvi import __version__
from erpbvi.alpha import AlphaSet, dumps_policy, loads_policy
from erpbvi.envs import build
from erpbvi.errors import ConfigError
from erpbvi.erpbvi import SoftPolicy, erpbvi
from erpbvi.inference import (
    GoalHypothesis,
    classification_metrics,
    generate_inference_dataset,
    infer_dataset,
)
from erpbvi.model import TabularPomdp
from erpbvi.pbvi import SolverConfig, pbvi
from erpbvi.policies import AlphaPolicy, SoftmaxLookaheadPolicy
from erpbvi.sim import evaluate, rollout_uniforms, visitation_counts

logger = logging.getLogger(__name__)

KINDS = ("solve", "evaluate", "robustness-sweep", "infer-sweep", "visitation")
METHODS = ("pbvi", "erpbvi")

ROBUSTNESS_COLUMNS = (
    "env", "perturbation", "method", "lambda", "mean_return", "std_error",
    "n_rollouts", "horizon", "seed", "config_hash", "version",
)
SUMMARY_COLUMNS = (
    "env", "perturbation", "pbvi_mean", "pbvi_std_error", "best_lambda",
    "best_erpbvi_mean", "best_erpbvi_std_error", "delta", "seed", "config_hash", "version",
)
INFERENCE_COLUMNS = (
    "env", "method", "lambda", "tpr", "fpr", "accuracy",
    "n_traces", "prefix_len", "seed", "config_hash", "version",
)
DATASET_COLUMNS = ("trace", "label", "step", "action", "observation")
VISITATION_COLUMNS = ("state", "label", "count", "frequency", "seed", "config_hash", "version")


@dataclass
class ExperimentConfig:
    kind: str = "solve"
    env: str = "tiger"
    env_params: dict = field(default_factory=dict)
    method: str = "erpbvi"
    # a list of values, or {"start", "stop", "num"} for a log-spaced grid
    lambdas: Any = field(default_factory=lambda: [1.0])
    solver: dict = field(default_factory=dict)
    seed: int = 0
    n_rollouts: int = 1000
    horizon: int = 100
    perturbations: list = field(default_factory=list)
    goals: list = field(default_factory=list)
    n_traces: int = 1000
    prefix_len: int = 5
    epsilon: float = 0.5
    positive_goal: int = 0
    policy_path: str | None = None
    # a model file replaces env/env_params for solve, evaluate and visitation
    model_path: str | None = None
    threads: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ConfigError(f"kind must be one of {KINDS}, got {self.kind!r}")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        grid = self.lambda_grid()
        if grid.size == 0:
            raise ConfigError("lambda grid is empty")
        if not np.all(np.isfinite(grid)) or np.any(grid < 0):
            raise ConfigError("lambdas must be finite and non-negative")
        if self.n_rollouts <= 0 or self.horizon < 0:
            raise ConfigError("n_rollouts must be positive and horizon non-negative")
        if self.kind == "infer-sweep":
            if len(self.goals) < 2:
                raise ConfigError("inference needs at least two goals")
            if not 0.0 <= self.epsilon <= 1.0:
                raise ConfigError("epsilon must lie in [0, 1]")
            if self.prefix_len <= 0 or self.n_traces < len(self.goals):
                raise ConfigError("need a positive prefix and at least one trace per goal")
        if self.model_path and self.perturbations:
            raise ConfigError("perturbations need a built-in environment, not a model file")
        if self.threads <= 0:
            raise ConfigError("threads must be positive")
        self.solver_config()

    def lambda_grid(self) -> np.ndarray:
        lam = self.lambdas
        if isinstance(lam, dict):
            try:
                return np.logspace(np.log10(lam["start"]), np.log10(lam["stop"]), int(lam["num"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(f"bad lambda grid spec {lam!r}") from exc
        if isinstance(lam, (int, float)):
            lam = [lam]
        return np.asarray(lam, dtype=np.float64)

    def solver_config(self) -> SolverConfig:
        try:
            return SolverConfig(**self.solver)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        doc = self.to_dict()
        doc.pop("threads")  # parallelism never changes results
        blob = json.dumps(doc, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**doc)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(doc)


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return "" if x is None else str(x)


def rows_to_csv(rows: Sequence[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def write_csv(path, rows: Sequence[dict], columns: Sequence[str]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(rows_to_csv(rows, columns))


def _stamp(cfg: ExperimentConfig) -> dict:
    return {"seed": cfg.seed, "config_hash": cfg.config_hash(), "version": __version__}


def _map(fn: Callable, items: list, threads: int) -> list:
    """Ordered map, optionally over a process pool."""
    if threads <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def nominal_model(cfg: ExperimentConfig) -> TabularPomdp:
    if cfg.model_path:
        from erpbvi.fileformat import parse_model_file

        return parse_model_file(cfg.model_path)
    return build(cfg.env, **cfg.env_params)


def _world(cfg: ExperimentConfig, nominal: TabularPomdp, pert: dict) -> TabularPomdp:
    if not pert:
        return nominal
    return build(cfg.env, **{**cfg.env_params, **pert})


def _perturbation_label(p: dict) -> str:
    return ",".join(f"{k}={p[k]}" for k in sorted(p)) or "nominal"


# --- solving ----------------------------------------------------------------


def _solve_erpbvi_job(args) -> SoftPolicy:
    model, lam, solver = args
    return erpbvi(model, float(lam), solver).policy


def solve_erpbvi_grid(model: TabularPomdp, lambdas, solver: SolverConfig, threads: int = 1) -> list:
    return _map(_solve_erpbvi_job, [(model, lam, solver) for lam in lambdas], threads)


def run_solve(cfg: ExperimentConfig) -> str:
    """Solve on the configured environment and return the policy file text."""
    model = nominal_model(cfg)
    meta = {**_stamp(cfg), "env": cfg.env, "method": cfg.method}
    solver = cfg.solver_config()
    if cfg.method == "pbvi":
        return dumps_policy(pbvi(model, solver).alpha_set, model.fingerprint, meta)
    lam = float(cfg.lambda_grid()[0])
    policy = erpbvi(model, lam, solver).policy
    return policy.to_json(model.fingerprint, meta)


def load_policy_file(text: str, n_actions: int):
    """Policy object for a policy file; alpha sets act greedily."""
    doc = json.loads(text)
    if doc.get("kind") == "qbank":
        return SoftPolicy.from_json(text)
    obj = loads_policy(text)
    if not isinstance(obj, AlphaSet):
        raise ConfigError("unsupported policy kind")
    return AlphaPolicy(obj, n_actions)


def run_evaluate(cfg: ExperimentConfig, policy_text: str | None = None) -> dict:
    """Evaluate a saved (or freshly solved) policy; returns the report as a dict."""
    model = nominal_model(cfg)
    if policy_text is None:
        if cfg.policy_path:
            policy_text = Path(cfg.policy_path).read_text()
        else:
            policy_text = run_solve(cfg)
    doc = json.loads(policy_text)
    fp = doc.get("model_fingerprint")
    if fp and fp != model.fingerprint:
        logger.warning("policy was solved on a different model (%s != %s)", fp, model.fingerprint)
    policy = load_policy_file(policy_text, model.n_actions)
    reports = []
    for pert in cfg.perturbations or [{}]:
        true_model = _world(cfg, model, pert)
        rep = evaluate(true_model, model, policy, cfg.n_rollouts, cfg.horizon, cfg.seed)
        reports.append(
            {
                "perturbation": _perturbation_label(pert),
                **rep.as_row(),
                "zero_likelihood_events": rep.zero_likelihood_events,
            }
        )
    return {**_stamp(cfg), "env": cfg.env, "policy": doc.get("metadata", {}), "reports": reports}


# --- robustness ---------------------------------------------------------------


@dataclass
class RobustnessResult:
    rows: list
    summary: list


def run_robustness_sweep(cfg: ExperimentConfig) -> RobustnessResult:
    """Train on the nominal model, evaluate every policy on every perturbation.

    All policies in one perturbation share rollout streams, so the
    differences in the summary are paired estimates.
    """
    nominal = build(cfg.env, **cfg.env_params)
    solver = cfg.solver_config()
    lambdas = cfg.lambda_grid()
    pbvi_policy = AlphaPolicy(pbvi(nominal, solver).alpha_set, nominal.n_actions)
    er_policies = solve_erpbvi_grid(nominal, lambdas, solver, cfg.threads)
    stamp = _stamp(cfg)
    uniforms = rollout_uniforms(cfg.seed, cfg.n_rollouts, cfg.horizon)

    rows, summary = [], []
    for pert in cfg.perturbations or [{}]:
        label = _perturbation_label(pert)
        true_model = _world(cfg, nominal, pert)

        def report(policy, method, lam):
            rep = evaluate(true_model, nominal, policy, cfg.n_rollouts, cfg.horizon, cfg.seed, uniforms=uniforms)
            rows.append(
                {
                    "env": cfg.env,
                    "perturbation": label,
                    "method": method,
                    "lambda": lam,
                    "mean_return": rep.mean_return,
                    "std_error": rep.std_error,
                    "n_rollouts": rep.n_rollouts,
                    "horizon": rep.horizon,
                    **stamp,
                }
            )
            return rep

        base = report(pbvi_policy, "pbvi", None)
        er = [report(p, "erpbvi", float(lam)) for p, lam in zip(er_policies, lambdas)]
        best = int(np.argmax([r.mean_return for r in er]))
        summary.append(
            {
                "env": cfg.env,
                "perturbation": label,
                "pbvi_mean": base.mean_return,
                "pbvi_std_error": base.std_error,
                "best_lambda": float(lambdas[best]),
                "best_erpbvi_mean": er[best].mean_return,
                "best_erpbvi_std_error": er[best].std_error,
                "delta": er[best].mean_return - base.mean_return,
                **stamp,
            }
        )
    return RobustnessResult(rows, summary)


# --- inference ------------------------------------------------------------------


@dataclass
class InferenceSweepResult:
    rows: list
    dataset: Any
    goal_ids: list


def _goal_models(cfg: ExperimentConfig) -> tuple[list, list]:
    ids, models = [], []
    for i, goal in enumerate(cfg.goals):
        if not isinstance(goal, dict):
            raise ConfigError("each goal must be an object with 'params'")
        ids.append(str(goal.get("id", i)))
        models.append(build(cfg.env, **{**cfg.env_params, **goal.get("params", {})}))
    return ids, models


def run_inference_sweep(cfg: ExperimentConfig) -> InferenceSweepResult:
    """Label traces from epsilon-random greedy PBVI, then score both methods per temperature.

    ERPBVI is retrained at every temperature; the PBVI baseline reuses one
    alpha set per goal and only changes the softmax temperature.
    """
    ids, models = _goal_models(cfg)
    solver = cfg.solver_config()
    lambdas = cfg.lambda_grid()
    pbvi_sets = [pbvi(m, solver).alpha_set for m in models]
    data = generate_inference_dataset(models, pbvi_sets, cfg.n_traces, cfg.prefix_len, cfg.epsilon, cfg.seed, ids)
    b0 = models[0].initial_belief
    stamp = _stamp(cfg)

    per_goal = [solve_erpbvi_grid(m, lambdas, solver, cfg.threads) for m in models]
    rows = []
    for k, lam in enumerate(lambdas):
        for method in METHODS:
            if method == "pbvi":
                hyps = [GoalHypothesis(g, m, SoftmaxLookaheadPolicy(s, m, lam)) for g, m, s in zip(ids, models, pbvi_sets)]
            else:
                hyps = [GoalHypothesis(g, m, pols[k]) for g, m, pols in zip(ids, models, per_goal)]
            results = infer_dataset(hyps, b0, data)
            tpr, fpr, acc = classification_metrics(results, data.labels, cfg.positive_goal)
            rows.append(
                {
                    "env": cfg.env,
                    "method": method,
                    "lambda": float(lam),
                    "tpr": tpr,
                    "fpr": fpr,
                    "accuracy": acc,
                    "n_traces": len(data),
                    "prefix_len": cfg.prefix_len,
                    **stamp,
                }
            )
    return InferenceSweepResult(rows, data, ids)


def dataset_rows(data) -> list:
    rows = []
    for i in range(len(data)):
        for t, (a, o) in enumerate(data.trace(i)):
            rows.append({"trace": i, "label": data.goal_ids[data.labels[i]], "step": t, "action": a, "observation": o})
    return rows


# --- visitation -------------------------------------------------------------------


def run_visitation(cfg: ExperimentConfig) -> list:
    """Per-state visit counts of the configured method on the (optionally perturbed) world."""
    model = nominal_model(cfg)
    solver = cfg.solver_config()
    if cfg.method == "pbvi":
        policy = AlphaPolicy(pbvi(model, solver).alpha_set, model.n_actions)
    else:
        policy = erpbvi(model, float(cfg.lambda_grid()[0]), solver).policy
    pert = cfg.perturbations[0] if cfg.perturbations else {}
    true_model = _world(cfg, model, pert)
    freqs, counts = visitation_counts(true_model, model, policy, cfg.n_rollouts, cfg.horizon, cfg.seed)
    labels = model.state_labels or [str(s) for s in range(model.n_states)]
    stamp = _stamp(cfg)
    return [
        {"state": s, "label": labels[s], "count": int(counts[s]), "frequency": float(freqs[s]), **stamp}
        for s in range(model.n_states)
    ]
