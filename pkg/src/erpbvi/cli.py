"""Command-line entry point.

Exit codes: 0 on success, 2 on invalid input (config, model file, flags),
3 when a solver or simulation step fails.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from erpbvi.envs import build
from erpbvi.errors import EmptyDataset, ErpbviError, ParseError, ValidationError
from erpbvi.experiments import (
    DATASET_COLUMNS,
    INFERENCE_COLUMNS,
    ROBUSTNESS_COLUMNS,
    SUMMARY_COLUMNS,
    VISITATION_COLUMNS,
    ExperimentConfig,
    dataset_rows,
    rows_to_csv,
    run_evaluate,
    run_inference_sweep,
    run_robustness_sweep,
    run_solve,
    run_visitation,
)
from erpbvi.fileformat import export_model_text

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3

_KIND = {
    "solve": "solve",
    "evaluate": "evaluate",
    "sweep-robustness": "robustness-sweep",
    "sweep-inference": "infer-sweep",
    "visitation": "visitation",
    "export-model": "solve",
}


def _parse_lambdas(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad lambda list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="erpbvi", description="Entropy-regularized point-based POMDP solving.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _KIND:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON experiment config")
        p.add_argument("--env", choices=("tiger", "gridworld", "crosswalk"))
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output path (stdout when omitted)")
        p.add_argument("--threads", type=int)
        p.add_argument("--lambda", dest="lambdas", type=_parse_lambdas, help="comma-separated temperatures")
        if name in ("solve", "evaluate", "visitation"):
            p.add_argument("--method", choices=("pbvi", "erpbvi"))
            p.add_argument("--model", help="model file to use instead of a built-in environment")
        if name == "evaluate":
            p.add_argument("--policy", help="policy file written by 'solve'")
    return parser


def _config(args) -> ExperimentConfig:
    doc = {}
    if args.config:
        doc = json.loads(Path(args.config).read_text())
        if not isinstance(doc, dict):
            raise ValidationError("config top level must be an object")
    doc["kind"] = _KIND[args.command]
    overrides = {
        "env": args.env,
        "seed": args.seed,
        "threads": args.threads,
        "lambdas": args.lambdas,
        "method": getattr(args, "method", None),
        "model_path": getattr(args, "model", None),
        "policy_path": getattr(args, "policy", None),
    }
    doc.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(doc)


def _emit(text: str, out: str | None, suffix: str = "") -> None:
    if out is None:
        sys.stdout.write(text)
        return
    path = Path(out)
    if suffix:
        path = path.with_name(path.stem + suffix + (path.suffix or ".csv"))
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def run(args) -> None:
    cfg = _config(args)
    cmd = args.command
    if cmd == "export-model":
        _emit(export_model_text(build(cfg.env, **cfg.env_params)), args.out)
    elif cmd == "solve":
        _emit(run_solve(cfg), args.out)
    elif cmd == "evaluate":
        _emit(json.dumps(run_evaluate(cfg), indent=2, sort_keys=True) + "\n", args.out)
    elif cmd == "sweep-robustness":
        res = run_robustness_sweep(cfg)
        _emit(rows_to_csv(res.rows, ROBUSTNESS_COLUMNS), args.out)
        _emit(rows_to_csv(res.summary, SUMMARY_COLUMNS), args.out if args.out else None, "_summary")
    elif cmd == "sweep-inference":
        res = run_inference_sweep(cfg)
        _emit(rows_to_csv(res.rows, INFERENCE_COLUMNS), args.out)
        if args.out:
            _emit(rows_to_csv(dataset_rows(res.dataset), DATASET_COLUMNS), args.out, "_dataset")
    elif cmd == "visitation":
        _emit(rows_to_csv(run_visitation(cfg), VISITATION_COLUMNS), args.out)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        run(args)
    except (ValidationError, ParseError, EmptyDataset, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ErpbviError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
