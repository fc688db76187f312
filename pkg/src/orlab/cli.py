"""
Command-line entry point.

    orlab gen-data --config exp.yaml --out runs/data
    orlab train-value --config exp.yaml --dataset runs/data/dataset.orld --out runs/value
    orlab extract --config exp.yaml --dataset ... --value runs/value/value.orlp --out runs/policy
    orlab eval --config exp.yaml --policy runs/policy/policy.orlp --eval-method opex --beta 0.3
    orlab matrix --config configs/matrix.yaml --out runs/matrix
    orlab pathologies --config configs/pathologies.yaml --out runs/pathologies
    orlab plot --csv runs/matrix/matrices.csv --out runs/matrix

Each invocation writes <out>/config.yaml (the effective configuration after
overrides) and <out>/run.orlab (the run session). The exit code is 0 only
when the stage succeeded and no harness job failed.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any

import yaml

from orlab.dispatcher import Dispatcher
from orlab.harness.config import apply_overrides, config_digest, load_mapping, parse_override
from orlab.session import RUN_FILE_NAME, RunSession
from orlab.stages import default_stages
from orlab.types import OrlabError, StageCall

logger = logging.getLogger(__name__)

COMMANDS = {
    "gen-data": "Generate a noisy-expert dataset",
    "train-value": "Train and freeze a value function",
    "extract": "Extract a policy from a frozen value function",
    "eval": "Evaluate a policy with a test-time method",
    "matrix": "Data-scaling matrices over value/policy data sizes",
    "sweep-coverage": "Scores over dataset size and sigma_data",
    "o2o": "Offline-to-online MSE tracking",
    "testtime": "Vanilla vs SfBC vs OPEX vs TTT",
    "representations": "Raw vs tanh-featurized goal-conditioned BC",
    "pathologies": "AWR overfit gap and action spread against DDPG+BC",
    "plot": "Re-render heatmaps from a matrices.csv",
}

# Flags that mirror RunConfig fields, as dotted config keys.
FIELD_FLAGS = {
    "env": "env.env_id",
    "layout": "env.layout",
    "start_region": "env.start_region",
    "eval_start_region": "env.eval_start_region",
    "n_transitions": "data.n_transitions",
    "sigma_data": "data.sigma_data",
    "data_seed": "data.seed",
    "objective": "value.objective",
    "value_steps": "value.steps",
    "method": "extraction.method",
    "extract_steps": "extraction.steps",
    "seed": "seed",
    "value_data": "value_data",
    "policy_data": "policy_data",
    "eval_every": "eval_every",
    "eval_episodes": "eval_episodes",
    "representation": "representation",
}


# =============================================================================
# PARSER
# =============================================================================


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", type=Path, help="YAML experiment file")
    parser.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="Override a config key (dotted path, YAML value); repeatable",
    )
    parser.add_argument("--out", type=Path, default=Path("runs/latest"), help="Output directory")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    fields = parser.add_argument_group("run config")
    fields.add_argument("--env")
    fields.add_argument("--layout")
    fields.add_argument("--start-region")
    fields.add_argument("--eval-start-region")
    fields.add_argument("--n-transitions", type=int)
    fields.add_argument("--sigma-data", type=float)
    fields.add_argument("--data-seed", type=int)
    fields.add_argument("--objective", choices=["iql", "sarsa", "crl"])
    fields.add_argument("--value-steps", type=int)
    fields.add_argument("--method", choices=["awr", "ddpg+bc", "sfbc"])
    fields.add_argument("--extract-steps", type=int)
    fields.add_argument("--seed", type=int)
    fields.add_argument("--value-data", type=int)
    fields.add_argument("--policy-data", type=int)
    fields.add_argument("--eval-every", type=int)
    fields.add_argument("--eval-episodes", type=int)
    fields.add_argument("--representation", choices=["raw", "tanh"])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="orlab", description="Desk-scale offline RL laboratory")
    sub = parser.add_subparsers(dest="command", required=True)
    parsers = {}
    for name, help_text in COMMANDS.items():
        parsers[name] = sub.add_parser(name, help=help_text)
        _common(parsers[name])

    for name in ("train-value", "extract", "eval"):
        parsers[name].add_argument("--dataset", type=Path, help="ORLD dataset file")
    parsers["extract"].add_argument("--value", type=Path, help="Value checkpoint")
    parsers["extract"].add_argument("--hyperparameter", type=float, help="AWR/DDPG+BC alpha or SfBC N")

    ev = parsers["eval"]
    ev.add_argument("--policy", type=Path, required=True, help="Policy checkpoint")
    ev.add_argument("--value", type=Path, help="Value checkpoint (sfbc, opex, ttt)")
    ev.add_argument("--eval-method", default="vanilla", choices=["vanilla", "sfbc", "opex", "ttt"])
    ev.add_argument("--beta", type=float, help="OPEX step size or TTT KL weight")
    ev.add_argument("--opex-steps", type=int)
    ev.add_argument("--sfbc-n", type=int)
    ev.add_argument("--episodes", type=int)
    ev.add_argument("--mse", action="store_true", help="Also measure oracle MSEs (needs --dataset)")

    parsers["plot"].add_argument("--csv", type=Path, required=True, help="matrices.csv to render")
    return parser


# =============================================================================
# ASSEMBLY
# =============================================================================


def effective_config(args: argparse.Namespace) -> dict[str, Any]:
    """File mapping, then field flags, then --set overrides."""
    mapping = load_mapping(args.config) if args.config else {}
    overrides = {
        key: getattr(args, flag) for flag, key in FIELD_FLAGS.items() if getattr(args, flag, None) is not None
    }
    overrides.update(dict(parse_override(text) for text in args.overrides))
    return apply_overrides(mapping, overrides)


def stage_params(args: argparse.Namespace, mapping: dict[str, Any]) -> dict[str, Any]:
    params: dict[str, Any] = {"config": mapping, "out": str(args.out)}
    for name in ("dataset", "value", "policy", "csv"):
        if getattr(args, name, None) is not None:
            params[name] = str(getattr(args, name))
    if args.command == "extract" and args.hyperparameter is not None:
        params["hyperparameter"] = args.hyperparameter
    if args.command == "eval":
        params.update(
            method=args.eval_method,
            beta=args.beta,
            opex_steps=args.opex_steps,
            sfbc_n=args.sfbc_n,
            episodes=args.episodes,
            mse=args.mse,
        )
    return params


# =============================================================================
# MAIN
# =============================================================================


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        mapping = effective_config(args)
    except OrlabError as exc:
        logger.error("%s", exc)
        return 2

    out: Path = args.out
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.yaml").write_text(yaml.safe_dump(mapping, sort_keys=True), encoding="utf-8")

    session = RunSession()
    session.set("command", args.command)
    session.set("config", mapping)
    session.set("config_digest", config_digest(mapping))

    dispatcher = Dispatcher()
    for stage in default_stages():
        dispatcher.register(stage)
    result = dispatcher.dispatch_single(StageCall(args.command, stage_params(args, mapping)), session)
    session.save(out / RUN_FILE_NAME)

    payload = result.result if result.success else result.error
    print(json.dumps(payload, indent=2, sort_keys=True, default=str))
    if not result.success:
        logger.error("%s failed: %s", args.command, result.error["message"] if result.error else "unknown error")
        return 1
    failed = result.result.get("failed_jobs", 0) if isinstance(result.result, dict) else 0
    if failed:
        logger.error("%d harness job(s) failed; see %s", failed, out / RUN_FILE_NAME)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
