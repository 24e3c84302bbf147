"""Command-line driver: ``qpr <command> [--preset NAME | --config FILE] ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from . import experiments as ex
from .errors import ConfigError, QPRError

COMMANDS = {
    "groundstate": lambda cfg, a: ex.cmd_groundstate(cfg, a.threads, a.cache),
    "label": lambda cfg, a: ex.cmd_label(cfg, a.cache),
    "train": lambda cfg, a: ex.cmd_train(cfg, a.cache),
    "predict": lambda cfg, a: ex.cmd_predict(cfg, a.cache),
    "ptdist": lambda cfg, a: ex.cmd_ptdist(cfg, a.threads, a.cache),
    "shadow-baseline": lambda cfg, a: ex.cmd_shadow_baseline(cfg, a.threads, a.cache),
    "report": lambda cfg, a: ex.cmd_report(cfg),
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qpr", description="Quantum phase recognition experiments")
    p.add_argument("command", choices=[*COMMANDS, "run", "dump-config"],
                   help="pipeline step; 'run' chains groundstate, label, train and predict")
    p.add_argument("--config", help="JSON experiment config (may name a preset to extend)")
    p.add_argument("--preset", choices=ex.PRESETS, help="start from a built-in experiment")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--threads", type=int, default=1, help="worker threads for ground-state solves")
    p.add_argument("--out", help="output directory (overrides the config)")
    p.add_argument("--cache", help="ground-state cache directory (default: <out>/cache)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args) -> ex.ExperimentConfig:
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        cfg = ex.ExperimentConfig.load(args.config)
    elif args.preset:
        cfg = ex.preset(args.preset)
    else:
        raise ConfigError("a --config file or --preset is required")
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.out:
        changes["out"] = args.out
    return cfg.replace(**changes) if changes else cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        if args.command == "dump-config":
            print(cfg.to_json())
            return ex.EXIT_OK
        steps = ["groundstate", "label", "train", "predict"] if args.command == "run" else [args.command]
        code = ex.EXIT_OK
        for step in steps:
            result = COMMANDS[step](cfg, args)
            print(json.dumps({"command": step, "exit_code": result.exit_code,
                              "metrics": result.metrics}, sort_keys=True))
            code = max(code, result.exit_code)
            if result.exit_code != ex.EXIT_OK:
                break
        return code
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return ex.EXIT_CONFIG
    except ex.IncompleteGridError as exc:
        print(f"incomplete grid: {exc}", file=sys.stderr)
        return ex.EXIT_INCOMPLETE
    except QPRError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return ex.EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
