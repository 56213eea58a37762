"""Command line entry points.

Subcommands: ``run`` (drive an experiment from a JSON config), ``replay``
(prime a snapshot and free-run its own predictions), ``inspect`` (dump
cluster centers, sequence graphs, and usage tables), and ``check-config``
(validate a config and print a structural summary).

Exit codes: 0 success, 2 configuration or I/O problem, 3 numeric failure
(non-finite observation) during a run.
"""
from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .config import ConfigError
from .environments import build_environment
from .harness import (
    NanError,
    check_config,
    inspect_dump,
    replay_rollout,
    run_experiment,
)
from .snapshot import SnapshotError, load_snapshot

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _load_json(path: str) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _cutoff_arg(value: str):
    if value == "auto":
        return value
    if value.lower() in ("none", "null", "never"):
        return None
    return int(value)


def _cmd_run(args) -> int:
    config = _load_json(args.config)
    result = run_experiment(
        config,
        seed=args.seed,
        steps=args.steps,
        out_dir=args.out,
        learning_cutoff=args.learning_cutoff,
    )
    total = float(result.rewards.sum())
    print(f"ran {result.steps} steps (seed {result.seed})")
    print(f"total reward {total:g}, injected actions {result.injected_actions}")
    print(f"trace digest {result.trace_digest}")
    if args.out:
        print(f"metrics and snapshot written to {args.out}")
    return EXIT_OK


def _cmd_replay(args) -> int:
    network, extra = load_snapshot(args.snapshot)
    config = extra.get("config")
    if not config or "environment" not in config:
        raise SnapshotError(f"{args.snapshot}: snapshot carries no environment config")
    seed = args.seed if args.seed is not None else extra.get("seed", 0)
    env = build_environment(config["environment"], seed=seed * 3 + 1)
    primed, generated = replay_rollout(network, env, args.prime, args.generate)
    print(f"primed {len(primed)} steps, generated {len(generated)} steps")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        for name, rows in (("primed", primed), ("generated", generated)):
            path = os.path.join(args.out, f"replay_{name}.csv")
            with open(path, "w") as fh:
                for row in rows:
                    fh.write(",".join(repr(v) for v in row) + "\n")
            print(f"wrote {path}")
    elif generated:
        head = np.array2string(generated[0], precision=3, threshold=12)
        print(f"first generated observation: {head}")
    return EXIT_OK


def _cmd_inspect(args) -> int:
    network, _ = load_snapshot(args.snapshot)
    written = inspect_dump(network, args.out)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def _cmd_check_config(args) -> int:
    config = _load_json(args.config)
    summary = check_config(config)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="expertnet",
        description="Event-driven hierarchies of clustering experts.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run an experiment from a config file")
    p_run.add_argument("--config", required=True, help="JSON config path")
    p_run.add_argument("--seed", type=int, default=0)
    p_run.add_argument("--out", default=None, help="directory for metrics and snapshot")
    p_run.add_argument("--steps", type=int, default=None, help="override run.steps")
    p_run.add_argument(
        "--learning-cutoff",
        type=_cutoff_arg,
        default="auto",
        help="step to freeze learning at; 'none' disables (default: half the run)",
    )
    p_run.set_defaults(func=_cmd_run)

    p_replay = sub.add_parser("replay", help="free-run a snapshot's predictions")
    p_replay.add_argument("--snapshot", required=True)
    p_replay.add_argument("--prime", type=int, default=10, help="env steps before free-running")
    p_replay.add_argument("--generate", type=int, default=20, help="closed-loop steps")
    p_replay.add_argument("--seed", type=int, default=None, help="override snapshot seed")
    p_replay.add_argument("--out", default=None, help="directory for replay CSVs")
    p_replay.set_defaults(func=_cmd_replay)

    p_inspect = sub.add_parser("inspect", help="dump centers, graphs, usage tables")
    p_inspect.add_argument("--snapshot", required=True)
    p_inspect.add_argument("--out", required=True)
    p_inspect.set_defaults(func=_cmd_inspect)

    p_check = sub.add_parser("check-config", help="validate a config file")
    p_check.add_argument("--config", required=True)
    p_check.set_defaults(func=_cmd_check_config)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NanError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, SnapshotError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
