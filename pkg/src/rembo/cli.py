"""Command line entry point: ``rembo train | eval | plot | oracle``.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
"""

import argparse
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from .config import ALGORITHMS, ConfigError, load_config
from .envs import ENV_IDS, make_env
from .eval.oracle import exact_ic_matrix, exact_ir_matrix, exact_welfare_matrix
from .game import TableMechanism
from .nn import TrainingDiverged

OUTPUT_ROOT_ENV = "REMBO_OUTPUT_ROOT"
EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


def _output_root():
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "runs"))


def _bool_flag(p, name, help_text):
    p.add_argument(f"--{name}", dest=name.replace("-", "_"), action=argparse.BooleanOptionalAction, default=None, help=help_text)


def build_parser():
    parser = argparse.ArgumentParser(prog="rembo", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one configuration over several seeds")
    t.add_argument("--env", choices=None, help=f"environment id ({', '.join(ENV_IDS)})")
    t.add_argument("--algo", help=f"algorithm ({', '.join(ALGORITHMS)})")
    t.add_argument("--config", type=Path, help="config file; shipped defaults fill missing keys")
    _bool_flag(t, "rembo", "add the IC/IR terms (off = baseline)")
    t.add_argument("--seeds", type=int, help="number of seeds, numbered from --first-seed")
    t.add_argument("--first-seed", type=int, default=0)
    for name, typ in (
        ("alpha0", float), ("alpha1", float), ("alpha2", float), ("lr-actor", float), ("lr-critic", float),
        ("tau", float), ("batch-size", int), ("buffer-size", int), ("gamma", float), ("total-steps", int),
        ("eval-interval", int), ("eval-episodes", int), ("horizon", int), ("agent-sample", int),
        ("checkpoint-interval", int), ("jobs", int), ("optimizer", str), ("output-dir", str),
    ):
        t.add_argument(f"--{name}", type=typ)
    _bool_flag(t, "train-deviation", "train the deviation critics")
    t.add_argument("--no-resume", action="store_true", help="ignore existing checkpoints")

    e = sub.add_parser("eval", help="aggregate an experiment directory")
    e.add_argument("experiment", type=Path)
    e.add_argument("--seeds", type=int, help="expected seed count (warn when fewer completed)")
    e.add_argument("--no-plot", action="store_true")

    p = sub.add_parser("plot", help="render an aggregate CSV as SVG panels")
    p.add_argument("csv", type=Path)
    p.add_argument("-o", "--output", type=Path)

    o = sub.add_parser("oracle", help="exact IC/IR of a mechanism table on a matrix game")
    o.add_argument("--env", required=True, choices=[i for i in ENV_IDS if make_env(i).is_matrix])
    o.add_argument("--table", required=True, help='JSON (or @file) with "on_path" and optional "opt_out"')
    return parser


def _overrides(args):
    keys = (
        "algo", "rembo", "alpha0", "alpha1", "alpha2", "lr_actor", "lr_critic", "tau", "batch_size", "buffer_size",
        "gamma", "total_steps", "eval_interval", "eval_episodes", "horizon", "agent_sample", "checkpoint_interval",
        "jobs", "optimizer", "output_dir", "train_deviation",
    )
    out = {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}
    if args.seeds is not None:
        if args.seeds < 1:
            raise ConfigError("--seeds must be positive")
        out["seeds"] = ",".join(str(args.first_seed + k) for k in range(args.seeds))
    return out


def cmd_train(args):
    from .experiment import run_train

    overrides = _overrides(args)
    if args.config is None and args.env is None:
        raise ConfigError("train needs --env or --config")
    cfg = load_config(args.env, args.config, overrides)
    if "output_dir" not in overrides:
        cfg = cfg.replace(output_dir=str(_output_root() / cfg.env))
    dirs = run_train(cfg, resume=not args.no_resume)
    for d in dirs:
        print(d)
    return EXIT_OK


def cmd_eval(args):
    from .experiment import AGGREGATE_FILE, run_eval

    run_eval(args.experiment, expected_seeds=args.seeds)
    out = args.experiment / AGGREGATE_FILE
    print(out)
    if not args.no_plot:
        from .plotting import plot_csv

        print(plot_csv(out))
    return EXIT_OK


def cmd_plot(args):
    from .plotting import plot_csv

    print(plot_csv(args.csv, args.output))
    return EXIT_OK


def _read_table(spec):
    text = Path(spec[1:]).read_text() if spec.startswith("@") else spec
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"mechanism table is not valid JSON: {exc}") from None
    if "on_path" not in data:
        raise ConfigError('mechanism table needs an "on_path" entry')
    return data


def cmd_oracle(args):
    game = make_env(args.env)
    data = _read_table(args.table)
    try:
        mech = TableMechanism(data["on_path"], data.get("opt_out"))
        expect = tuple(game.spec.type_counts) + (game.spec.n_agents,)
        if mech.on_path_table.shape != expect:
            raise ValueError(f"on_path table must have shape {expect}")
        if mech.on_path_table.min() < 0 or mech.on_path_table.max() >= game.spec.max_actions:
            raise ValueError("on_path table holds an invalid action")
        ic = exact_ic_matrix(game, mech)
        ir = exact_ir_matrix(game, mech)
    except (ValueError, IndexError) as exc:
        raise ConfigError(str(exc)) from None
    result = {
        "ic_per_agent": ic.tolist(),
        "ir_per_agent": ir.tolist(),
        "ic_max": float(np.max(ic)),
        "ir_max": float(np.max(ir)),
        "welfare_per_step": exact_welfare_matrix(game, mech),
    }
    print(json.dumps(result))
    return EXIT_OK


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "plot": cmd_plot, "oracle": cmd_oracle}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    warnings.simplefilter("default")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID if args.command in ("eval", "plot") else EXIT_RUNTIME
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
