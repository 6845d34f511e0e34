"""Batch command-line interface.

Subcommands: train, eval, ablate, verify-theory, plot. Exit codes: 0 on
success, 1 on scientific failure (a theorem or threshold miss), 2 on usage
errors, 3 on numeric aborts. Config values can come from a flat key-value
file (--config) and per-key overrides (--<dotted.key> <value>); the MRQ_SEED
environment variable supplies a default seed.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import (
    RunConfig,
    coerce,
    key_to_field,
    parse_ablation_list,
    parse_config_file,
    resolve_config,
)
from .errors import ConfigurationError, ContractViolation, NumericError

EXIT_OK = 0
EXIT_SCIENTIFIC = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def parse_overrides(extra: list[str]) -> dict:
    """Turn leftover ``--dotted.key value`` pairs into config field values."""
    overrides = {}
    i = 0
    while i < len(extra):
        token = extra[i]
        if not token.startswith("--"):
            raise ConfigurationError(f"unexpected argument {token!r}")
        key = token[2:]
        if "=" in key:
            key, _, raw = key.partition("=")
        else:
            if i + 1 >= len(extra):
                raise ConfigurationError(f"missing value for override {token!r}")
            raw = extra[i + 1]
            i += 1
        field = key_to_field(key)
        overrides[field] = coerce(field, raw)
        i += 1
    return overrides


def build_config(args, extra: list[str]):
    file_values = parse_config_file(args.config) if args.config else {}
    overrides = parse_overrides(extra)
    if "seed" not in overrides and "seed" not in file_values:
        env_seed = os.environ.get("MRQ_SEED")
        if env_seed is not None:
            overrides["seed"] = int(env_seed)
    return resolve_config(file_values, overrides)


def cmd_train(args, extra) -> int:
    from .runner import train_run

    cfg, applied = build_config(args, extra)
    result = train_run(cfg, args.out, overrides=applied)
    print(
        f"trained {result.steps} steps ({result.episodes} episodes); "
        f"final eval return: {result.final_eval_return}"
        + (" [stopped early]" if result.stopped_early else "")
    )
    print(f"metrics: {result.metrics_path}")
    return EXIT_OK


def cmd_eval(args, extra) -> int:
    import torch

    from .agent import MRQAgent
    from .envs import make_env
    from .runner import evaluate

    cfg, _ = build_config(args, extra)
    env = make_env(cfg.env_name, cfg.env_config(), seed=cfg.seed)
    agent = MRQAgent(cfg, env.spec)
    agent.load(args.checkpoint)
    mean_return = evaluate(agent, env, args.episodes)
    print(f"mean return over {args.episodes} episodes: {mean_return:.6f}")
    return EXIT_OK


def cmd_ablate(args, extra) -> int:
    from .ablate import format_report, run_sweep
    from .config import ABLATIONS

    cfg, _ = build_config(args, extra)
    if args.variants.strip().lower() == "all":
        variants = list(ABLATIONS)
    else:
        requested = parse_ablation_list(args.variants)
        if len(requested) != len([v for v in args.variants.split(",") if v.strip()]):
            print("warning: duplicate variant names were deduplicated", file=sys.stderr)
        variants = requested
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    report = run_sweep(cfg, variants, seeds, args.out, workers=args.workers)
    print(format_report(report))
    return EXIT_OK


def cmd_verify_theory(args, extra) -> int:
    from .theory import verify_theorems

    if extra:
        raise ConfigurationError(f"unexpected arguments: {extra}")
    if args.count < 1:
        raise ConfigurationError("--count must be at least 1")
    report = verify_theorems(
        count=args.count,
        d=args.dim,
        n_states=args.states,
        n_actions=args.actions,
        gamma=args.gamma,
        seed=args.seed,
    )
    print(f"instances: {report.instances}  skipped (singular): {report.skipped}")
    print(f"max ||w_mf - w_mb||_inf: {report.max_fixed_point_gap:.3e}")
    print(f"max truncated-series gap: {report.max_series_gap:.3e}")
    print(
        f"value-error bound failures: {report.bound_failures}  "
        f"worst margin (VE - bound): {report.max_bound_margin:.3e}"
    )
    print(f"max identity-abstraction value gap: {report.max_value_gap_identity:.3e}")
    if not report.ok:
        print(f"FAILED instance seeds: {report.failed_seeds}", file=sys.stderr)
        return EXIT_SCIENTIFIC
    return EXIT_OK


def cmd_plot(args, extra) -> int:
    from .plotting import plot_metrics

    if extra:
        raise ConfigurationError(f"unexpected arguments: {extra}")
    missing = [f for f in args.metrics if not Path(f).exists()]
    if missing:
        raise ConfigurationError(f"metrics files not found: {missing}")
    written = plot_metrics(args.metrics, args.out)
    for path in written:
        print(f"wrote {path}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mrq", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run the training loop")
    train.add_argument("--config", help="flat key-value config file")
    train.add_argument("--out", default="runs/train", help="output directory")
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--episodes", type=int, default=10)
    ev.add_argument("--config", help="flat key-value config file")
    ev.set_defaults(func=cmd_eval)

    ab = sub.add_parser("ablate", help="baseline + design variants over shared seeds")
    ab.add_argument("--variants", default="all", help="comma list of switches, or 'all'")
    ab.add_argument("--seeds", default="0,1,2")
    ab.add_argument("--workers", type=int, default=1)
    ab.add_argument("--config", help="flat key-value config file")
    ab.add_argument("--out", default="runs/ablate")
    ab.set_defaults(func=cmd_ablate)

    vt = sub.add_parser("verify-theory", help="exact checks on random linear MDPs")
    vt.add_argument("--count", type=int, default=100)
    vt.add_argument("--dim", type=int, default=6)
    vt.add_argument("--states", type=int, default=10)
    vt.add_argument("--actions", type=int, default=3)
    vt.add_argument("--gamma", type=float, default=0.99)
    vt.add_argument("--seed", type=int, default=int(os.environ.get("MRQ_SEED", "0")))
    vt.set_defaults(func=cmd_verify_theory)

    pl = sub.add_parser("plot", help="learning curves with bootstrap CI bands")
    pl.add_argument("metrics", nargs="+", help="metrics JSONL files")
    pl.add_argument("--out", default="plots")
    pl.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args, extra = parser.parse_known_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK
    try:
        return args.func(args, extra)
    except (ConfigurationError, ContractViolation) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as e:
        print(f"numeric abort: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
