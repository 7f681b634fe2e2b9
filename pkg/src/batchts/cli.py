"""Command line entry point: ``batchts {run,sweep,compare,check} CONFIG``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from batchts import harness
from batchts.errors import BatchTSError
from batchts.environments import make_environment


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="batchts", description=__doc__)
    sub = p.add_subparsers(dest="mode", required=True)
    for mode, help_ in [("run", "simulate one policy and write a summary CSV"),
                        ("sweep", "vary N or T and write batch counts"),
                        ("compare", "simulate every listed policy, one CSV each"),
                        ("check", "simulate with per-round invariant checks")]:
        sp = sub.add_parser(mode, help=help_)
        sp.add_argument("config", type=Path)
        sp.add_argument("--seed", type=int, help="base seed (overrides config)")
        sp.add_argument("--out", help="output CSV path (overrides config)")
        sp.add_argument("--runs", type=int, help="replications (overrides config)")
        sp.add_argument("--jobs", type=int, help="runs executed in parallel threads")
        sp.add_argument("--per-round", metavar="PATH",
                        help="also write per-round data of the first run")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _load(args) -> harness.ExperimentConfig:
    cfg = harness.ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.runs is not None:
        cfg.runs = args.runs
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.out is not None:
        cfg.out = args.out
    cfg.mode = args.mode
    cfg.__post_init__()
    if cfg.out is None:
        cfg.out = str(args.config.with_suffix("")) + f"_{args.mode}.csv"
    return cfg


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
        return _dispatch(cfg, args)
    except BatchTSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (OSError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def _dispatch(cfg: harness.ExperimentConfig, args) -> int:
    if cfg.mode == "sweep":
        rows, r2 = harness.sweep(cfg)
        path = harness.emit_sweep_csv(rows, cfg.out)
        print(f"wrote {path} (R^2 of batch count fit: {r2:.4f})")
        return 0

    if cfg.mode == "run" and len(cfg.policies) > 1:
        cfg.policies = cfg.policies[:1]
    results = harness.run_experiment(cfg)

    if cfg.mode == "check":
        env = make_environment(cfg.env, cfg.base_dir)
        problems = []
        for spec in cfg.policies:
            problems += harness.check_records(results[harness.policy_label(spec)], spec,
                                              env.n_arms)
        for line in problems:
            print(line)
        total = sum(len(r) for r in results.values())
        print(f"checked {total} runs: {len(problems)} problems")
        return 1 if problems else 0

    for label, records in results.items():
        path = cfg.out if cfg.mode == "run" else harness.suffixed(cfg.out, label)
        harness.emit_summary_csv(harness.aggregate(records), path)
        print(f"wrote {path}")
        if args.per_round:
            rp = args.per_round if cfg.mode == "run" else harness.suffixed(args.per_round, label)
            harness.emit_rounds_csv(records[0], rp)
            print(f"wrote {rp}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
