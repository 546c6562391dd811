"""Command line entry point: ``reconsider <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from reconsider.core import ContractViolation
from reconsider.decoder import DecodeConfig
from reconsider.harness import (
    STRATEGIES,
    compare,
    decode_instances,
    evaluate_taillard,
    heuristic_policy,
    summarize,
    write_results,
    write_summary,
)
from reconsider.policy import FEATURE_MAPS, FeaturizedSoftmaxPolicy, load_checkpoint
from reconsider.problems import (
    generate_instance,
    held_karp,
    read_best_known,
    read_jsonl,
    write_jsonl,
)
from reconsider.problems.oracles import HELD_KARP_MAX_NODES
from reconsider.sil import EpochConfig, SilConfig, run_sil

log = logging.getLogger("reconsider")


def _size_args(parser):
    parser.add_argument("--problem", choices=["tsp", "cvrp", "jssp"], required=True)
    parser.add_argument("--nodes", type=int, help="TSP nodes")
    parser.add_argument("--customers", type=int, help="CVRP customers")
    parser.add_argument("--capacity", type=float, help="CVRP vehicle capacity")
    parser.add_argument("--jobs", type=int, help="JSSP jobs")
    parser.add_argument("--machines", type=int, help="JSSP machines")


def _size(args) -> dict:
    need = {"tsp": ["nodes"], "cvrp": ["customers"], "jssp": ["jobs", "machines"]}[args.problem]
    missing = [f"--{k}" for k in need if getattr(args, k) is None]
    if missing:
        raise ValueError(f"{args.problem} needs {' and '.join(missing)}")
    size = {k: getattr(args, k) for k in need}
    if args.problem == "cvrp" and args.capacity is not None:
        size["capacity"] = args.capacity
    return size


def _policy_args(parser):
    group = parser.add_argument_group("policy")
    group.add_argument("--checkpoint", type=Path, help="theta checkpoint (JSON)")
    group.add_argument(
        "--policy", choices=["zero", "heuristic"], default="heuristic",
        help="built-in parameters when no checkpoint is given (default: heuristic)",
    )
    group.add_argument("--temperature", type=float, default=1.0)


def _policy(args, problem: str):
    if args.checkpoint is not None:
        policy = load_checkpoint(args.checkpoint)
        expected = FeaturizedSoftmaxPolicy.for_problem(problem).feature_map.name
        if not policy.feature_map.name.startswith(problem):
            raise ValueError(
                f"checkpoint uses feature map {policy.feature_map.name!r}, not one for {problem}"
                f" (e.g. {expected!r})"
            )
        return policy
    if args.policy == "heuristic":
        return heuristic_policy(problem, args.temperature)
    return FeaturizedSoftmaxPolicy.for_problem(problem, temperature=args.temperature)


def _decode_args(parser, default_strategy="step-reconsider"):
    parser.add_argument("--strategy", choices=STRATEGIES, default=default_strategy)
    parser.add_argument("--k", type=int, default=16, help="beam width / sample count")
    parser.add_argument("--s", type=int, help="step size (default: solution length)")
    parser.add_argument("--top-p", type=float)
    parser.add_argument("--seed", type=int, default=0)


def _common(parser):
    parser.add_argument("--workers", type=int, help="worker processes (env RECONSIDER_WORKERS)")
    parser.add_argument(
        "--no-timing", action="store_true", help="leave wall_time_ms empty (reproducible CSV)"
    )


def _load_instances(path):
    instances = read_jsonl(path)
    if not instances:
        raise ValueError(f"{path} holds no instances")
    problems = {inst.problem for inst in instances}
    if len(problems) > 1:
        raise ValueError(f"{path} mixes problems: {', '.join(sorted(problems))}")
    return instances, problems.pop()


def _references(args, instances):
    if args.best_known is not None:
        table = read_best_known(args.best_known)
        try:
            return [table[str(i)] for i in range(len(instances))]
        except KeyError as exc:
            raise ValueError(f"no best-known value for instance {exc.args[0]}") from None
    if args.optimal:
        if instances[0].problem != "tsp" or instances[0].n > HELD_KARP_MAX_NODES:
            raise ValueError(f"--optimal needs TSP instances with <= {HELD_KARP_MAX_NODES} nodes")
        return [held_karp(inst).cost for inst in instances]
    return None


# --- subcommands -------------------------------------------------------------


def cmd_generate(args) -> int:
    if args.count < 1:
        raise ValueError("--count must be positive")
    rng = np.random.default_rng(args.seed)
    size = _size(args)
    write_jsonl(args.out, [generate_instance(args.problem, size, rng) for _ in range(args.count)])
    log.info("wrote %d %s instances to %s", args.count, args.problem, args.out)
    return 0


def cmd_decode(args) -> int:
    DecodeConfig(args.k, args.s, args.top_p, args.seed)  # validates the flags
    instances, problem = _load_instances(args.instances)
    policy = _policy(args, problem)
    results = decode_instances(
        instances, policy, args.strategy, args.k, args.s, args.seed,
        budget_equalized=args.budget_equalized, top_p=args.top_p,
        references=_references(args, instances), timing=not args.no_timing,
        trace=args.trace is not None, workers=args.workers,
    )
    write_results(args.out, [row for row, _ in results])
    if args.trace is not None:
        with open(args.trace, "w", encoding="utf-8") as fh:
            for row, trace in results:
                fh.write(json.dumps({"instance_id": row.instance_id, "per_round_best": trace}) + "\n")
    return 0


def cmd_train(args) -> int:
    if args.feature_map is not None and args.feature_map not in FEATURE_MAPS:
        raise ValueError(f"unknown feature map {args.feature_map!r}")
    epoch = EpochConfig(
        instances_per_epoch=args.instances_per_epoch,
        batches_per_epoch=args.batches,
        batch_size=args.batch_size,
        decode=DecodeConfig(args.k, args.s, args.top_p),
        learning_rate=args.lr,
        gradient_clip_norm=args.clip,
        patience=args.patience,
        optimizer=args.optimizer,
    )
    config = SilConfig(
        problem=args.problem, size=_size(args), epochs=args.epochs,
        validation_size=args.validation_size, seed=args.seed, feature_map=args.feature_map,
        temperature=args.temperature, epoch=epoch, workers=args.workers or 1,
    )
    state, history = run_sil(config, args.out)
    last = history[-1]
    print(
        f"epochs={last.epoch} best_validation={state.best_score:.6f}"
        + (f" best_gap={last.best_gap:.3f}%" if last.best_gap is not None else "")
    )
    return 0


def cmd_compare(args) -> int:
    instances, problem = _load_instances(args.instances)
    policy = _policy(args, problem)
    rows = compare(
        instances, policy, args.k, args.s, args.strategies, args.reps, args.seed,
        args.budget_equalized, args.top_p, _references(args, instances),
        timing=not args.no_timing, workers=args.workers,
    )
    write_results(args.out, rows)
    summary = summarize(rows)
    if args.summary is not None:
        write_summary(args.summary, summary)
    for row in summary:
        print(
            f"k={row.k} s={row.s} {row.strategy:<16} objective {row.mean_objective:.4f}"
            f" +- {row.stderr_objective:.4f}  transitions {row.mean_transitions:.0f}"
        )
    return 0


def cmd_taillard(args) -> int:
    policy = _policy(args, "jssp")
    rows = evaluate_taillard(
        args.dir, args.best_known, policy, args.strategy, args.k, args.s, args.seed,
        timing=not args.no_timing, workers=args.workers,
    )
    write_results(args.out, rows)
    gaps = [r.gap_percent for r in rows]
    print(f"{len(rows)} instances, mean gap {np.mean(gaps):.3f}%")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reconsider", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write random instances as JSON lines")
    _size_args(p)
    p.add_argument("--count", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("decode", help="decode instances with one strategy")
    p.add_argument("--instances", type=Path, required=True)
    _decode_args(p)
    _policy_args(p)
    p.add_argument("--budget-equalized", action="store_true",
                   help="give single-round baselines k*ceil(h(s)) samples")
    p.add_argument("--best-known", type=Path, help="CSV of instance index,cost for gaps")
    p.add_argument("--optimal", action="store_true", help="gaps against Held-Karp (small TSP)")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--trace", type=Path, help="JSON lines of per-round incumbents")
    _common(p)
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("train", help="run self-improved training")
    _size_args(p)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--instances-per-epoch", type=int, default=512)
    p.add_argument("--batches", type=int, default=50)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--k", type=int, default=16)
    p.add_argument("--s", type=int, default=2)
    p.add_argument("--top-p", type=float)
    p.add_argument("--lr", type=float, default=2e-4)
    p.add_argument("--clip", type=float, default=1.0)
    p.add_argument("--patience", type=int, default=50)
    p.add_argument("--optimizer", choices=["adam", "sgd"], default="adam")
    p.add_argument("--validation-size", type=int, default=200)
    p.add_argument("--feature-map", help=f"one of {', '.join(FEATURE_MAPS)}")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", type=Path, required=True, help="run directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("compare", help="equal-budget sweep over k and s")
    p.add_argument("--instances", type=Path, required=True)
    p.add_argument("--k", type=int, nargs="+", default=[16])
    p.add_argument("--s", type=int, nargs="+", required=True)
    p.add_argument("--strategies", nargs="+", choices=STRATEGIES,
                   default=["step-reconsider", "sbs-plain", "iid"])
    p.add_argument("--reps", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--top-p", type=float)
    p.add_argument("--budget-equalized", action="store_true")
    p.add_argument("--best-known", type=Path)
    p.add_argument("--optimal", action="store_true")
    _policy_args(p)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--summary", type=Path, help="per-strategy mean and standard error CSV")
    _common(p)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("taillard", help="evaluate on a directory of Taillard files")
    p.add_argument("--dir", type=Path, required=True)
    p.add_argument("--best-known", type=Path, required=True, help="CSV name,cost")
    _decode_args(p, default_strategy="greedy")
    _policy_args(p)
    p.add_argument("--out", type=Path, required=True)
    _common(p)
    p.set_defaults(func=cmd_taillard)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ValueError, ContractViolation, OSError, KeyError) as exc:
        print(f"reconsider {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
