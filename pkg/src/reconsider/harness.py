"""Baselines, equal-budget comparisons and result files."""
from __future__ import annotations

import csv
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from reconsider.core import NEG_INF, Instance, Solution, rollout
from reconsider.decoder import DecodeConfig, decode, equalized_sample_count
from reconsider.policy import FeaturizedSoftmaxPolicy, Policy
from reconsider.problems import gap_percent, read_best_known, read_taillard
from reconsider.sbs import sbs_sample
from reconsider.tree import SearchTree, paused_gc

STRATEGIES = ("step-reconsider", "sbs-plain", "iid", "greedy", "beam-search")
WORKERS_ENV = "RECONSIDER_WORKERS"

# hand-set parameters for the default feature maps; a reasonable starting
# point for decoding without a trained checkpoint
HEURISTIC_THETA = {
    "tsp-v1": [3.0, 0, 0, 0, 0, 0, 2.0, 0, 0, 0, 0, 0, 0, 0],
    "cvrp-v1": [8.0, 0, 0, 0, -0.5, 0],
    "jssp-v1": [0.25, 0.5, 0, 1.5, 0],
}


def default_workers() -> int:
    value = os.environ.get(WORKERS_ENV, "1")
    try:
        workers = int(value)
    except ValueError:
        raise ValueError(f"{WORKERS_ENV} must be an integer, got {value!r}") from None
    return max(1, workers)


def heuristic_policy(problem: str, temperature: float = 1.0) -> FeaturizedSoftmaxPolicy:
    policy = FeaturizedSoftmaxPolicy.for_problem(problem, temperature=temperature)
    return policy.with_theta(HEURISTIC_THETA[policy.feature_map.name])


# --- baselines ---------------------------------------------------------------


def baseline_iid_sample(
    instance: Instance, policy: Policy, count: int, rng: np.random.Generator
) -> Solution:
    """Best of ``count`` independent rollouts (duplicates allowed)."""
    best = Solution((), NEG_INF)
    for _ in range(count):
        sol = rollout(instance, policy, "sample", rng)
        if sol.objective > best.objective or not best.decisions:
            best = sol
    return best


def baseline_sbs_plain(
    instance: Instance, policy: Policy, count: int, rng: np.random.Generator,
    top_p: float | None = None,
) -> tuple[Solution, int]:
    """One SBS round of width ``count`` from the root; returns (best, #leaves)."""
    with paused_gc():
        leaves = sbs_sample(SearchTree(instance, policy), count, rng, top_p)
    return _best_of(instance, leaves), len(leaves)


def baseline_beam_search(instance: Instance, policy: Policy, width: int) -> tuple[Solution, int]:
    """Deterministic beam search: the SBS machinery with the noise switched off."""
    with paused_gc():
        leaves = sbs_sample(SearchTree(instance, policy), width, None, perturb=False)
    return _best_of(instance, leaves), len(leaves)


def _best_of(instance: Instance, leaves) -> Solution:
    best = Solution((), NEG_INF)
    for leaf in leaves:
        value = instance.objective(leaf.decisions)
        if value > best.objective or not best.decisions:
            best = Solution(leaf.decisions, value)
    return best


# --- result rows -------------------------------------------------------------


@dataclass
class ResultRow:
    instance_id: str
    strategy: str
    best_objective: float
    gap_percent: float | None
    wall_time_ms: float | None
    transitions: int
    seed: int
    k: int | None = None
    s: int | None = None
    rep: int = 0


RESULT_FIELDS = [f.name for f in fields(ResultRow)]


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_results(path, rows: Iterable[ResultRow]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_FIELDS)
        for row in rows:
            writer.writerow([_fmt(v) for v in asdict(row).values()])


def read_results(path) -> list[ResultRow]:
    casts = {
        "best_objective": float, "gap_percent": float, "wall_time_ms": float,
        "transitions": int, "seed": int, "k": int, "s": int, "rep": int,
    }
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for record in csv.DictReader(fh):
            values = {
                key: (casts[key](v) if v != "" else None) if key in casts else v
                for key, v in record.items()
            }
            rows.append(ResultRow(**values))
    return rows


# --- running strategies ------------------------------------------------------


@dataclass(frozen=True)
class Task:
    instance: Instance
    instance_id: str
    strategy: str
    policy: Policy
    k: int
    s: int | None
    seed: int
    rep: int = 0
    budget_equalized: bool = True
    top_p: float | None = None
    reference: float | None = None  # best-known cost for the gap column
    timing: bool = True
    trace: bool = False


def instance_rng(seed: int, rep: int, index: int) -> np.random.Generator:
    """Independent stream per (seed, repetition, instance)."""
    return np.random.default_rng(np.random.SeedSequence([seed, rep, index]))


def run_task(task: Task, index: int) -> tuple[ResultRow, list[float] | None]:
    inst, n = task.instance, task.instance.n
    s = n if task.s is None else min(task.s, n)
    count = equalized_sample_count(task.k, s, n) if task.budget_equalized else task.k
    rng = instance_rng(task.seed, task.rep, index)
    trace = None
    start = time.perf_counter()
    if task.strategy == "step-reconsider":
        result = decode(inst, task.policy, DecodeConfig(task.k, s, task.top_p, task.seed), rng)
        best, transitions = result.best, result.transitions
        trace = result.per_round_best
    elif task.strategy == "sbs-plain":
        best, returned = baseline_sbs_plain(inst, task.policy, count, rng, task.top_p)
        transitions = returned * n
    elif task.strategy == "iid":
        best = baseline_iid_sample(inst, task.policy, count, rng)
        transitions = count * n
    elif task.strategy == "greedy":
        best, transitions = rollout(inst, task.policy), n
    elif task.strategy == "beam-search":
        best, returned = baseline_beam_search(inst, task.policy, count)
        transitions = returned * n
    else:
        raise ValueError(f"unknown strategy {task.strategy!r}; choose from {', '.join(STRATEGIES)}")
    elapsed = (time.perf_counter() - start) * 1000.0
    gap = None
    if task.reference is not None and math.isfinite(best.objective):
        gap = gap_percent(-best.objective, task.reference)
    row = ResultRow(
        task.instance_id, task.strategy, best.objective, gap,
        elapsed if task.timing else None, int(transitions), task.seed, task.k, s, task.rep,
    )
    return row, (trace if task.trace else None)


def _run_indexed(args):
    task, index = args
    return run_task(task, index)


def run_tasks(tasks: Sequence[tuple[Task, int]], workers: int | None = None):
    """Run ``(task, instance index)`` pairs, fanning out over processes if asked.

    Results come back in input order; each task draws from its own stream,
    so the output does not depend on ``workers``.
    """
    workers = default_workers() if workers is None else max(1, workers)
    if workers == 1 or len(tasks) < 2:
        return [run_task(t, i) for t, i in tasks]
    with ProcessPoolExecutor(workers) as pool:
        return list(pool.map(_run_indexed, tasks, chunksize=max(1, len(tasks) // (8 * workers))))


def decode_instances(
    instances: Sequence[Instance],
    policy: Policy,
    strategy: str,
    k: int,
    s: int | None,
    seed: int,
    budget_equalized: bool = False,
    top_p: float | None = None,
    references: Sequence[float | None] | None = None,
    names: Sequence[str] | None = None,
    timing: bool = True,
    trace: bool = False,
    workers: int | None = None,
):
    tasks = []
    for i, inst in enumerate(instances):
        ref = references[i] if references is not None else None
        name = names[i] if names is not None else str(i)
        tasks.append((Task(inst, name, strategy, policy, k, s, seed, 0, budget_equalized,
                           top_p, ref, timing, trace), i))
    return run_tasks(tasks, workers)


# --- equal-budget comparison -------------------------------------------------


@dataclass
class SummaryRow:
    k: int
    s: int
    strategy: str
    mean_objective: float
    stderr_objective: float
    mean_gap: float | None
    stderr_gap: float | None
    mean_transitions: float
    reps: int


def compare(
    instances: Sequence[Instance],
    policy: Policy,
    k_values: Sequence[int],
    s_values: Sequence[int],
    strategies: Sequence[str] = ("step-reconsider", "sbs-plain", "iid"),
    reps: int = 10,
    seed: int = 0,
    budget_equalized: bool = True,
    top_p: float | None = None,
    references: Sequence[float | None] | None = None,
    timing: bool = True,
    workers: int | None = None,
) -> list[ResultRow]:
    """Every strategy on every instance for each (k, s) grid point and repetition.

    Instances are shared by all repetitions; only the sampling streams change.
    """
    for name in strategies:
        if name not in STRATEGIES:
            raise ValueError(f"unknown strategy {name!r}")
    tasks = []
    for k in k_values:
        for s in s_values:
            for rep in range(reps):
                for i, inst in enumerate(instances):
                    ref = references[i] if references is not None else None
                    for name in strategies:
                        tasks.append((Task(inst, str(i), name, policy, k, s, seed, rep,
                                           budget_equalized, top_p, ref, timing), i))
    return [row for row, _ in run_tasks(tasks, workers)]


def _mean_se(values) -> tuple[float, float]:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return float(values.mean()), math.nan
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def summarize(rows: Sequence[ResultRow]) -> list[SummaryRow]:
    """Mean and standard error over repetitions of the per-repetition mean."""
    groups: dict[tuple, dict[int, list[ResultRow]]] = {}
    for row in rows:
        groups.setdefault((row.k, row.s, row.strategy), {}).setdefault(row.rep, []).append(row)
    out = []
    for (k, s, strategy), by_rep in groups.items():
        objectives = [np.mean([r.best_objective for r in rs]) for rs in by_rep.values()]
        mean, se = _mean_se(objectives)
        gaps = [[r.gap_percent for r in rs] for rs in by_rep.values()]
        mean_gap = se_gap = None
        if all(g is not None for rep_gaps in gaps for g in rep_gaps):
            mean_gap, se_gap = _mean_se([np.mean(g) for g in gaps])
        transitions = np.mean([r.transitions for rs in by_rep.values() for r in rs])
        out.append(SummaryRow(k, s, strategy, mean, se, mean_gap, se_gap, float(transitions),
                              len(by_rep)))
    return out


def paired_difference(rows: Sequence[ResultRow], better: str, other: str) -> tuple[float, float]:
    """Mean and standard error over repetitions of the per-repetition difference
    of mean objectives, ``better - other``."""
    per_rep: dict[tuple, dict[str, list[float]]] = {}
    for row in rows:
        if row.strategy in (better, other):
            key = (row.k, row.s, row.rep)
            per_rep.setdefault(key, {}).setdefault(row.strategy, []).append(row.best_objective)
    diffs = [np.mean(v[better]) - np.mean(v[other]) for v in per_rep.values()]
    if not diffs:
        raise ValueError(f"no paired rows for {better!r} and {other!r}")
    return _mean_se(diffs)


def write_summary(path, summary: Iterable[SummaryRow]) -> None:
    names = [f.name for f in fields(SummaryRow)]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(names)
        for row in summary:
            writer.writerow([_fmt(v) for v in asdict(row).values()])


# --- Taillard ----------------------------------------------------------------


def load_taillard_dir(directory) -> tuple[list[str], list[Instance]]:
    """Every ``*.txt`` file in ``directory``, sorted by name; ids are file stems."""
    paths = sorted(Path(directory).glob("*.txt"))
    if not paths:
        raise ValueError(f"no Taillard files (*.txt) in {directory}")
    return [p.stem for p in paths], [read_taillard(p) for p in paths]


def evaluate_taillard(
    directory,
    best_known_path,
    policy: Policy,
    strategy: str = "greedy",
    k: int = 16,
    s: int | None = None,
    seed: int = 0,
    timing: bool = True,
    workers: int | None = None,
) -> list[ResultRow]:
    names, instances = load_taillard_dir(directory)
    best_known = read_best_known(best_known_path)
    missing = [n for n in names if n not in best_known]
    if missing:
        raise ValueError(f"no best-known value for {', '.join(missing)}")
    results = decode_instances(
        instances, policy, strategy, k, s, seed, references=[best_known[n] for n in names],
        names=names, timing=timing, workers=workers,
    )
    return [row for row, _ in results]
