"""Instance files: JSON lines, Taillard JSSP text, best-known CSV."""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Iterable

import numpy as np

from reconsider.core import Instance
from reconsider.problems.cvrp import CvrpInstance, random_cvrp
from reconsider.problems.jssp import JsspInstance, random_jssp
from reconsider.problems.tsp import TspInstance, random_tsp

PROBLEMS = {"tsp": TspInstance, "cvrp": CvrpInstance, "jssp": JsspInstance}


def generate_instance(problem: str, size: dict, rng: np.random.Generator) -> Instance:
    """``size`` is ``{"nodes": N}`` for TSP, ``{"customers": N, "capacity": D}``
    (capacity optional) for CVRP and ``{"jobs": J, "machines": M}`` for JSSP."""
    if problem == "tsp":
        return random_tsp(int(size["nodes"]), rng)
    if problem == "cvrp":
        return random_cvrp(int(size["customers"]), rng, size.get("capacity"))
    if problem == "jssp":
        return random_jssp(int(size["jobs"]), int(size["machines"]), rng)
    raise ValueError(f"unknown problem {problem!r}")


def instance_size(instance: Instance) -> dict:
    if isinstance(instance, TspInstance):
        return {"nodes": instance.num_nodes}
    if isinstance(instance, CvrpInstance):
        return {"customers": instance.num_customers, "capacity": instance.capacity}
    if isinstance(instance, JsspInstance):
        return {"jobs": instance.jobs, "machines": instance.machines}
    raise TypeError(type(instance).__name__)


def to_record(instance: Instance, name: str | None = None) -> dict:
    record = {
        "problem": instance.problem,
        "size": instance_size(instance),
        "payload": instance.to_payload(),
    }
    if name is not None:
        record["name"] = name
    return record


def from_record(record: dict) -> Instance:
    try:
        cls = PROBLEMS[record["problem"]]
    except KeyError:
        raise ValueError(f"unknown problem tag {record.get('problem')!r}") from None
    return cls.from_payload(record["payload"])


def write_jsonl(path, instances: Iterable[Instance], names: Iterable[str] | None = None) -> None:
    names = list(names) if names is not None else None
    with open(path, "w", encoding="utf-8") as fh:
        for i, inst in enumerate(instances):
            name = names[i] if names is not None else None
            fh.write(json.dumps(to_record(inst, name), separators=(",", ":")) + "\n")


def read_jsonl(path) -> list[Instance]:
    instances = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                instances.append(from_record(json.loads(line)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
    return instances


def parse_taillard(text: str) -> JsspInstance:
    """``J M`` header, J rows of processing times, J rows of 1-based machines."""
    tokens = text.split()
    if len(tokens) < 2:
        raise ValueError("Taillard file is missing its 'J M' header")
    J, M = int(tokens[0]), int(tokens[1])
    body = [int(t) for t in tokens[2:]]
    if len(body) != 2 * J * M:
        raise ValueError(f"expected {2 * J * M} integers after the header, found {len(body)}")
    proc = np.array(body[: J * M]).reshape(J, M)
    machines = np.array(body[J * M :]).reshape(J, M) - 1
    return JsspInstance(proc, machines)


def format_taillard(instance: JsspInstance) -> str:
    lines = [f"{instance.jobs} {instance.machines}"]
    lines += [" ".join(str(int(v)) for v in row) for row in instance.proc_times]
    lines += [" ".join(str(int(v) + 1) for v in row) for row in instance.machine_order]
    return "\n".join(lines) + "\n"


def read_taillard(path) -> JsspInstance:
    return parse_taillard(Path(path).read_text())


def write_taillard(path, instance: JsspInstance) -> None:
    Path(path).write_text(format_taillard(instance))


def read_best_known(path) -> dict[str, float]:
    """CSV with columns ``instance,best`` (header optional)."""
    table = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip() or row[0].startswith("#"):
                continue
            name, value = row[0].strip(), row[1].strip()
            try:
                table[name] = float(value)
            except ValueError:
                if table:
                    raise ValueError(f"bad best-known value {value!r} for {name}") from None
                # header line
    return table


def gap_percent(cost: float, best_known: float) -> float:
    """Relative excess over the reference cost, in percent (0 = optimal)."""
    return 100.0 * (cost - best_known) / best_known
