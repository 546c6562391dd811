"""Independent feasibility checks for decoded solutions.

Each validator returns a list of human-readable violations (empty when the
solution is valid).  They recompute objectives from raw instance data instead
of trusting the environment's bookkeeping.
"""
from __future__ import annotations

import math
from typing import Sequence

from reconsider.problems.cvrp import CvrpInstance
from reconsider.problems.jssp import JsspInstance
from reconsider.problems.tsp import TspInstance


def _close(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-9, abs_tol=1e-9)


def _euclid(p, q) -> float:
    return math.hypot(p[0] - q[0], p[1] - q[1])


def validate_tsp(instance: TspInstance, decisions: Sequence[int], objective: float | None = None):
    N = len(instance.coords)
    errors = []
    if sorted(decisions) != list(range(N)):
        errors.append(f"tour is not a permutation of 0..{N - 1}")
        return errors
    pts = instance.coords.tolist()
    length = sum(_euclid(pts[decisions[i]], pts[decisions[(i + 1) % N]]) for i in range(N))
    if objective is not None and not _close(-length, objective):
        errors.append(f"objective {objective} does not match tour length {length}")
    return errors


def validate_cvrp(instance: CvrpInstance, decisions: Sequence[int], objective: float | None = None):
    N = len(instance.coords)
    errors = []
    customers = [a // 2 for a in decisions]
    if sorted(customers) != list(range(N)):
        errors.append("customers are not each served exactly once")
        return errors
    if decisions[0] % 2 != 1:
        errors.append("first customer is not reached from the depot")
    # split into subtours purely from the via-depot flags
    tours, current = [], []
    for a in decisions:
        if a % 2 == 1 and current:
            tours.append(current)
            current = []
        current.append(a // 2)
    tours.append(current)
    pts = instance.coords.tolist()
    depot = instance.depot.tolist()
    demands = instance.demands.tolist()
    length = 0.0
    for i, tour in enumerate(tours):
        load = sum(demands[c] for c in tour)
        if load > instance.capacity + 1e-9:
            errors.append(f"subtour {i} carries {load} > capacity {instance.capacity}")
        stops = [depot] + [pts[c] for c in tour] + [depot]
        length += sum(_euclid(p, q) for p, q in zip(stops, stops[1:]))
    if objective is not None and not _close(-length, objective):
        errors.append(f"objective {objective} does not match route length {length}")
    return errors


def validate_jssp(instance: JsspInstance, decisions: Sequence[int], objective: float | None = None):
    """Check precedence and machine exclusivity of the environment's schedule."""
    J, M = instance.proc_times.shape
    errors = []
    if sorted(decisions) != sorted(j for j in range(J) for _ in range(M)):
        errors.append("job sequence does not contain every job exactly M times")
        return errors
    starts = instance.schedule(decisions).tolist()
    proc = instance.proc_times.tolist()
    order = instance.machine_order.tolist()
    ops = []
    for j in range(J):
        for o in range(M):
            s = starts[j][o]
            if s < 0:
                errors.append(f"job {j} op {o} starts before time 0")
            if o > 0 and s < starts[j][o - 1] + proc[j][o - 1]:
                errors.append(f"job {j} op {o} starts before op {o - 1} finishes")
            ops.append((order[j][o], s, s + proc[j][o], j, o))
    for i in range(len(ops)):
        for k in range(i + 1, len(ops)):
            mi, si, ei, ji, oi = ops[i]
            mk, sk, ek, jk, ok = ops[k]
            if mi == mk and si < ek and sk < ei:
                errors.append(f"machine {mi}: ({ji},{oi}) overlaps ({jk},{ok})")
    makespan = max(e for _, _, e, _, _ in ops)
    if objective is not None and not _close(-makespan, objective):
        errors.append(f"objective {objective} does not match makespan {makespan}")
    return errors


def validate(instance, decisions: Sequence[int], objective: float | None = None) -> list[str]:
    decisions = [int(a) for a in decisions]
    if isinstance(instance, TspInstance):
        return validate_tsp(instance, decisions, objective)
    if isinstance(instance, CvrpInstance):
        return validate_cvrp(instance, decisions, objective)
    if isinstance(instance, JsspInstance):
        return validate_jssp(instance, decisions, objective)
    raise TypeError(f"no validator for {type(instance).__name__}")
