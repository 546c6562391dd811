"""Capacitated VRP with the depot folded into each decision.

Decision ``a = 2 * c + via`` serves customer ``c`` either directly from the
previous customer (``via = 0``) or after a return to the depot (``via = 1``),
so every feasible solution has length N.  The first decision must go via the
depot.
"""
from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from reconsider.core import NEG_INF, ContractViolation, Instance, State

# capacities used for the standard N=100/200/500 sets
STANDARD_CAPACITY = {100: 50.0, 200: 80.0, 500: 100.0}


def default_capacity(num_customers: int) -> float:
    if num_customers in STANDARD_CAPACITY:
        return STANDARD_CAPACITY[num_customers]
    # demands go up to 9, so smaller capacities would admit infeasible instances
    return float(max(9, math.ceil(num_customers / 2)))


def encode(customer: int, via_depot: bool) -> int:
    return 2 * customer + int(via_depot)


def decode_action(action: int) -> tuple[int, bool]:
    return action // 2, bool(action % 2)


class CvrpInstance(Instance):
    problem = "cvrp"

    def __init__(self, depot, coords, demands, capacity):
        depot = np.array(depot, dtype=float).reshape(2)
        coords = np.array(coords, dtype=float)
        demands = np.array(demands, dtype=float)
        capacity = float(capacity)
        if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] < 1:
            raise ValueError("CVRP needs an (N, 2) customer coordinate array")
        if demands.shape != (coords.shape[0],) or (demands <= 0).any():
            raise ValueError("CVRP needs one positive demand per customer")
        if capacity <= 0 or (demands > capacity).any():
            raise ValueError("every demand must fit into the vehicle capacity")
        if (coords < 0).any() or (coords > 1).any() or (depot < 0).any() or (depot > 1).any():
            raise ValueError("CVRP coordinates must lie in the unit square")
        for arr in (depot, coords, demands):
            arr.setflags(write=False)
        self.depot = depot
        self.coords = coords
        self.demands = demands
        self.capacity = capacity
        points = np.vstack([coords, depot[None, :]])
        diff = points[:, None, :] - points[None, :, :]
        # row/column N is the depot
        self.dist = np.sqrt((diff**2).sum(-1))
        self.dist.setflags(write=False)

    @property
    def num_customers(self) -> int:
        return self.coords.shape[0]

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def action_size(self) -> int:
        return 2 * self.coords.shape[0]

    def initial_state(self) -> "CvrpState":
        return CvrpState(
            self, (), np.zeros(self.n, dtype=bool), self.n, self.capacity, 0.0
        )

    def routes(self, decisions: Sequence[int]) -> list[list[int]]:
        """Split a decision sequence into depot-to-depot customer lists."""
        routes: list[list[int]] = []
        for a in decisions:
            c, via = decode_action(int(a))
            if via or not routes:
                routes.append([])
            routes[-1].append(c)
        return routes

    def objective(self, decisions: Sequence[int]) -> float:
        N = self.n
        if any(not (0 <= a < 2 * N) for a in decisions):
            return NEG_INF
        customers = [a // 2 for a in decisions]
        if sorted(customers) != list(range(N)) or decisions[0] % 2 == 0:
            return NEG_INF
        stops = [N]
        for route in self.routes(decisions):
            if self.demands[route].sum() > self.capacity:
                return NEG_INF
            stops += route + [N]
        # one running sum in visiting order, matching the incremental state
        length = 0.0
        for u, v in zip(stops, stops[1:]):
            length += self.dist[u, v]
        return -float(length)

    def to_payload(self) -> dict:
        return {
            "depot": self.depot.tolist(),
            "coords": self.coords.tolist(),
            "demands": self.demands.tolist(),
            "capacity": self.capacity,
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "CvrpInstance":
        return cls(payload["depot"], payload["coords"], payload["demands"], payload["capacity"])


class CvrpState(State):
    __slots__ = ("visited", "current", "remaining", "length")

    def __init__(self, instance, decisions, visited, current, remaining, length):
        super().__init__(instance, decisions)
        self.visited = visited
        self.current = current  # customer index, or N for the depot
        self.remaining = remaining
        self.length = length

    def mask(self) -> np.ndarray:
        inst = self.instance
        mask = np.empty(2 * inst.n, dtype=bool)
        open_ = ~self.visited
        mask[1::2] = open_
        if self.decisions:
            mask[0::2] = open_ & (inst.demands <= self.remaining)
        else:
            mask[0::2] = False
        return mask

    def step(self, action: int) -> "CvrpState":
        inst = self.instance
        if self.terminal or not (0 <= action < 2 * inst.n):
            raise ContractViolation(f"decision {action} is out of range at depth {self.depth}")
        c, via = decode_action(action)
        if self.visited[c]:
            raise ContractViolation(f"customer {c} already served")
        if not via and (not self.decisions or inst.demands[c] > self.remaining):
            raise ContractViolation(f"customer {c} cannot be served directly")
        visited = self.visited.copy()
        visited[c] = True
        depot = inst.n
        if via:
            length = self.length + inst.dist[self.current, depot] + inst.dist[depot, c]
            remaining = inst.capacity - inst.demands[c]
        else:
            length = self.length + inst.dist[self.current, c]
            remaining = self.remaining - inst.demands[c]
        return CvrpState(inst, self.decisions + (action,), visited, c, remaining, length)

    def objective(self) -> float:
        if not self.terminal:
            raise ContractViolation("objective of a partial solution")
        return -float(self.length + self.instance.dist[self.current, self.instance.n])


def random_cvrp(
    num_customers: int, rng: np.random.Generator, capacity: float | None = None
) -> CvrpInstance:
    if capacity is None:
        capacity = default_capacity(num_customers)
    depot = rng.random(2)
    coords = rng.random((num_customers, 2))
    demands = rng.integers(1, 10, size=num_customers).astype(float)
    return CvrpInstance(depot, coords, demands, capacity)
