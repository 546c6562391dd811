"""Euclidean TSP in the unit square.

Decision ``a`` at every step is the index of the next node to visit; the
first decision picks the start node.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from reconsider.core import NEG_INF, ContractViolation, Instance, State


def _distance_matrix(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt((diff**2).sum(-1))


class TspInstance(Instance):
    problem = "tsp"

    def __init__(self, coords):
        coords = np.array(coords, dtype=float)
        if coords.ndim != 2 or coords.shape[1] != 2 or coords.shape[0] < 2:
            raise ValueError("TSP needs an (N, 2) coordinate array with N >= 2")
        if (coords < 0).any() or (coords > 1).any():
            raise ValueError("TSP coordinates must lie in the unit square")
        coords.setflags(write=False)
        self.coords = coords
        self.dist = _distance_matrix(coords)
        self.dist.setflags(write=False)
        # feature helpers: distances in units of ~ the typical neighbour spacing
        self.scaled_dist = self.dist * np.sqrt(coords.shape[0])
        self.scaled_dist.setflags(write=False)
        self.self_inf = np.where(np.eye(coords.shape[0], dtype=bool), np.inf, 0.0)
        self.self_inf.setflags(write=False)

    @property
    def num_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def action_size(self) -> int:
        return self.coords.shape[0]

    def initial_state(self) -> "TspState":
        return TspState(self, (), np.zeros(self.n, dtype=bool), -1, -1, 0.0)

    def tour_length(self, tour: Sequence[int]) -> float:
        tour = np.asarray(tour, dtype=int)
        succ = np.concatenate((tour[1:], tour[:1]))
        # sequential accumulation in visiting order, the same as TspState
        return float(np.cumsum(self.dist[tour, succ])[-1])

    def objective(self, decisions: Sequence[int]) -> float:
        if sorted(decisions) != list(range(self.n)):
            return NEG_INF
        return -self.tour_length(decisions)

    def to_payload(self) -> dict:
        return {"coords": self.coords.tolist()}

    @classmethod
    def from_payload(cls, payload: dict) -> "TspInstance":
        return cls(payload["coords"])


class TspState(State):
    __slots__ = ("visited", "first", "current", "length")

    def __init__(self, instance, decisions, visited, first, current, length):
        super().__init__(instance, decisions)
        self.visited = visited
        self.first = first
        self.current = current
        self.length = length

    def mask(self) -> np.ndarray:
        return ~self.visited

    def step(self, action: int) -> "TspState":
        if self.terminal or not (0 <= action < self.instance.n) or self.visited[action]:
            raise ContractViolation(f"node {action} cannot be visited at depth {self.depth}")
        visited = self.visited.copy()
        visited[action] = True
        if self.current < 0:
            return TspState(self.instance, (action,), visited, action, action, 0.0)
        length = self.length + self.instance.dist[self.current, action]
        return TspState(
            self.instance, self.decisions + (action,), visited, self.first, action, length
        )

    def objective(self) -> float:
        if not self.terminal:
            raise ContractViolation("objective of a partial tour")
        return -float(self.length + self.instance.dist[self.current, self.first])


def random_tsp(num_nodes: int, rng: np.random.Generator) -> TspInstance:
    return TspInstance(rng.random((num_nodes, 2)))
