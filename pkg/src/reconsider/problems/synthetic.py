"""Synthetic search trees with known leaf distributions.

These carry their own prior over children so that decode behaviour can be
checked against brute-force enumeration.  Use :class:`reconsider.policy.PriorPolicy`
to decode them.
"""
from __future__ import annotations

import itertools
from typing import Sequence

import numpy as np

from reconsider.core import NEG_INF, ContractViolation, Instance, State


class SyntheticState(State):
    __slots__ = ()

    def mask(self) -> np.ndarray:
        return self.instance.prior(self.decisions) > 0

    def step(self, action: int) -> "SyntheticState":
        self._check_action(action)
        return SyntheticState(self.instance, self.decisions + (int(action),))

    def objective(self) -> float:
        if not self.terminal:
            raise ContractViolation("objective of a partial sequence")
        return self.instance.objective(self.decisions)


class ExplicitTree(Instance):
    """A finite tree given as ``prefix -> child probabilities``.

    Every leaf sits at depth ``depth``.  ``values`` assigns the objective
    of each leaf.
    """

    problem = "synthetic"

    def __init__(self, probs: dict[tuple[int, ...], Sequence[float]], values: dict, depth: int):
        self.depth = depth
        self.width = max(len(p) for p in probs.values())
        self._probs = {}
        for prefix, p in probs.items():
            vec = np.zeros(self.width)
            vec[: len(p)] = p
            self._probs[tuple(prefix)] = vec
        self.values = {tuple(k): float(v) for k, v in values.items()}

    @property
    def n(self) -> int:
        return self.depth

    @property
    def action_size(self) -> int:
        return self.width

    def initial_state(self) -> SyntheticState:
        return SyntheticState(self, ())

    def prior(self, prefix: tuple[int, ...]) -> np.ndarray:
        return self._probs[prefix]

    def objective(self, decisions: Sequence[int]) -> float:
        return self.values.get(tuple(decisions), NEG_INF)

    def leaves(self) -> list[tuple[int, ...]]:
        return sorted(self.values)

    def leaf_probability(self, leaf: Sequence[int]) -> float:
        prob = 1.0
        for d in range(len(leaf)):
            prob *= self._probs[tuple(leaf[:d])][leaf[d]]
        return prob

    def leaf_distribution(self) -> dict[tuple[int, ...], float]:
        return {leaf: self.leaf_probability(leaf) for leaf in self.leaves()}


def random_tree(
    rng: np.random.Generator,
    depth: int,
    max_branching: int = 3,
    max_leaves: int = 60,
    min_branching: int = 1,
) -> ExplicitTree:
    """Random tree with Dirichlet(1) child probabilities and normal leaf values."""
    while True:
        probs: dict[tuple[int, ...], np.ndarray] = {}
        frontier: list[tuple[int, ...]] = [()]
        for _ in range(depth):
            nxt = []
            for prefix in frontier:
                b = int(rng.integers(min_branching, max_branching + 1))
                probs[prefix] = rng.dirichlet(np.ones(b))
                nxt.extend(prefix + (a,) for a in range(b))
            frontier = nxt
            if len(frontier) > max_leaves:
                break
        if len(frontier) <= max_leaves and len(frontier[0]) == depth:
            values = {leaf: float(rng.normal()) for leaf in frontier}
            return ExplicitTree(probs, values, depth)


def full_tree(branching: int, depth: int, rng: np.random.Generator) -> ExplicitTree:
    """Complete ``branching``-ary tree with random priors and leaf values."""
    probs = {}
    for d in range(depth):
        for prefix in itertools.product(range(branching), repeat=d):
            probs[prefix] = rng.dirichlet(np.ones(branching))
    values = {
        leaf: float(rng.normal()) for leaf in itertools.product(range(branching), repeat=depth)
    }
    return ExplicitTree(probs, values, depth)


class LazyTree(Instance):
    """Complete ``branching``-ary tree whose priors and leaf values are
    derived on demand from ``(seed, prefix)``; nothing is stored."""

    problem = "synthetic"

    def __init__(self, branching: int, depth: int, seed: int = 0, concentration: float = 1.0):
        self.branching = branching
        self.depth = depth
        self.seed = seed
        self.concentration = concentration

    @property
    def n(self) -> int:
        return self.depth

    @property
    def action_size(self) -> int:
        return self.branching

    def initial_state(self) -> SyntheticState:
        return SyntheticState(self, ())

    def prior(self, prefix: tuple[int, ...]) -> np.ndarray:
        rng = np.random.default_rng([self.seed, len(prefix), *prefix])
        return rng.dirichlet(np.full(self.branching, self.concentration))

    def objective(self, decisions: Sequence[int]) -> float:
        if len(decisions) != self.depth or any(not (0 <= a < self.branching) for a in decisions):
            return NEG_INF
        rng = np.random.default_rng([self.seed, 1_000_003, *decisions])
        return float(rng.normal())
