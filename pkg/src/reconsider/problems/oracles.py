"""Exact solvers for desk-scale instances."""
from __future__ import annotations

import numpy as np

from reconsider.core import NEG_INF, Instance, Solution
from reconsider.problems.tsp import TspInstance

HELD_KARP_MAX_NODES = 18
EXHAUSTIVE_MAX_STATES = 10**7


class OracleLimitError(ValueError):
    """The instance is too large for the requested exact method."""


def held_karp(instance: TspInstance) -> Solution:
    """Bitmask DP over subsets of nodes 1..N-1, tour anchored at node 0."""
    N = instance.num_nodes
    if N > HELD_KARP_MAX_NODES:
        raise OracleLimitError(f"Held-Karp is limited to {HELD_KARP_MAX_NODES} nodes, got {N}")
    dist = instance.dist
    if N == 2:
        return Solution((0, 1), -2.0 * float(dist[0, 1]))
    m = N - 1  # nodes 1..N-1 map to bits 0..m-1
    full = 1 << m
    cost = np.full((full, m), np.inf)
    parent = np.full((full, m), -1, dtype=np.int64)
    for j in range(m):
        cost[1 << j, j] = dist[0, j + 1]
    inner = dist[1:, 1:]
    bits = 1 << np.arange(m)
    # masks in increasing numeric order visit every subset after its subsets
    for mask in range(1, full):
        row = cost[mask]
        if not np.isfinite(row).any():
            continue
        free = (mask & bits) == 0
        if not free.any():
            continue
        # candidate cost of extending the best path ending at j to node k
        ext = row[:, None] + inner
        best_prev = np.argmin(ext, axis=0)
        best_val = ext[best_prev, np.arange(m)]
        for k in np.flatnonzero(free):
            nmask = mask | (1 << k)
            if best_val[k] < cost[nmask, k]:
                cost[nmask, k] = best_val[k]
                parent[nmask, k] = best_prev[k]
    last = cost[full - 1] + dist[1:, 0]
    j = int(np.argmin(last))
    tour = []
    mask = full - 1
    while j >= 0:
        tour.append(j + 1)
        pj = int(parent[mask, j])
        mask ^= 1 << j
        j = pj
    tour.append(0)
    tour.reverse()
    return Solution(tuple(tour), -instance.tour_length(tour))


def exhaustive_oracle(instance: Instance, max_states: int = EXHAUSTIVE_MAX_STATES) -> Solution:
    """Depth-first enumeration of every feasible decision sequence.

    Ties keep the lexicographically first sequence.  Refuses once more than
    ``max_states`` tree nodes have been visited.
    """
    best_value = NEG_INF
    best: tuple[int, ...] | None = None
    visited = 0
    stack = [instance.initial_state()]
    while stack:
        state = stack.pop()
        visited += 1
        if visited > max_states:
            raise OracleLimitError(f"enumeration exceeded {max_states} tree nodes")
        if state.terminal:
            value = state.objective()
            if value > best_value:
                best_value, best = value, state.decisions
            continue
        for a in np.flatnonzero(state.mask())[::-1]:
            stack.append(state.step(int(a)))
    if best is None:
        raise OracleLimitError("instance has no feasible solution")
    return Solution(best, best_value)


def count_leaves(instance: Instance, max_states: int = EXHAUSTIVE_MAX_STATES) -> int:
    visited = leaves = 0
    stack = [instance.initial_state()]
    while stack:
        state = stack.pop()
        visited += 1
        if visited > max_states:
            raise OracleLimitError(f"enumeration exceeded {max_states} tree nodes")
        if state.terminal:
            leaves += 1
            continue
        stack.extend(state.step(int(a)) for a in np.flatnonzero(state.mask()))
    return leaves
