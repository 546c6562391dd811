"""Persistent prefix tree used by the step-and-reconsider decoder.

Every node stores the total log-probability ``log_pi`` of its prefix under
the policy (fixed at creation) and a mutable unnormalized log-mass
``log_mass``.  Marking a sampled leaf subtracts its probability from the
masses of its ancestors, so that renormalizing masses over siblings gives a
distribution that never returns to an already-sampled leaf.
"""
from __future__ import annotations

import contextlib
import gc
import json
import math
from typing import Iterator, Sequence

import numpy as np

from reconsider.core import NEG_INF, ContractViolation, Instance, State
from reconsider.policy import Policy

# relative tolerance below which a subtraction empties a node
EXHAUSTION_TOL = 1e-12


@contextlib.contextmanager
def paused_gc():
    """Suspend cyclic garbage collection while a tree is being grown.

    Nodes link to their parents, so every full collection re-walks the whole
    live tree without freeing anything; on large decodes that is a quarter of
    the run time.  Reference counting keeps working, and the tree is reclaimed
    by the first collection after it is dropped.
    """
    was_enabled = gc.isenabled()
    gc.disable()
    try:
        yield
    finally:
        if was_enabled:
            gc.enable()


class ExhaustedNodeError(RuntimeError):
    """Every leaf below the node has already been sampled."""


def log_sub(a: float, b: float) -> float:
    """``log(exp(a) - exp(b))``, clamped to ``-inf`` once ``b`` reaches ``a``."""
    if a == NEG_INF or b >= a - EXHAUSTION_TOL:
        return NEG_INF
    return a + math.log1p(-math.exp(b - a))


class TreeNode:
    __slots__ = (
        "depth",
        "action",
        "log_pi",
        "log_mass",
        "parent",
        "children",
        "child_actions",
        "child_log_probs",
        "touched",
        "_state",
    )

    def __init__(self, depth: int, action: int, log_pi: float, parent=None, state=None):
        self.depth = depth
        self.action = action
        self.log_pi = log_pi
        self.log_mass = log_pi
        self.parent = parent
        self.children: list[TreeNode] | None = None
        self.child_actions: np.ndarray | None = None
        # policy conditionals of the feasible children, aligned with ``children``
        self.child_log_probs: np.ndarray | None = None
        # set once a leaf below has been marked; until then masses equal log_pi
        self.touched = False
        self._state = state

    @property
    def expanded(self) -> bool:
        return self.children is not None

    @property
    def exhausted(self) -> bool:
        return self.log_mass == NEG_INF

    @property
    def state(self) -> State:
        if self._state is None:
            self._state = self.parent.state.step(self.action)
        return self._state

    def child(self, action: int) -> "TreeNode":
        if self.children is None:
            raise ContractViolation(f"node at depth {self.depth} is not expanded")
        idx = int(np.searchsorted(self.child_actions, action))
        if idx >= len(self.children) or self.child_actions[idx] != action:
            raise ContractViolation(f"no child {action} at depth {self.depth}")
        return self.children[idx]

    def normalized_log_probs(self) -> np.ndarray:
        """``log pi~`` of every child: child mass over sibling mass total."""
        if self.children is None:
            raise ContractViolation(f"node at depth {self.depth} is not expanded")
        if not self.touched:
            return self.child_log_probs
        masses = np.array([c.log_mass for c in self.children])
        finite = masses > NEG_INF
        if not finite.any():
            raise ExhaustedNodeError(f"all children at depth {self.depth} are exhausted")
        out = np.full(masses.shape, NEG_INF)
        out[finite] = masses[finite] - np.logaddexp.reduce(masses[finite])
        return out

    def __repr__(self) -> str:
        return (
            f"TreeNode(depth={self.depth}, action={self.action}, "
            f"log_pi={self.log_pi:.6g}, log_mass={self.log_mass:.6g})"
        )


class SearchTree:
    def __init__(self, instance: Instance, policy: Policy):
        self.instance = instance
        self.policy = policy
        self.root = TreeNode(0, -1, 0.0, state=instance.initial_state())
        self.root_partial: tuple[int, ...] = ()
        self.node_count = 1
        self.expansions = 0
        self.last_transitions = 0

    @property
    def n(self) -> int:
        return self.instance.n

    def expand(self, node: TreeNode) -> None:
        """Query the policy once and create every feasible child."""
        if node.expanded:
            raise ContractViolation(f"node at depth {node.depth} is already expanded")
        if node.depth >= self.n:
            raise ContractViolation("cannot expand a leaf")
        log_probs = self.policy.log_probs(node.state)
        actions = np.flatnonzero(np.isfinite(log_probs))
        lp = log_probs[actions]
        node.child_actions = actions
        node.child_log_probs = lp
        depth, base = node.depth + 1, node.log_pi
        node.children = [
            TreeNode(depth, a, base + l, parent=node) for a, l in zip(actions.tolist(), lp.tolist())
        ]
        self.node_count += len(actions)
        self.expansions += 1

    def node_at(self, prefix: Sequence[int]) -> TreeNode:
        """Node for ``prefix``, which must extend the current root's prefix."""
        t0 = len(self.root_partial)
        if tuple(prefix[:t0]) != self.root_partial:
            raise ContractViolation(f"prefix {tuple(prefix)} leaves the root's subtree")
        node = self.root
        for a in prefix[t0:]:
            node = node.child(int(a))
        return node

    def normalized_transition(self, node: TreeNode, child: TreeNode) -> float:
        """pi~(child | node) as a probability."""
        lp = node.normalized_log_probs()
        idx = node.children.index(child)
        return math.exp(lp[idx])

    def mark_sampled(self, leaf: Sequence[int], leaf_log_pi: float, from_depth: int) -> None:
        """Subtract the leaf's probability from its ancestors at depths
        ``from_depth`` .. n (the leaf included)."""
        if len(leaf) != self.n:
            raise ContractViolation("only complete sequences can be marked")
        if from_depth < len(self.root_partial):
            raise ContractViolation("cannot mark above the current root")
        path = [self.root]
        node = self.root
        for a in leaf[len(self.root_partial):]:
            node = node.child(int(a))
            path.append(node)
        for node in reversed(path):
            if node.depth < from_depth:
                break
            node.log_mass = log_sub(node.log_mass, leaf_log_pi)
            node.touched = True
            # guard against residual round-off mass above fully sampled children
            if node.children is not None and all(c.log_mass == NEG_INF for c in node.children):
                node.log_mass = NEG_INF

    def shift_root(self, prefix: Sequence[int]) -> None:
        prefix = tuple(int(a) for a in prefix)
        node = self.node_at(prefix)
        if node is self.root:
            return
        node.state  # materialize before cutting the parent link
        node.parent = None
        self.root = node
        self.root_partial = prefix

    def iter_nodes(self) -> Iterator[TreeNode]:
        stack = [self.root]
        while stack:
            node = stack.pop()
            yield node
            if node.children:
                stack.extend(reversed(node.children))

    def reachable_count(self) -> int:
        return sum(1 for _ in self.iter_nodes())

    def dump(self, fmt: str = "text") -> str:
        """Depth-indented outline of the current root's subtree."""
        if fmt == "json":
            def as_dict(node):
                out = {"action": node.action, "depth": node.depth,
                       "log_pi": node.log_pi, "log_mass": node.log_mass}
                if node.children is not None:
                    out["children"] = [as_dict(c) for c in node.children]
                return out
            return json.dumps(as_dict(self.root), indent=1)
        lines = []
        base = self.root.depth
        for node in self.iter_nodes():
            lines.append(
                "  " * (node.depth - base)
                + f"[{node.action}] log_pi={node.log_pi:.6f} log_mass={node.log_mass:.6f}"
            )
        return "\n".join(lines)
