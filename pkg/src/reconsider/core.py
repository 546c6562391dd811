"""Problem-independent view of a constructive CO problem.

An instance fixes a solution length ``n`` and a fixed-size action space.  A
state is an immutable partial solution; ``state.mask()`` marks the legal next
decisions and ``state.step(a)`` returns the successor.  Objectives are
maximized: minimization problems report ``-cost`` and ``-inf`` when
infeasible.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Sequence

import numpy as np

if TYPE_CHECKING:
    from reconsider.policy import Policy

NEG_INF = -math.inf


class ContractViolation(ValueError):
    """A caller broke a precondition (masked decision, wrong length, ...)."""


class InfeasibleError(RuntimeError):
    """Raised when a rollout reaches a state with no legal decision."""

    def __init__(self, partial: Sequence[int], message: str = "dead end"):
        self.partial = tuple(partial)
        super().__init__(f"{message}: partial solution {self.partial}")


class State:
    """Immutable partial solution of one instance.

    Subclasses hold whatever bookkeeping the problem needs and must keep
    ``decisions`` in sync.
    """

    __slots__ = ("instance", "decisions")

    def __init__(self, instance: "Instance", decisions: tuple[int, ...] = ()):
        self.instance = instance
        self.decisions = decisions

    @property
    def depth(self) -> int:
        return len(self.decisions)

    @property
    def terminal(self) -> bool:
        return len(self.decisions) >= self.instance.n

    def mask(self) -> np.ndarray:
        raise NotImplementedError

    def step(self, action: int) -> "State":
        raise NotImplementedError

    def objective(self) -> float:
        """Objective of a terminal state."""
        raise NotImplementedError

    def _check_action(self, action: int) -> np.ndarray:
        if self.terminal:
            raise ContractViolation("cannot step a terminal state")
        mask = self.mask()
        if not (0 <= action < mask.shape[0]) or not mask[action]:
            raise ContractViolation(
                f"decision {action} is masked at depth {self.depth}"
            )
        return mask


class Instance:
    """Base class for problem instances."""

    problem: str = ""

    @property
    def n(self) -> int:
        raise NotImplementedError

    @property
    def action_size(self) -> int:
        raise NotImplementedError

    def initial_state(self) -> State:
        raise NotImplementedError

    def objective(self, decisions: Sequence[int]) -> float:
        """Objective of a complete decision sequence; ``-inf`` if infeasible.

        Implementations are pure replays that never raise on infeasibility.
        """
        raise NotImplementedError

    def state_after(self, decisions: Sequence[int]) -> State:
        state = self.initial_state()
        for a in decisions:
            state = state.step(int(a))
        return state


@dataclass(frozen=True)
class Solution:
    decisions: tuple[int, ...]
    objective: float

    @property
    def feasible(self) -> bool:
        return self.objective > NEG_INF

    @property
    def cost(self) -> float:
        return -self.objective


def make_solution(instance: Instance, decisions: Sequence[int]) -> Solution:
    decisions = tuple(int(a) for a in decisions)
    return Solution(decisions, evaluate(instance, decisions))


def evaluate(instance: Instance, solution: Solution | Sequence[int]) -> float:
    decisions = solution.decisions if isinstance(solution, Solution) else solution
    if len(decisions) != instance.n:
        raise ContractViolation(
            f"solution has length {len(decisions)}, instance needs {instance.n}"
        )
    return instance.objective(tuple(int(a) for a in decisions))


def sample_index(log_probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from a vector of (masked) log-probabilities."""
    cdf = np.cumsum(np.exp(log_probs))
    idx = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    return min(idx, cdf.shape[0] - 1)


def rollout(
    instance: Instance,
    policy: "Policy",
    mode: str = "greedy",
    rng: np.random.Generator | None = None,
) -> Solution:
    """Build one complete solution by following ``policy`` step by step.

    Greedy mode takes the argmax (lowest index on ties); sample mode draws
    from the policy's conditional with ``rng``.
    """
    if mode not in ("greedy", "sample"):
        raise ValueError(f"unknown rollout mode {mode!r}")
    if mode == "sample" and rng is None:
        raise ValueError("sample mode needs an rng")
    state = instance.initial_state()
    while not state.terminal:
        log_probs = policy.log_probs(state)
        if not np.isfinite(log_probs).any():
            raise InfeasibleError(state.decisions)
        if mode == "greedy":
            action = int(np.argmax(log_probs))
        else:
            action = sample_index(log_probs, rng)
        state = state.step(action)
    return Solution(state.decisions, state.objective())
