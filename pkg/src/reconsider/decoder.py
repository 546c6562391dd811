"""Take a step and reconsider: sample, follow the best for ``s`` steps, resample.

Each round samples ``k`` unseen leaves below the current root with SBS,
updates the incumbent, masks the sampled leaves that agree with the incumbent
on the next ``t`` decisions, and moves the root ``s`` steps down the
incumbent.  ``s = n`` is a single SBS round.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from reconsider.core import NEG_INF, Instance, Solution
from reconsider.policy import Policy
from reconsider.sbs import SampledLeaf, sbs_sample
from reconsider.tree import SearchTree, paused_gc


@dataclass(frozen=True)
class DecodeConfig:
    k: int = 16
    s: int | None = None  # None: one round of width k (s = n)
    top_p: float | None = None
    seed: int = 0
    count_transitions: bool = True

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("beam width k must be >= 1")
        if self.s is not None and self.s < 1:
            raise ValueError("step size s must be >= 1")
        if self.top_p is not None and not 0.0 < self.top_p <= 1.0:
            raise ValueError("top_p must lie in (0, 1]")


@dataclass
class DecodeResult:
    best: Solution
    rounds: int
    transitions: int  # k_effective * (n - t) summed over rounds
    raw_transitions: int  # beam entries actually advanced by SBS
    expansions: int  # policy queries
    per_round_best: list[float] = field(default_factory=list)
    roots: list[int] = field(default_factory=list)  # root depth at each round
    samples: list[list[SampledLeaf]] = field(default_factory=list)

    def to_json(self) -> str:
        data = {
            "decisions": list(self.best.decisions),
            "objective": self.best.objective,
            "rounds": self.rounds,
            "transitions": self.transitions,
            "raw_transitions": self.raw_transitions,
            "expansions": self.expansions,
            "per_round_best": self.per_round_best,
            "roots": self.roots,
        }
        return json.dumps(data)


def decode(
    instance: Instance,
    policy: Policy,
    config: DecodeConfig,
    rng: np.random.Generator | None = None,
    keep_samples: bool = False,
) -> DecodeResult:
    n = instance.n
    s = n if config.s is None else config.s
    if s > n:
        raise ValueError(f"step size {s} exceeds solution length {n}")
    if rng is None:
        rng = np.random.default_rng(config.seed)
    with paused_gc():
        return _decode(instance, policy, config, rng, keep_samples, s)


def _decode(instance, policy, config, rng, keep_samples, s) -> DecodeResult:
    n = instance.n
    tree = SearchTree(instance, policy)
    t = 0
    best: tuple[int, ...] | None = None
    best_value = NEG_INF
    result = DecodeResult(Solution((), NEG_INF), 0, 0, 0, 0)
    while t < n:
        leaves = sbs_sample(tree, config.k, rng, config.top_p)
        result.raw_transitions += tree.last_transitions
        if best is None and not leaves:
            raise RuntimeError("first SBS round returned no leaves")
        for leaf in leaves:
            value = instance.objective(leaf.decisions)
            if best is None or value > best_value:
                best, best_value = leaf.decisions, value
        result.transitions += len(leaves) * (n - t)
        result.roots.append(t)
        if keep_samples:
            result.samples.append(leaves)
        t = min(t + s, n)
        prefix = best[:t]
        for leaf in leaves:
            if leaf.decisions[:t] == prefix:
                tree.mark_sampled(leaf.decisions, leaf.log_pi, t)
        tree.shift_root(prefix)
        result.rounds += 1
        result.per_round_best.append(best_value)
    result.best = Solution(best, best_value)
    result.expansions = tree.expansions
    return result


def _rounds(s: int, length: int) -> int:
    return -(-length // s)


def transition_budget(k: int, s: int, length: int) -> int:
    """Node transitions g(k, s) taken by the decoder on sequences of length l."""
    if min(k, s, length) < 1 or s > length:
        raise ValueError("need k, s, l >= 1 and s <= l")
    t = _rounds(s, length)
    # s * t * (t - 1) is always even, so the bracket is an exact integer
    return k * (t * length - (s * t * t - s * t) // 2)


def budget_multiplier(k: int, s: int, length: int) -> float:
    """h(s) = g(k, s) / (k * l)."""
    return transition_budget(k, s, length) / (k * length)


def equalized_sample_count(k: int, s: int, length: int) -> int:
    """Number of root samples granted to a single-round sampler: k * ceil(h)."""
    g = transition_budget(k, s, length)
    return k * -(-g // (k * length))
