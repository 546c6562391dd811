"""Policies: the conditional distribution over the next decision.

A policy maps a state to a vector of log-probabilities over the instance's
action space, with masked decisions at exactly ``-inf``.  Besides test
policies there is :class:`FeaturizedSoftmaxPolicy`, a linear softmax over
hand-built per-candidate features with an analytic cross-entropy gradient.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from reconsider.core import NEG_INF, ContractViolation, Instance, State

CHECKPOINT_FORMAT = "reconsider-theta"
CHECKPOINT_VERSION = 1


def masked_log_softmax(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    out = np.full(logits.shape, NEG_INF)
    z = logits[mask]
    if z.size == 0:
        return out
    z = z - z.max()
    out[mask] = z - math.log(np.exp(z).sum())
    return out


class Policy:
    def log_probs(self, state: State) -> np.ndarray:
        raise NotImplementedError


class UniformPolicy(Policy):
    def log_probs(self, state: State) -> np.ndarray:
        mask = state.mask()
        out = np.full(mask.shape, NEG_INF)
        out[mask] = -math.log(mask.sum())
        return out


class SequencePolicy(Policy):
    """Deterministic policy that plays a fixed sequence.

    Off-sequence states (or an infeasible scripted decision) fall back to
    uniform.
    """

    def __init__(self, sequence: Sequence[int]):
        self.sequence = tuple(int(a) for a in sequence)

    def log_probs(self, state: State) -> np.ndarray:
        mask = state.mask()
        d = state.depth
        if self.sequence[:d] == state.decisions and d < len(self.sequence):
            a = self.sequence[d]
            if mask[a]:
                out = np.full(mask.shape, NEG_INF)
                out[a] = 0.0
                return out
        return UniformPolicy().log_probs(state)


class PriorPolicy(Policy):
    """Reads the child distribution stored in a synthetic tree instance."""

    def log_probs(self, state: State) -> np.ndarray:
        prior = state.instance.prior(state.decisions)
        with np.errstate(divide="ignore"):
            out = np.log(prior)
        return out - math.log(prior.sum())


# --- feature maps ----------------------------------------------------------


@dataclass(frozen=True)
class FeatureMap:
    name: str
    dim: int
    fn: Callable[[State], np.ndarray]

    def __call__(self, state: State) -> np.ndarray:
        return self.fn(state)


def tsp_features(state) -> np.ndarray:
    inst = state.instance
    N = inst.n
    feats = np.zeros((N, 14))
    cur = state.current
    if cur < 0:
        return feats
    scale = math.sqrt(N)
    dist = inst.scaled_dist
    open_ = ~state.visited
    n_open = int(open_.sum())
    remaining = n_open / N
    d_cur = dist[cur]
    d_start = dist[state.first]
    # per candidate: two closest open nodes, the candidate itself excluded
    to_open = dist[:, open_] + inst.self_inf[:, open_]
    if n_open > 2:
        two = np.partition(to_open, 1, axis=1)
        nearest, second = two[:, 0], two[:, 1]
    elif n_open == 2:
        nearest = to_open.min(axis=1)
        second = np.where(open_, nearest, to_open.max(axis=1))
    else:
        nearest = np.where(open_, 0.0, to_open[:, 0])
        second = nearest
    feats[:, 0] = -d_cur
    feats[:, 1] = -d_start
    feats[:, 2] = -d_start * remaining
    feats[:, 3] = nearest
    feats[:, 4] = -(d_cur * d_cur)
    feats[:, 5] = -d_cur * remaining
    cand = np.flatnonzero(open_)
    order = cand[np.argsort(d_cur[cand], kind="stable")]
    feats[order[0], 6] = 1.0
    if n_open > 1:
        feats[order[1], 7] = 1.0
    if state.depth >= 2:
        prev = state.decisions[-2]
        coords = inst.coords
        ahead = coords - coords[cur]
        norms = d_cur * dist[prev, cur]
        np.divide(ahead @ (coords[cur] - coords[prev]) * (scale * scale), norms,
                  out=feats[:, 8], where=norms > 0)
    feats[:, 9] = second
    feats[:, 10] = -(d_cur + nearest)
    feats[:, 11] = d_cur <= nearest
    feats[:, 12] = (nearest - d_cur) * remaining
    feats[:, 13] = (d_start < d_cur) * remaining
    return feats


def tsp_nearest_features(state) -> np.ndarray:
    """Single feature: minus the raw distance from the current node."""
    if state.current < 0:
        return np.zeros((state.instance.n, 1))
    return -state.instance.dist[state.current][:, None]


def cvrp_features(state) -> np.ndarray:
    inst = state.instance
    N = inst.n
    depot = N
    scale = math.sqrt(N)
    dist = inst.dist
    feats = np.zeros((2 * N, 6))
    open_ = ~state.visited
    remaining = open_.sum() / N
    d_direct = dist[state.current, :N] * scale
    d_via = (dist[state.current, depot] + dist[depot, :N]) * scale
    d_depot = dist[depot, :N] * scale
    slack_direct = (state.remaining - inst.demands) / inst.capacity
    slack_via = (inst.capacity - inst.demands) / inst.capacity
    feats[0::2, 0] = -d_direct
    feats[1::2, 0] = -d_via
    feats[0::2, 1] = -d_depot
    feats[1::2, 1] = -d_depot
    feats[0::2, 2] = -d_depot * remaining
    feats[1::2, 2] = -d_depot * remaining
    feats[0::2, 3] = slack_direct
    feats[1::2, 3] = slack_via
    feats[1::2, 4] = 1.0
    feats[0::2, 5] = inst.demands / inst.capacity
    feats[1::2, 5] = inst.demands / inst.capacity
    return feats


def jssp_features(state) -> np.ndarray:
    inst = state.instance
    J, M = inst.proc_times.shape
    feats = np.zeros((J, 5))
    op = np.minimum(state.next_op, M - 1)
    rows = np.arange(J)
    machine = inst.machine_order[rows, op]
    proc = inst.proc_times[rows, op]
    ready = state.job_ready
    free = state.machine_free[machine]
    start = np.maximum(ready, free)
    scale = 100.0
    feats[:, 0] = -proc / scale
    feats[:, 1] = inst.remaining_work[rows, state.next_op] / scale
    feats[:, 2] = (free - ready) / scale
    feats[:, 3] = -(start - start.min()) / scale
    feats[:, 4] = (M - state.next_op) / M
    return feats


FEATURE_MAPS = {
    "tsp-v1": FeatureMap("tsp-v1", 14, tsp_features),
    "tsp-nn": FeatureMap("tsp-nn", 1, tsp_nearest_features),
    "cvrp-v1": FeatureMap("cvrp-v1", 6, cvrp_features),
    "jssp-v1": FeatureMap("jssp-v1", 5, jssp_features),
}

DEFAULT_FEATURE_MAP = {"tsp": "tsp-v1", "cvrp": "cvrp-v1", "jssp": "jssp-v1"}


def feature_map_for(problem: str) -> FeatureMap:
    return FEATURE_MAPS[DEFAULT_FEATURE_MAP[problem]]


class FeaturizedSoftmaxPolicy(Policy):
    """``pi(a | state) = softmax_a(theta . phi(state, a) / temperature)``
    over the feasible candidates."""

    def __init__(self, feature_map: FeatureMap | str, theta=None, temperature: float = 1.0):
        if isinstance(feature_map, str):
            feature_map = FEATURE_MAPS[feature_map]
        self.feature_map = feature_map
        if theta is None:
            theta = np.zeros(feature_map.dim)
        theta = np.array(theta, dtype=float)
        if theta.shape != (feature_map.dim,):
            raise ValueError(f"theta must have shape ({feature_map.dim},), got {theta.shape}")
        self.theta = theta
        self.temperature = float(temperature)

    @classmethod
    def for_problem(cls, problem: str, theta=None, temperature: float = 1.0):
        return cls(feature_map_for(problem), theta, temperature)

    def with_theta(self, theta) -> "FeaturizedSoftmaxPolicy":
        return FeaturizedSoftmaxPolicy(self.feature_map, np.array(theta, copy=True), self.temperature)

    def logits(self, state: State) -> np.ndarray:
        return self.feature_map(state) @ self.theta / self.temperature

    def log_probs(self, state: State) -> np.ndarray:
        return masked_log_softmax(self.logits(state), state.mask())


# --- operations ------------------------------------------------------------


def conditional(
    policy: Policy, instance: Instance, partial: Sequence[int] = (), temperature: float = 1.0
) -> np.ndarray:
    state = instance.state_after(partial)
    if state.terminal:
        raise ContractViolation("a complete solution has no next decision")
    log_probs = policy.log_probs(state)
    if temperature != 1.0:
        log_probs = masked_log_softmax(log_probs / temperature, np.isfinite(log_probs))
    return log_probs


def total_log_prob(policy: Policy, instance: Instance, decisions: Sequence[int]) -> float:
    """``sum_i log pi(a_i | a_1..a_{i-1})``; ``-inf`` if a decision is masked."""
    state = instance.initial_state()
    total = 0.0
    for a in decisions:
        a = int(a)
        mask = state.mask()
        if not (0 <= a < mask.shape[0]) or not mask[a]:
            return NEG_INF
        total += float(policy.log_probs(state)[a])
        state = state.step(a)
    return total


def nll_and_grad(
    theta: np.ndarray, features: np.ndarray, mask: np.ndarray, label: int, temperature: float = 1.0
) -> tuple[float, np.ndarray]:
    """Negative log-likelihood of ``label`` and its gradient w.r.t. theta."""
    if not mask[label]:
        raise ContractViolation(f"label {label} is masked")
    phi = features[mask]
    logits = phi @ theta / temperature
    logits = logits - logits.max()
    probs = np.exp(logits)
    z = probs.sum()
    probs /= z
    idx = int(np.count_nonzero(mask[:label]))
    loss = math.log(z) - logits[idx]
    grad = (probs @ phi - phi[idx]) / temperature
    return float(loss), grad


def loss_and_gradient(
    policy: FeaturizedSoftmaxPolicy, batch: Sequence[tuple[Instance, Sequence[int], int]]
) -> tuple[float, np.ndarray]:
    """Mean next-decision cross-entropy over ``(instance, label, cut depth)``."""
    if not batch:
        raise ValueError("empty batch")
    loss = 0.0
    grad = np.zeros_like(policy.theta)
    for instance, decisions, d in batch:
        if not 0 <= d < instance.n:
            raise ContractViolation(f"cut depth {d} outside 0..{instance.n - 1}")
        state = instance.state_after(decisions[:d])
        l, g = nll_and_grad(
            policy.theta, policy.feature_map(state), state.mask(), int(decisions[d]),
            policy.temperature,
        )
        loss += l
        grad += g
    return loss / len(batch), grad / len(batch)


def top_p_filter(log_probs: np.ndarray, p: float) -> np.ndarray:
    """Keep the smallest high-probability prefix with mass >= p, renormalized."""
    if not 0.0 < p <= 1.0:
        raise ValueError("top-p threshold must lie in (0, 1]")
    finite = np.flatnonzero(np.isfinite(log_probs))
    if p >= 1.0 or finite.size <= 1:
        return log_probs
    order = finite[np.argsort(-log_probs[finite], kind="stable")]
    cum = np.cumsum(np.exp(log_probs[order]))
    cum /= cum[-1]
    keep = order[: int(np.searchsorted(cum, p - 1e-12)) + 1]
    out = np.full(log_probs.shape, NEG_INF)
    kept = log_probs[keep]
    out[keep] = kept - np.logaddexp.reduce(kept)
    return out


# --- checkpoints -----------------------------------------------------------


def save_checkpoint(path, policy: FeaturizedSoftmaxPolicy) -> None:
    data = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "feature_map": policy.feature_map.name,
        "temperature": policy.temperature,
        "theta": [float(v) for v in policy.theta],
    }
    Path(path).write_text(json.dumps(data, indent=1) + "\n")


def load_checkpoint(path) -> FeaturizedSoftmaxPolicy:
    data = json.loads(Path(path).read_text())
    if data.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a policy checkpoint")
    if data.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {data.get('version')}")
    return FeaturizedSoftmaxPolicy(
        data["feature_map"], data["theta"], data.get("temperature", 1.0)
    )
