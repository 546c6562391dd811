"""Self-improved learning: decode pseudo-labels with the best policy so far,
fit the current policy to them by next-decision cross-entropy, and keep the
new parameters only if greedy validation strictly improves.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from reconsider.core import Instance, Solution, rollout
from reconsider.decoder import DecodeConfig, decode
from reconsider.policy import FeaturizedSoftmaxPolicy, nll_and_grad, save_checkpoint
from reconsider.problems import TspInstance, generate_instance, held_karp
from reconsider.problems.oracles import HELD_KARP_MAX_NODES

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EpochConfig:
    instances_per_epoch: int = 512
    batches_per_epoch: int = 50
    batch_size: int = 64
    decode: DecodeConfig = field(default_factory=lambda: DecodeConfig(k=16, s=2))
    learning_rate: float = 2e-4
    gradient_clip_norm: float = 1.0
    patience: int = 50
    optimizer: str = "adam"  # or "sgd"
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8

    def __post_init__(self):
        for name in ("instances_per_epoch", "batches_per_epoch", "batch_size", "patience"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.learning_rate <= 0 or self.gradient_clip_norm <= 0:
            raise ValueError("learning rate and clip norm must be positive")
        if self.optimizer not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


@dataclass(frozen=True)
class SilConfig:
    problem: str = "tsp"
    size: dict = field(default_factory=lambda: {"nodes": 10})
    epochs: int = 30
    validation_size: int = 200
    seed: int = 0
    feature_map: str | None = None  # default map of the problem
    temperature: float = 1.0
    epoch: EpochConfig = field(default_factory=EpochConfig)
    workers: int = 1

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)


@dataclass
class PseudoLabelSet:
    pairs: list[tuple[Instance, Solution]]

    def __post_init__(self):
        for _, sol in self.pairs:
            if not math.isfinite(sol.objective):
                raise ValueError("pseudo-label is infeasible")

    def __len__(self) -> int:
        return len(self.pairs)

    def mean_objective(self) -> float:
        return float(np.mean([sol.objective for _, sol in self.pairs]))


@dataclass
class TrainState:
    theta: np.ndarray
    theta_best: np.ndarray
    best_score: float
    epochs_since_improvement: int = 0
    # optimizer moments
    step: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None

    @classmethod
    def initial(cls, theta, score: float) -> "TrainState":
        theta = np.array(theta, dtype=float)
        return cls(theta, theta.copy(), score, m=np.zeros_like(theta), v=np.zeros_like(theta))


@dataclass
class EpochMetrics:
    epoch: int
    label_objective: float
    loss: float
    validation_score: float
    patience: int
    validation_gap: float | None = None  # of theta, when exact optima are known
    best_gap: float | None = None  # of theta_best
    seconds: float = 0.0


# --- step (1): pseudo-labels -------------------------------------------------


def _decode_one(args):
    instance, policy, config = args
    return decode(instance, policy, config).best


def generate_epoch_data(
    problem: str,
    size: dict,
    count: int,
    policy: FeaturizedSoftmaxPolicy,
    decode_config: DecodeConfig,
    rng: np.random.Generator,
    workers: int = 1,
) -> PseudoLabelSet:
    """Fresh random instances, each labeled by one decode under ``policy``."""
    instances = [generate_instance(problem, size, rng) for _ in range(count)]
    seeds = rng.integers(2**63, size=count)
    jobs = [(inst, policy, replace(decode_config, seed=int(sd))) for inst, sd in zip(instances, seeds)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            labels = list(pool.map(_decode_one, jobs, chunksize=max(1, count // (4 * workers))))
    else:
        labels = [_decode_one(job) for job in jobs]
    return PseudoLabelSet(list(zip(instances, labels)))


# --- step (2): cross-entropy fit ---------------------------------------------


def label_trajectories(policy: FeaturizedSoftmaxPolicy, labels: PseudoLabelSet):
    """Per label and depth: (features of the feasible candidates, index of the label)."""
    out = []
    for instance, sol in labels.pairs:
        state = instance.initial_state()
        steps = []
        for a in sol.decisions:
            mask = state.mask()
            steps.append((policy.feature_map(state)[mask], int(np.count_nonzero(mask[:a]))))
            state = state.step(a)
        out.append(steps)
    return out


def clip_by_norm(grad: np.ndarray, max_norm: float) -> np.ndarray:
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad


def apply_update(state: TrainState, grad: np.ndarray, config: EpochConfig) -> None:
    grad = clip_by_norm(grad, config.gradient_clip_norm)
    state.step += 1
    if config.optimizer == "sgd":
        state.theta = state.theta - config.learning_rate * grad
        return
    b1, b2 = config.betas
    state.m = b1 * state.m + (1 - b1) * grad
    state.v = b2 * state.v + (1 - b2) * grad * grad
    m_hat = state.m / (1 - b1**state.step)
    v_hat = state.v / (1 - b2**state.step)
    state.theta = state.theta - config.learning_rate * m_hat / (np.sqrt(v_hat) + config.eps)


def train_epoch(
    state: TrainState,
    labels: PseudoLabelSet,
    config: EpochConfig,
    rng: np.random.Generator,
    policy: FeaturizedSoftmaxPolicy,
) -> list[float]:
    """Minibatch updates of ``state.theta``; returns the loss of every batch."""
    if not len(labels):
        raise ValueError("no pseudo-labels to train on")
    trajectories = label_trajectories(policy, labels)
    lengths = np.array([len(t) for t in trajectories])
    temperature = policy.temperature
    losses = []
    for _ in range(config.batches_per_epoch):
        which = rng.integers(len(trajectories), size=config.batch_size)
        depths = (rng.random(config.batch_size) * lengths[which]).astype(int)
        loss = 0.0
        grad = np.zeros_like(state.theta)
        for i, d in zip(which, depths):
            phi, idx = trajectories[i][d]
            mask = np.ones(phi.shape[0], dtype=bool)
            l, g = nll_and_grad(state.theta, phi, mask, idx, temperature)
            loss += l
            grad += g
        loss /= config.batch_size
        if not math.isfinite(loss) or not np.isfinite(grad).all():
            raise FloatingPointError(
                f"non-finite loss {loss} at optimizer step {state.step}; "
                f"|theta| = {np.linalg.norm(state.theta):.3g}"
            )
        apply_update(state, grad / config.batch_size, config)
        losses.append(loss)
    return losses


# --- step (3): greedy validation gate ----------------------------------------


def greedy_score(policy: FeaturizedSoftmaxPolicy, validation: Sequence[Instance]) -> float:
    return float(np.mean([rollout(inst, policy).objective for inst in validation]))


def greedy_gap(policy, validation: Sequence[Instance], optimal_costs: Sequence[float]) -> float:
    costs = np.array([-rollout(inst, policy).objective for inst in validation])
    opt = np.asarray(optimal_costs)
    return float(np.mean(100.0 * (costs - opt) / opt))


def validate_and_gate(
    state: TrainState, policy: FeaturizedSoftmaxPolicy, validation: Sequence[Instance]
) -> float:
    """Score ``state.theta`` greedily; promote it only on strict improvement."""
    score = greedy_score(policy.with_theta(state.theta), validation)
    if score > state.best_score:
        state.theta_best = state.theta.copy()
        state.best_score = score
        state.epochs_since_improvement = 0
    else:
        state.epochs_since_improvement += 1
    return score


def reference_costs(validation: Sequence[Instance]) -> list[float] | None:
    """Exact optimal costs where an oracle is cheap (small TSP), else None."""
    if all(isinstance(i, TspInstance) and i.n <= HELD_KARP_MAX_NODES for i in validation):
        return [held_karp(i).cost for i in validation]
    return None


# --- the cycle ---------------------------------------------------------------


METRIC_FIELDS = [
    "epoch", "label_objective", "loss", "validation_score", "patience",
    "validation_gap", "best_gap", "seconds",
]


def run_sil(
    config: SilConfig,
    out_dir: str | Path | None = None,
    on_epoch: Callable[[EpochMetrics, TrainState], None] | None = None,
) -> tuple[TrainState, list[EpochMetrics]]:
    """Run the training cycle until ``config.epochs`` or patience runs out."""
    val_seq, train_seq = np.random.SeedSequence(config.seed).spawn(2)
    val_rng, rng = np.random.default_rng(val_seq), np.random.default_rng(train_seq)
    validation = [
        generate_instance(config.problem, config.size, val_rng)
        for _ in range(config.validation_size)
    ]
    optimal = reference_costs(validation)
    fmap = config.feature_map or FeaturizedSoftmaxPolicy.for_problem(config.problem).feature_map
    policy = FeaturizedSoftmaxPolicy(fmap, None, config.temperature)
    state = TrainState.initial(policy.theta, greedy_score(policy, validation))

    writer = None
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "config.json").write_text(config.to_json() + "\n")
        metrics_fh = open(out_dir / "metrics.csv", "w", newline="")
        writer = csv.DictWriter(metrics_fh, METRIC_FIELDS)
        writer.writeheader()

    gap = greedy_gap(policy, validation, optimal) if optimal else None
    best_gap = gap
    history = [EpochMetrics(0, math.nan, math.nan, state.best_score, 0, gap, best_gap)]
    log.info("epoch 0: validation %.6f gap %s", state.best_score, gap)
    if writer is not None:
        writer.writerow(asdict(history[0]))
    try:
        for epoch in range(1, config.epochs + 1):
            start = time.monotonic()
            labels = generate_epoch_data(
                config.problem, config.size, config.epoch.instances_per_epoch,
                policy.with_theta(state.theta_best), config.epoch.decode, rng, config.workers,
            )
            losses = train_epoch(state, labels, config.epoch, rng, policy)
            score = validate_and_gate(state, policy, validation)
            if optimal:
                gap = greedy_gap(policy.with_theta(state.theta), validation, optimal)
                if state.epochs_since_improvement == 0:
                    best_gap = gap
            metrics = EpochMetrics(
                epoch, labels.mean_objective(), float(np.mean(losses)), score,
                state.epochs_since_improvement, gap, best_gap, time.monotonic() - start,
            )
            history.append(metrics)
            log.info(
                "epoch %d: labels %.4f loss %.4f validation %.6f gap %s",
                epoch, metrics.label_objective, metrics.loss, score, gap,
            )
            if writer is not None:
                writer.writerow(asdict(metrics))
                metrics_fh.flush()
                save_checkpoint(out_dir / "theta.json", policy.with_theta(state.theta))
                save_checkpoint(out_dir / "theta_best.json", policy.with_theta(state.theta_best))
            if on_epoch is not None:
                on_epoch(metrics, state)
            if state.epochs_since_improvement >= config.epoch.patience:
                log.info("no improvement for %d epochs, stopping", config.epoch.patience)
                break
    finally:
        if writer is not None:
            metrics_fh.close()
    return state, history
