"""Stochastic Beam Search over the masked search tree.

Each beam entry carries a perturbed score G.  Children draw Gumbel-perturbed
scores around their cumulative log pi~ and are then shifted so that their
maximum equals the parent's G; keeping the top ``k`` scores per level yields
``k`` leaves sampled without replacement from pi~ (Kool et al., 2019).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from reconsider.core import NEG_INF, ContractViolation
from reconsider.policy import top_p_filter
from reconsider.tree import SearchTree, TreeNode


@dataclass
class BeamEntry:
    node: TreeNode
    score: float  # perturbed log pi~
    log_pi_tilde: float  # cumulative log pi~ from the current root
    path: tuple[int, ...]  # decisions below the current root


@dataclass(frozen=True)
class SampledLeaf:
    decisions: tuple[int, ...]
    log_pi: float
    log_pi_tilde: float
    score: float


def conditioned_gumbel(
    parent_score: float, child_log_probs: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """Gumbel-perturb ``child_log_probs`` and condition their max on ``parent_score``.

    Masked children (``-inf``) stay at ``-inf``.
    """
    finite = np.isfinite(child_log_probs)
    if not finite.any():
        raise ContractViolation("no finite child log-probability to perturb")
    out = np.full(child_log_probs.shape, NEG_INF)
    g = child_log_probs[finite] + rng.gumbel(size=int(finite.sum()))
    out[finite] = truncate_scores(parent_score, g)
    return out


def truncate_scores(parent_score, g: np.ndarray, z=None) -> np.ndarray:
    """``-log(exp(-G_p) - exp(-Z) + exp(-g))`` with ``Z = max g``, computed stably.

    ``parent_score`` and ``z`` may be arrays aligned with ``g`` (one segment
    per parent); the argmax child of each segment lands exactly on its
    parent's score.
    """
    if z is None:
        z = g.max()
    below = g < z
    log1mexp = np.full(g.shape, -np.inf)
    # g just below z can round exp(g - z) to 1; log1p(-1) = -inf is the right limit
    with np.errstate(divide="ignore"):
        np.log1p(-np.exp(g - z, where=below, out=np.zeros(g.shape)), out=log1mexp, where=below)
    v = parent_score - g + log1mexp
    out = parent_score - np.maximum(v, 0.0) - np.log1p(np.exp(-np.abs(v)))
    return np.where(below, out, parent_score)


def sbs_sample(
    tree: SearchTree,
    k: int,
    rng: np.random.Generator | None,
    top_p: float | None = None,
    perturb: bool = True,
) -> list[SampledLeaf]:
    """Sample up to ``k`` distinct leaves below ``tree.root`` without replacement.

    With ``perturb=False`` the Gumbel noise is dropped and this is plain
    deterministic beam search on cumulative log pi~.  Top-p trimming, when
    given, only affects this call; the tree masses are left alone.

    ``tree.last_transitions`` is set to the number of beam entries advanced
    over all levels.
    """
    if k < 1:
        raise ValueError("beam width must be >= 1")
    root = tree.root
    tree.last_transitions = 0
    if root.exhausted:
        return []
    n = tree.n
    trim = top_p is not None and top_p < 1.0
    # the beam is kept column-wise: nodes, perturbed scores, cumulative log pi~
    nodes = [root]
    scores = np.zeros(1)
    log_pi_tilde = np.zeros(1)
    transitions = 0
    for _ in range(root.depth, n):
        keep, lps = [], []
        for j, node in enumerate(nodes):
            if node.children is None:
                tree.expand(node)
            if not node.children:
                continue
            if node.touched and all(c.log_mass == NEG_INF for c in node.children):
                continue
            lp = node.normalized_log_probs()
            if trim:
                lp = top_p_filter(lp, top_p)
            keep.append(j)
            lps.append(lp)
        if not keep:
            return []
        parents = [nodes[j] for j in keep]
        gp = scores[keep]
        sizes = np.fromiter(map(len, lps), dtype=int, count=len(lps))
        offsets = np.concatenate(([0], np.cumsum(sizes)[:-1]))
        phi = np.concatenate(lps) + np.repeat(log_pi_tilde[keep], sizes)
        if perturb:
            g = phi + rng.gumbel(size=phi.shape[0])
            z = np.repeat(np.maximum.reduceat(g, offsets), sizes)
            child_scores = truncate_scores(np.repeat(gp, sizes), g, z)
            child_scores[phi == NEG_INF] = NEG_INF
        else:
            child_scores = phi
        live = np.flatnonzero(child_scores > NEG_INF)
        # stable sort: ties resolve in insertion order
        chosen = live[np.argsort(-child_scores[live], kind="stable")[:k]]
        owner = np.repeat(np.arange(len(parents)), sizes)[chosen]
        slot = chosen - offsets[owner]
        nodes = [parents[o].children[c] for o, c in zip(owner.tolist(), slot.tolist())]
        scores = child_scores[chosen]
        log_pi_tilde = phi[chosen]
        transitions += len(nodes)
    tree.last_transitions = transitions
    prefix = tree.root_partial
    return [
        SampledLeaf(prefix + _path(node, root), node.log_pi, float(lpt), float(sc))
        for node, lpt, sc in zip(nodes, log_pi_tilde, scores)
    ]


def _path(node: TreeNode, root: TreeNode) -> tuple[int, ...]:
    """Decisions from ``root`` down to ``node``."""
    out = []
    while node is not root:
        out.append(node.action)
        node = node.parent
    return tuple(reversed(out))
