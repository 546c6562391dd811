import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from brute import tv, wor_inclusion
from reconsider.core import ContractViolation, NEG_INF, rollout
from reconsider.policy import FeaturizedSoftmaxPolicy, PriorPolicy
from reconsider.problems import ExplicitTree, random_tree, random_tsp
from reconsider.sbs import conditioned_gumbel, sbs_sample, truncate_scores
from reconsider.tree import SearchTree


def flat_tree(probs):
    return ExplicitTree({(): probs}, {(a,): float(a) for a in range(len(probs))}, 1)


def two_level_tree():
    # four leaves with probabilities 0.12, 0.18, 0.49, 0.21
    return ExplicitTree(
        {(): [0.3, 0.7], (0,): [0.4, 0.6], (1,): [0.7, 0.3]},
        {(0, 0): 0.0, (0, 1): 1.0, (1, 0): 2.0, (1, 1): 3.0},
        2,
    )


def test_single_child_takes_parent_score():
    out = conditioned_gumbel(-1.7, np.array([-0.3]), np.random.default_rng(0))
    assert out.tolist() == [-1.7]


def test_masked_child_stays_masked():
    out = conditioned_gumbel(0.0, np.array([NEG_INF, -0.1, -2.0]), np.random.default_rng(0))
    assert out[0] == NEG_INF
    assert out.max() == 0.0


def test_all_masked_raises():
    with pytest.raises(ContractViolation):
        conditioned_gumbel(0.0, np.array([NEG_INF, NEG_INF]), np.random.default_rng(0))


@given(
    gp=st.floats(-50, 50),
    g=st.lists(st.floats(-60, 60), min_size=1, max_size=12),
)
def test_truncation_identity(gp, g):
    g = np.array(g)
    out = truncate_scores(gp, g)
    assert abs(out.max() - gp) <= 1e-9
    assert (out <= gp).all()
    # the map is monotone: order among siblings is preserved
    order = np.argsort(g, kind="stable")
    assert (np.diff(out[order]) >= -1e-9).all()


def test_truncation_matches_naive_formula():
    rng = np.random.default_rng(1)
    for _ in range(200):
        gp = rng.normal()
        g = rng.normal(size=5)
        naive = -np.log(np.exp(-gp) - np.exp(-g.max()) + np.exp(-g))
        assert np.allclose(truncate_scores(gp, g), naive, atol=1e-9)


def test_three_leaves_all_returned():
    tree = SearchTree(flat_tree([0.5, 0.3, 0.2]), PriorPolicy())
    leaves = sbs_sample(tree, 3, np.random.default_rng(0))
    assert sorted(l.decisions for l in leaves) == [(0,), (1,), (2,)]


def test_width_larger_than_tree():
    tree = SearchTree(two_level_tree(), PriorPolicy())
    leaves = sbs_sample(tree, 10, np.random.default_rng(0))
    assert len(leaves) == 4
    assert sum(math.exp(l.log_pi) for l in leaves) == pytest.approx(1.0, abs=1e-12)
    scores = [l.score for l in leaves]
    assert scores == sorted(scores, reverse=True)


def test_k1_is_exact_sample():
    inst = two_level_tree()
    tree = SearchTree(inst, PriorPolicy())
    rng = np.random.default_rng(5)
    runs = 20000
    counts = {leaf: 0 for leaf in inst.leaves()}
    for _ in range(runs):
        counts[sbs_sample(tree, 1, rng)[0].decisions] += 1
    emp = [counts[l] / runs for l in inst.leaves()]
    assert tv(emp, [0.12, 0.18, 0.49, 0.21]) < 0.02


def test_inclusion_matches_wor():
    inst = two_level_tree()
    tree = SearchTree(inst, PriorPolicy())
    rng = np.random.default_rng(6)
    runs = 20000
    counts = np.zeros(4)
    index = {leaf: i for i, leaf in enumerate(inst.leaves())}
    for _ in range(runs):
        for leaf in sbs_sample(tree, 2, rng):
            counts[index[leaf.decisions]] += 1
    # inclusion probabilities sum to k, so halve the L1 distance of their k-normalized form
    expect = wor_inclusion([0.12, 0.18, 0.49, 0.21], 2)
    assert tv(counts / runs / 2, expect / 2) < 0.02


@given(seed=st.integers(0, 2**32 - 1), k=st.integers(1, 12))
def test_distinct_and_bounded(seed, k):
    rng = np.random.default_rng(seed)
    inst = random_tree(rng, depth=4, max_leaves=20)
    tree = SearchTree(inst, PriorPolicy())
    leaves = sbs_sample(tree, k, rng)
    seqs = [l.decisions for l in leaves]
    assert len(set(seqs)) == len(seqs) == min(k, len(inst.leaves()))
    for l in leaves:
        assert l.log_pi == pytest.approx(math.log(inst.leaf_probability(l.decisions)), abs=1e-12)
        # no masking yet, so pi~ equals pi
        assert l.log_pi_tilde == pytest.approx(l.log_pi, abs=1e-12)


def test_marked_leaves_are_never_sampled():
    rng = np.random.default_rng(2)
    inst = random_tree(rng, depth=3, min_branching=2, max_leaves=27)
    tree = SearchTree(inst, PriorPolicy())
    seen = set()
    while True:
        leaves = sbs_sample(tree, 3, rng)
        if not leaves:
            break
        for l in leaves:
            assert l.decisions not in seen
            seen.add(l.decisions)
            tree.mark_sampled(l.decisions, l.log_pi, 0)
    assert seen == set(inst.leaves())
    assert tree.root.exhausted


def test_sampling_does_not_change_masses():
    inst = random_tree(np.random.default_rng(0), depth=3)
    tree = SearchTree(inst, PriorPolicy())
    sbs_sample(tree, 4, np.random.default_rng(1), top_p=0.5)
    assert all(n.log_mass == n.log_pi and not n.touched for n in tree.iter_nodes())


def test_top_p_trims_tail():
    inst = two_level_tree()
    tree = SearchTree(inst, PriorPolicy())
    rng = np.random.default_rng(0)
    # p = 0.6 keeps only branch 1 at the root and only (1, 0) below it
    for _ in range(50):
        leaves = sbs_sample(tree, 4, rng, top_p=0.6)
        assert [l.decisions for l in leaves] == [(1, 0)]


def test_beam_width_one_is_greedy():
    rng = np.random.default_rng(3)
    inst = random_tsp(8, rng)
    policy = FeaturizedSoftmaxPolicy.for_problem("tsp", rng.normal(size=14))
    (leaf,) = sbs_sample(SearchTree(inst, policy), 1, None, perturb=False)
    assert leaf.decisions == rollout(inst, policy, "greedy").decisions


def test_deterministic_beam_keeps_top_prefixes():
    tree = SearchTree(two_level_tree(), PriorPolicy())
    leaves = sbs_sample(tree, 2, None, perturb=False)
    # level 1 keeps both branches, level 2 keeps the two largest totals
    assert [l.decisions for l in leaves] == [(1, 0), (1, 1)]


def test_transition_counter():
    tree = SearchTree(two_level_tree(), PriorPolicy())
    sbs_sample(tree, 3, np.random.default_rng(0))
    # level 1 holds two entries, level 2 holds three
    assert tree.last_transitions == 5


def test_exhausted_root_returns_empty():
    tree = SearchTree(flat_tree([1.0]), PriorPolicy())
    tree.expand(tree.root)
    tree.mark_sampled((0,), 0.0, 0)
    assert sbs_sample(tree, 2, np.random.default_rng(0)) == []


def test_invalid_width():
    tree = SearchTree(flat_tree([1.0]), PriorPolicy())
    with pytest.raises(ValueError):
        sbs_sample(tree, 0, np.random.default_rng(0))
