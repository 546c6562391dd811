import json
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from brute import multiset_permutations, tsp_brute_force
from reconsider.core import ContractViolation, NEG_INF, evaluate, rollout
from reconsider.policy import UniformPolicy
from reconsider.problems import (
    CvrpInstance,
    JsspInstance,
    OracleLimitError,
    TspInstance,
    exhaustive_oracle,
    format_taillard,
    gap_percent,
    generate_instance,
    held_karp,
    parse_taillard,
    random_cvrp,
    random_jssp,
    random_tsp,
    read_best_known,
    read_jsonl,
    validate,
    write_jsonl,
)
from reconsider.problems.cvrp import default_capacity, encode

SQUARE = [[0, 0], [1, 0], [1, 1], [0, 1]]


# --- TSP --------------------------------------------------------------------


def test_tsp_square_objective():
    state = TspInstance(SQUARE).initial_state()
    for a in (0, 1, 2, 3):
        state = state.step(a)
    assert state.objective() == pytest.approx(-4.0)


def test_tsp_two_nodes_symmetric():
    inst = TspInstance([[0.1, 0.1], [0.4, 0.5]])
    assert evaluate(inst, (0, 1)) == evaluate(inst, (1, 0)) == pytest.approx(-1.0)


def test_tsp_revisit_raises():
    with pytest.raises(ContractViolation):
        TspInstance(SQUARE).initial_state().step(2).step(2)


def test_tsp_rejects_out_of_square():
    with pytest.raises(ValueError):
        TspInstance([[0, 0], [1.5, 0]])


# --- CVRP -------------------------------------------------------------------


def test_cvrp_single_customer():
    inst = CvrpInstance([0, 0], [[0, 1]], [1], 5)
    state = inst.initial_state().step(encode(0, True))
    assert state.objective() == pytest.approx(-2.0)


def test_cvrp_capacity_forces_depot_return():
    inst = CvrpInstance([0, 0], [[0, 1], [1, 0]], [5, 5], 5)
    state = inst.initial_state()
    mask = state.mask()
    assert not mask[0::2].any(), "first customer must be reached via the depot"
    state = state.step(encode(0, True))
    mask = state.mask()
    assert not mask[encode(1, False)]
    assert mask[encode(1, True)]
    with pytest.raises(ContractViolation):
        state.step(encode(1, False))


def test_cvrp_exhaustive_matches_brute_force():
    import itertools

    inst = random_cvrp(6, np.random.default_rng(2), capacity=12)
    N = inst.n
    best = -np.inf
    for perm in itertools.permutations(range(N)):
        for flags in itertools.product((0, 1), repeat=N - 1):
            decisions = [encode(perm[0], True)] + [
                encode(c, f) for c, f in zip(perm[1:], flags)
            ]
            best = max(best, inst.objective(decisions))
    assert exhaustive_oracle(inst).objective == pytest.approx(best, abs=1e-12)


def test_cvrp_default_capacity():
    assert default_capacity(100) == 50
    assert default_capacity(200) == 80
    assert default_capacity(500) == 100
    assert default_capacity(40) == 20
    assert default_capacity(6) == 9


# --- JSSP -------------------------------------------------------------------


def test_jssp_single_operation():
    inst = JsspInstance([[5]], [[0]])
    assert inst.initial_state().step(0).objective() == -5.0


def test_jssp_single_machine_sums():
    inst = JsspInstance([[3], [4]], [[0], [0]])
    assert evaluate(inst, (0, 1)) == evaluate(inst, (1, 0)) == -7.0


def test_jssp_finished_job_is_masked():
    state = JsspInstance([[3], [4]], [[0], [0]]).initial_state().step(0)
    assert state.mask().tolist() == [False, True]
    with pytest.raises(ContractViolation):
        state.step(0)


def test_jssp_2x2_oracle():
    inst = JsspInstance([[1, 2], [3, 4]], [[0, 1], [1, 0]])
    values = {seq: -evaluate(inst, seq) for seq in multiset_permutations([2, 2])}
    # hand-traced semi-active schedules
    assert values == {
        (0, 0, 1, 1): 10, (0, 1, 0, 1): 7, (0, 1, 1, 0): 7,
        (1, 0, 0, 1): 7, (1, 0, 1, 0): 7, (1, 1, 0, 0): 10,
    }
    assert exhaustive_oracle(inst).objective == -7.0


def test_jssp_3x3_exhaustive_matches_enumeration():
    inst = random_jssp(3, 3, np.random.default_rng(5))
    seqs = multiset_permutations([3, 3, 3])
    assert len(seqs) == math.factorial(9) // 6**3
    best = max(evaluate(inst, s) for s in seqs)
    assert exhaustive_oracle(inst).objective == best


def test_jssp_objective_rejects_bad_multiset():
    inst = JsspInstance([[1, 2], [3, 4]], [[0, 1], [1, 0]])
    assert inst.objective((0, 0, 0, 1)) == NEG_INF
    assert inst.objective((0, 0, 1, 5)) == NEG_INF


# --- generators -------------------------------------------------------------


def test_generate_tsp_100():
    inst = generate_instance("tsp", {"nodes": 100}, np.random.default_rng(0))
    assert inst.coords.shape == (100, 2)
    assert (inst.coords >= 0).all() and (inst.coords <= 1).all()


def test_generate_cvrp_100():
    inst = generate_instance("cvrp", {"customers": 100}, np.random.default_rng(0))
    assert inst.capacity == 50
    assert set(inst.demands.tolist()) <= set(range(1, 10))


def test_generate_jssp_15x10():
    inst = generate_instance("jssp", {"jobs": 15, "machines": 10}, np.random.default_rng(0))
    assert inst.n == 150
    assert inst.proc_times.min() >= 1 and inst.proc_times.max() <= 99
    for row in inst.machine_order:
        assert sorted(row) == list(range(10))


def test_generate_is_seeded():
    a = generate_instance("jssp", {"jobs": 4, "machines": 3}, np.random.default_rng(9))
    b = generate_instance("jssp", {"jobs": 4, "machines": 3}, np.random.default_rng(9))
    assert (a.proc_times == b.proc_times).all() and (a.machine_order == b.machine_order).all()


# --- oracles ----------------------------------------------------------------


def test_oracles_square():
    inst = TspInstance(SQUARE)
    assert held_karp(inst).objective == pytest.approx(-4.0)
    assert exhaustive_oracle(inst).objective == pytest.approx(-4.0)


def test_held_karp_matches_brute_force():
    rng = np.random.default_rng(11)
    for N in (2, 3, 4, 5, 6, 7, 8):
        inst = random_tsp(N, rng)
        sol = held_karp(inst)
        assert -sol.objective == pytest.approx(tsp_brute_force(inst), abs=1e-12)
        assert sol.objective == pytest.approx(evaluate(inst, sol.decisions), abs=1e-12)


def test_oracles_agree_on_random_instances():
    rng = np.random.default_rng(0)
    for _ in range(150):
        inst = random_tsp(6, rng)
        assert exhaustive_oracle(inst).objective == pytest.approx(
            held_karp(inst).objective, abs=1e-12
        )


def test_oracles_agree_on_eight_nodes():
    rng = np.random.default_rng(1)
    for _ in range(2):
        inst = random_tsp(8, rng)
        assert exhaustive_oracle(inst).objective == pytest.approx(
            held_karp(inst).objective, abs=1e-12
        )


def test_oracle_limits():
    with pytest.raises(OracleLimitError):
        held_karp(random_tsp(19, np.random.default_rng(0)))
    with pytest.raises(OracleLimitError):
        exhaustive_oracle(random_tsp(8, np.random.default_rng(0)), max_states=1000)


# --- files ------------------------------------------------------------------


def test_jsonl_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(3)
    insts = [random_tsp(5, rng), random_cvrp(4, rng), random_jssp(3, 2, rng)]
    path = tmp_path / "inst.jsonl"
    write_jsonl(path, insts)
    back = read_jsonl(path)
    assert back[0].coords.tobytes() == insts[0].coords.tobytes()
    assert back[1].coords.tobytes() == insts[1].coords.tobytes()
    assert back[1].depot.tobytes() == insts[1].depot.tobytes()
    assert back[1].demands.tobytes() == insts[1].demands.tobytes()
    assert (back[2].proc_times == insts[2].proc_times).all()
    write_jsonl(tmp_path / "again.jsonl", back)
    assert (tmp_path / "again.jsonl").read_bytes() == path.read_bytes()
    record = json.loads(path.read_text().splitlines()[2])
    assert record["problem"] == "jssp" and record["size"] == {"jobs": 3, "machines": 2}


def test_jsonl_rejects_unknown_problem(tmp_path):
    path = tmp_path / "bad.jsonl"
    path.write_text('{"problem": "knapsack", "size": {}, "payload": {}}\n')
    with pytest.raises(ValueError):
        read_jsonl(path)


def test_taillard_parse_with_blank_lines():
    text = "\n2 3\n\n 5 6 7\n1 2 3\n\n2 3 1\n1 2 3\n\n"
    inst = parse_taillard(text)
    assert inst.proc_times.tolist() == [[5, 6, 7], [1, 2, 3]]
    assert inst.machine_order.tolist() == [[1, 2, 0], [0, 1, 2]]
    assert parse_taillard(format_taillard(inst)).proc_times.tolist() == inst.proc_times.tolist()


def test_taillard_rejects_truncated():
    with pytest.raises(ValueError):
        parse_taillard("2 2\n1 2\n3 4\n1 2\n")


def test_best_known_csv(tmp_path):
    path = tmp_path / "bk.csv"
    path.write_text("instance,best\nta01,1231\nta02,1244\n")
    assert read_best_known(path) == {"ta01": 1231.0, "ta02": 1244.0}


def test_gap_percent():
    assert gap_percent(110, 100) == pytest.approx(10.0)
    assert gap_percent(100, 100) == 0.0


# --- validators -------------------------------------------------------------


def test_validators_catch_violations():
    tsp = TspInstance(SQUARE)
    assert validate(tsp, (0, 1, 2, 3), -4.0) == []
    assert validate(tsp, (0, 1, 1, 3))
    cvrp = CvrpInstance([0, 0], [[0, 1], [1, 0]], [5, 9], 10)
    assert validate(cvrp, (1, 2))  # overloaded subtour
    assert validate(cvrp, (1, 3), cvrp.objective((1, 3))) == []
    jssp = JsspInstance([[1, 2], [3, 4]], [[0, 1], [1, 0]])
    assert validate(jssp, (0, 1, 0, 1), -7.0) == []
    assert validate(jssp, (0, 1, 0, 1), -8.0)


@given(
    problem=st.sampled_from(["tsp", "cvrp", "jssp"]),
    seed=st.integers(0, 2**32 - 1),
)
def test_random_rollouts_are_valid(problem, seed):
    rng = np.random.default_rng(seed)
    size = {"tsp": {"nodes": 7}, "cvrp": {"customers": 7}, "jssp": {"jobs": 3, "machines": 3}}
    inst = generate_instance(problem, size[problem], rng)
    sol = rollout(inst, UniformPolicy(), "sample", rng)
    assert validate(inst, sol.decisions, sol.objective) == []
    assert sol.objective <= 0
    assert sol.objective == evaluate(inst, sol.decisions)


@given(seed=st.integers(0, 2**32 - 1))
def test_mask_never_dead_ends(seed):
    rng = np.random.default_rng(seed)
    inst = random_cvrp(6, rng, capacity=9)
    state = inst.initial_state()
    while not state.terminal:
        mask = state.mask()
        assert mask.any()
        state = state.step(int(rng.choice(np.flatnonzero(mask))))
