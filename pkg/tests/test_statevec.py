import math

import pytest
from hypothesis import given, strategies as st
from scipy.stats import unitary_group

from hybridqrom.adversaries import build_classical_exhaustive, build_staged_grover, StagedGroverSpec
from hybridqrom.relations import GameSpec, OracleTable, Relation
from hybridqrom.statevec import (
    MEMORY_CAP_ENV,
    AdversaryCircuit,
    ClassicalMap,
    Dephase,
    DuplicateClassicalQuery,
    LayoutMismatch,
    MatrixGate,
    MemoryCapExceeded,
    Permute,
    PhaseFlip,
    Query,
    QuantumState,
    RegisterLayout,
    SlotOccupied,
    apply_matrix,
    classical_query,
    dephase,
    diffusion,
    measure_register,
    noisy_query,
    quantum_query,
    run_circuit,
    slot_code,
    slot_decode,
    success_probability,
    uniform_prep,
)
from oracles import close_dists, dense_outcomes

S = 1 / math.sqrt(2)


def layout(M=2, N=2, history=0):
    return RegisterLayout((("x", M), ("y", N)), M, N, history)


def test_quantum_query_examples():
    lay = layout()
    zero = OracleTable(2, 2, (0, 0))
    plus = QuantumState.from_register_amplitudes(lay, "x", [S, S])
    assert quantum_query(plus, zero).amps == plus.amps
    table = OracleTable(2, 2, (0, 1))
    assert quantum_query(quantum_query(plus, table), table).amps == plus.amps
    out = quantum_query(QuantumState.basis(lay, x=1), table)
    assert list(out.amps) == [(1, 1)]


def test_query_layout_mismatch():
    lay = RegisterLayout((("x", 3), ("y", 2)), 2, 2)
    with pytest.raises(LayoutMismatch):
        quantum_query(QuantumState.zero(lay), OracleTable(2, 2, (0, 0)))


def test_classical_query_records_history():
    lay = layout(history=1)
    table = OracleTable(2, 2, (1, 0))
    out = classical_query(QuantumState.basis(lay, x=1), table, 0)
    (key,) = out.amps
    assert slot_decode(key[2], 2) == (1, 0)
    plus = QuantumState.from_register_amplitudes(lay, "x", [S, S])
    ent = classical_query(plus, table, 0)
    expected = {(x, table(x), slot_code(x, table(x), 2)): S for x in (0, 1)}
    assert set(ent.amps) == set(expected)
    assert all(abs(ent.amps[k] - v) < 1e-15 for k, v in expected.items())
    # measuring the history slot recovers x with the Born weights
    probs = {v: s.norm2() for v, s in measure_register(ent, ["x"]).items()}
    assert probs == pytest.approx({(0,): 0.5, (1,): 0.5})
    with pytest.raises(SlotOccupied):
        classical_query(ent, table, 0)


def test_duplicate_classical_query_raises():
    lay = layout(history=2)
    table = OracleTable(2, 2, (1, 0))
    s = classical_query(QuantumState.basis(lay, x=1), table, 0)
    with pytest.raises(DuplicateClassicalQuery):
        classical_query(s, table, 1)
    skipped = classical_query(s, table, 1, on_duplicate="skip")
    (key,) = skipped.amps
    assert key[3] == 0


def test_noisy_query_examples():
    lay = layout()
    table = OracleTable(2, 2, (0, 1))
    plus = QuantumState.from_register_amplitudes(lay, "x", [S, S])
    (only,) = noisy_query(plus, table, 0.0)
    assert only[0] == 1.0 and only[3].amps == quantum_query(plus, table).amps
    (basis,) = noisy_query(QuantumState.basis(lay, x=1), table, 1.0)
    assert basis[0] * basis[3].norm2() == pytest.approx(1.0)
    split = noisy_query(plus, table, 1.0)
    assert sorted(w * s.norm2() for w, _, _, s in split) == pytest.approx([0.5, 0.5])


def test_dephase_examples():
    lay = RegisterLayout((("x", 4),), 4, 1)
    assert len(dephase(QuantumState.zero(lay))) == 1
    uniform = QuantumState.from_register_amplitudes(lay, "x", [0.5] * 4)
    parts = dephase(uniform)
    assert sorted(s.norm2() for _, s in parts) == pytest.approx([0.25] * 4)
    twice = [p for _, s in parts for p in dephase(s)]
    assert sorted(s.norm2() for _, s in twice) == pytest.approx([0.25] * 4)


def test_memory_cap_env(monkeypatch):
    monkeypatch.setenv(MEMORY_CAP_ENV, "3")
    lay = RegisterLayout((("x", 4),), 4, 1)
    with pytest.raises(MemoryCapExceeded):
        apply_matrix(QuantumState.zero(lay), ["x"], unitary_group.rvs(4, random_state=1))


def test_run_circuit_examples():
    empty = AdversaryCircuit(2, 2, (("x0", 2),), (), ("x0",))
    res = run_circuit(empty, OracleTable(2, 2, (0, 1)))
    assert res.outcomes == {((0,), (0,), ()): 1.0}

    spec = StagedGroverSpec(k=1, u=1, v=0, targets=(1,), M=4, N=4)
    table = OracleTable(4, 4, (0, 0, 1, 0))
    p = success_probability(run_circuit(build_staged_grover(spec), table), lambda xs, ys, z: ys == (1,))
    assert p == pytest.approx(1.0, abs=1e-10)

    game = GameSpec(Relation.multi_search(1, 2, target=1), 3, 2)
    circ = build_classical_exhaustive(1, 3, game)
    for t in OracleTable.all_tables(3, 2):
        if 1 in t.table:
            assert success_probability(run_circuit(circ, t), lambda xs, ys, z: ys == (1,)) == pytest.approx(1.0)


# -- random circuits against the dense reference ------------------------------------


@st.composite
def circuits(draw, allow_classical=True):
    M = draw(st.integers(2, 3))
    N = draw(st.integers(2, 3))
    regs = (("a", M), ("b", N), ("x0", M), ("w", 2))
    ops = []
    used_classical = False
    for _ in range(draw(st.integers(1, 5))):
        choice = draw(st.sampled_from(["unitary", "prep", "Q", "C", "map", "perm", "phase", "diff"]))
        if choice == "unitary":
            reg, dim = draw(st.sampled_from([("a", M), ("w", 2)]))
            ops.append(MatrixGate((reg,), unitary_group.rvs(dim, random_state=draw(st.integers(0, 999)))))
        elif choice == "prep":
            ops.append(uniform_prep("a", M, range(M)))
        elif choice == "Q":
            ops.append(Query("Q", "a", "b"))
        elif choice == "C" and allow_classical and not used_classical:
            ops.append(Query("C", "a", "b"))
            used_classical = True
        elif choice == "map":
            ops.append(ClassicalMap(("a", "b"), "x0", tuple(draw(st.integers(0, M - 1)) for _ in range(M * N))))
        elif choice == "perm":
            ops.append(Permute("a", tuple(draw(st.permutations(range(M))))))
        elif choice == "phase":
            ops.append(PhaseFlip(("a", "w"), {(draw(st.integers(0, M - 1)), draw(st.integers(0, 1)))}))
        else:
            ops.append(diffusion("a", M, range(M)))
    circ = AdversaryCircuit(M, N, regs, ops, ("x0",), ("w",))
    table = OracleTable(M, N, draw(st.lists(st.integers(0, N - 1), min_size=M, max_size=M)))
    return circ, table


@given(circuits())
def test_pure_run_matches_dense_reference(case):
    circ, table = case
    assert close_dists(run_circuit(circ, table).outcomes, dense_outcomes(circ, table))


@given(circuits(), st.sampled_from([0.0, 0.25, 0.5, 1.0]))
def test_noisy_run_matches_dense_reference(case, p):
    circ, table = case
    assert close_dists(run_circuit(circ, table, f"noisy:{p}").outcomes, dense_outcomes(circ, table, p))


@given(circuits())
def test_branch_masses_sum_to_one(case):
    circ, table = case
    for mode in ("pure", "noisy:1/3", "depth:1"):
        res = run_circuit(circ, table, mode)
        assert math.fsum(b.mass for b in res.branches) == pytest.approx(1.0, abs=1e-10)
        assert res.total() == pytest.approx(1.0, abs=1e-10)


@given(circuits())
def test_unitaries_preserve_norm(case):
    circ, _ = case
    state = QuantumState.zero(circ.layout())
    for op in circ.ops:
        if not isinstance(op, Query):
            state = op.apply(state)
            assert state.norm2() == pytest.approx(1.0, abs=1e-12)


def _one_query_circuit():
    ops = (uniform_prep("a", 3, range(3)), Query("Q", "a", "b"), MatrixGate(("a",), unitary_group.rvs(3, random_state=4)),
           ClassicalMap(("a", "b"), "x0", (0, 1, 2, 1, 2, 0)))
    return AdversaryCircuit(3, 2, (("a", 3), ("b", 2), ("x0", 3)), ops, ("x0",))


@pytest.mark.parametrize("p", [0.1, 0.5, 0.9])
def test_noisy_interpolation(p):
    circ, table = _one_query_circuit(), OracleTable(3, 2, (1, 0, 1))
    lo = run_circuit(circ, table, "noisy:0").outcomes
    hi = run_circuit(circ, table, "noisy:1").outcomes
    mid = run_circuit(circ, table, f"noisy:{p}").outcomes
    mix = {k: (1 - p) * lo.get(k, 0.0) + p * hi.get(k, 0.0) for k in set(lo) | set(hi)}
    assert close_dists(mid, mix)


def test_depth_matches_explicit_dephasing():
    ops = (uniform_prep("a", 2, range(2)), Query("Q", "a", "b"), MatrixGate(("a",), unitary_group.rvs(2, random_state=2)),
           Query("Q", "a", "b"), ClassicalMap(("a",), "x0", (1, 0)))
    circ = AdversaryCircuit(2, 2, (("a", 2), ("b", 2), ("x0", 2)), ops, ("x0",))
    table = OracleTable(2, 2, (1, 0))
    for d, marks in [(1, (2, 4)), (2, (4,))]:
        explicit = list(circ.ops)
        for i in sorted(marks, reverse=True):
            explicit.insert(i, Dephase())
        ref = run_circuit(AdversaryCircuit(2, 2, circ.registers, explicit, ("x0",)), table)
        assert close_dists(run_circuit(circ, table, f"depth:{d}").outcomes, ref.outcomes)


def test_sampled_backend_is_seeded_and_close():
    circ, table = _one_query_circuit(), OracleTable(3, 2, (1, 0, 1))
    a = run_circuit(circ, table, "noisy:0.5", backend="sampled", trials=400, seed=11)
    b = run_circuit(circ, table, "noisy:0.5", backend="sampled", trials=400, seed=11)
    assert a.outcomes == b.outcomes
    exact = run_circuit(circ, table, "noisy:0.5").outcomes
    assert max(abs(a.outcomes.get(k, 0) - v) for k, v in exact.items()) < 0.1
    assert len(a.trajectories) == 400


def test_circuit_json_roundtrip():
    circ = _one_query_circuit()
    again = AdversaryCircuit.from_json(circ.to_json())
    table = OracleTable(3, 2, (0, 1, 1))
    assert close_dists(run_circuit(again, table).outcomes, run_circuit(circ, table).outcomes)
    bad = circ.to_json()
    bad["pattern"] = ["C"]
    with pytest.raises(LayoutMismatch):
        AdversaryCircuit.from_json(bad)
