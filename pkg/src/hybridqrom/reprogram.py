"""The hybrid coherent measure-and-reprogram simulator.

The simulator runs a static circuit (plus the challenger's k appended
classical queries) with every query answered by H reprogrammed on a control
list L. At k scheduled positions it coherently checks that the query input is
not already in L (aborting otherwise) and inserts (x, G(x)) into L, before or
after the query according to a bit b_j. At the end L is measured and the run
outputs only if its inputs are a permutation of the circuit's outputs.
"""

from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Optional, Sequence

from .bounds import ZeroMass, alpha_distribution
from .relations import GameSpec, OutputTuple, evaluate_predicate, reprogram, vectors_equivalent
from .statevec import (
    AdversaryCircuit,
    Branch,
    EMPTY,
    Executor,
    LayoutMismatch,
    Mode,
    Query,
    QuantumState,
    RegisterLayout,
    apply_query,
    controlled_answer,
    measure_register,
    outcome_distribution,
    run_circuit,
    slot_code,
)

DUPLICATE = "DuplicateInControl"
EQUIVALENCE = "EquivalenceFailed"


class ControlFull(RuntimeError):
    pass


class InvalidSchedule(ValueError):
    pass


# -- schedules --------------------------------------------------------------------


def position_classes(k: int, pattern: Sequence[str], include_appended: bool = True):
    """1-based quantum and classical positions of the extended query sequence."""
    qpos = tuple(i + 1 for i, kind in enumerate(pattern) if kind == "Q")
    cpos = tuple(i + 1 for i, kind in enumerate(pattern) if kind == "C")
    if include_appended:
        cpos = cpos + tuple(len(pattern) + j + 1 for j in range(k))
    return qpos, cpos


def default_pattern(q: int, c: int) -> tuple:
    return ("Q",) * q + ("C",) * c


@dataclass(frozen=True)
class ReprogramSchedule:
    t: int
    v: tuple
    b: tuple

    def __post_init__(self):
        object.__setattr__(self, "v", tuple(int(i) for i in self.v))
        object.__setattr__(self, "b", tuple(int(i) for i in self.b))
        if len(self.v) != len(self.b):
            raise InvalidSchedule("v and b differ in length")
        if any(a >= b for a, b in zip(self.v, self.v[1:])):
            raise InvalidSchedule("schedule positions must be strictly increasing")
        if any(bit not in (0, 1) for bit in self.b):
            raise InvalidSchedule("b must be a bit vector")

    @property
    def k(self) -> int:
        return len(self.v)

    def validate(self, pattern: Sequence[str], k: int, include_appended: bool = True) -> None:
        qpos, cpos = position_classes(k, pattern, include_appended)
        if len(self.v) != k:
            raise InvalidSchedule(f"schedule has {len(self.v)} positions, expected {k}")
        universe = set(qpos) | set(cpos)
        if not set(self.v) <= universe:
            raise InvalidSchedule(f"positions {self.v} outside the query sequence")
        if sum(1 for i in self.v if i in qpos) != self.t:
            raise InvalidSchedule("t does not match the number of quantum positions in v")

    def bit_at(self, position: int) -> Optional[int]:
        for i, b in zip(self.v, self.b):
            if i == position:
                return b
        return None


def _as_fraction(a) -> Fraction:
    return a.to_fraction() if hasattr(a, "to_fraction") else Fraction(a)


def _weights(k, qpos, cpos, alpha):
    """(schedule, probability) pairs: t ~ alpha, v uniform given t, b uniform."""
    for t, a_t in enumerate(alpha):
        a_t = _as_fraction(a_t)
        if a_t == 0:
            continue
        nq, nc = math.comb(len(qpos), t), math.comb(len(cpos), k - t)
        if nq * nc == 0:
            raise ZeroMass(f"alpha puts mass on t={t} but no schedule realizes it")
        w = _as_fraction(a_t) / (nq * nc * 2**k)
        for qs in itertools.combinations(qpos, t):
            for cs in itertools.combinations(cpos, k - t):
                v = tuple(sorted(qs + cs))
                for b in itertools.product((0, 1), repeat=k):
                    yield ReprogramSchedule(t, v, b), w


def enumerate_schedules(k: int, q: int, c: int, pattern: Optional[Sequence[str]] = None,
                        alpha: Optional[Sequence] = None, include_appended: bool = True) -> list:
    """Every schedule with its exact probability.

    ``alpha`` defaults to the alpha_t distribution for (k, q, c); positions run
    over the c + q + k queries of the extended circuit.
    """
    pattern = tuple(pattern) if pattern is not None else default_pattern(q, c)
    if pattern.count("Q") != q or pattern.count("C") != c:
        raise InvalidSchedule("pattern does not match (q, c)")
    if alpha is None:
        alpha = alpha_distribution(k, q, c)
    qpos, cpos = position_classes(k, pattern, include_appended)
    return list(_weights(k, qpos, cpos, alpha))


def sample_schedule(k: int, q: int, c: int, rng: random.Random, pattern: Optional[Sequence[str]] = None,
                    alpha: Optional[Sequence] = None, include_appended: bool = True) -> ReprogramSchedule:
    pattern = tuple(pattern) if pattern is not None else default_pattern(q, c)
    if alpha is None:
        alpha = alpha_distribution(k, q, c)
    qpos, cpos = position_classes(k, pattern, include_appended)
    t = rng.choices(range(len(alpha)), weights=[float(_as_fraction(a)) for a in alpha])[0]
    v = sorted(rng.sample(qpos, t) + rng.sample(cpos, k - t))
    b = tuple(rng.randrange(2) for _ in range(k))
    return ReprogramSchedule(t, tuple(v), b)


def uniform_schedules(k: int, T: int, appended: int = 0) -> list:
    """Uniform v over the k-subsets of positions 1..T+appended, b uniform.

    Positions past T are the challenger's appended classical queries.
    """
    U = T + appended
    w = Fraction(1, math.comb(U, k) * 2**k)
    return [
        (ReprogramSchedule(sum(1 for i in v if i <= T), v, b), w)
        for v in itertools.combinations(range(1, U + 1), k)
        for b in itertools.product((0, 1), repeat=k)
    ]


# -- control register -------------------------------------------------------------


def control_inputs(key, layout: RegisterLayout) -> tuple:
    lo = layout.control_offset
    return tuple((c - 1) // layout.N for c in key[lo : lo + layout.control_slots] if c)


def controlled_query(state: QuantumState, base_oracle, inp: str = "x", out: str = "y",
                     slot: Optional[int] = None, on_duplicate: str = "raise") -> QuantumState:
    """Query answered by base_oracle reprogrammed on each component's control list."""
    if state.layout.control_slots == 0:
        raise LayoutMismatch("layout has no control slots")
    return apply_query(state, inp, out, controlled_answer(base_oracle, state.layout), slot, on_duplicate)


def update_control(state: QuantumState, g_oracle, inp: str = "x"):
    """Coherent duplicate check then L -> L + (x, G(x)) in canonical order.

    Returns (surviving state, aborted state). The abort probability is the
    squared norm of the aborted part.
    """
    layout = state.layout
    if layout.control_slots == 0:
        raise LayoutMismatch("layout has no control slots")
    i = layout.index(inp)
    lo, hi, N = layout.control_offset, layout.control_offset + layout.control_slots, layout.N
    keep, aborted = {}, {}
    for key, a in state.amps.items():
        x = key[i]
        ctrl = [c for c in key[lo:hi] if c != EMPTY]
        if any((c - 1) // N == x for c in ctrl):
            aborted[key] = a
            continue
        if len(ctrl) == layout.control_slots:
            raise ControlFull("no empty control slot")
        ctrl.append(slot_code(x, g_oracle(x), N))
        ctrl.sort()
        new = key[:lo] + tuple(ctrl) + (EMPTY,) * (layout.control_slots - len(ctrl)) + key[hi:]
        keep[new] = a
    return QuantumState(layout, keep), QuantumState(layout, aborted)


# -- simulator --------------------------------------------------------------------


@dataclass
class SimulatorOutcome:
    """Outcome law of one simulator run.

    ``outputs`` maps (xs, ys, z) to probability; ``aborts`` maps the abort reason
    to probability. Together they sum to 1.
    """

    outputs: dict
    aborts: dict
    g_queries: int
    branches: list = field(default_factory=list, repr=False)

    def total(self) -> float:
        return math.fsum(list(self.outputs.values()) + list(self.aborts.values()))

    def success(self, predicate: Callable) -> float:
        return math.fsum(p for (xs, ys, z), p in self.outputs.items() if predicate(xs, ys, z))

    def scaled(self, w) -> SimulatorOutcome:
        return SimulatorOutcome(
            {k: v * w for k, v in self.outputs.items()}, {k: v * w for k, v in self.aborts.items()}, self.g_queries
        )


def run_simulator(circuit: AdversaryCircuit, H, G, schedule: ReprogramSchedule, mode="pure",
                  include_appended: bool = True, keep_branches: bool = False) -> SimulatorOutcome:
    """Run the simulator for one fixed schedule, exhaustively over all noise and abort branches.

    In ``noisy:p`` mode every quantum query of the circuit is first subjected to
    a noise coin; a classical answer measures the input before the controlled
    query. Classical and appended queries are purified into history slots.
    """
    mode = Mode.parse(mode)
    if mode.kind == "depth":
        raise ValueError("the simulator supports pure and noisy modes")
    ext = circuit.extended()
    k = circuit.k
    schedule.validate(circuit.pattern, k, include_appended)
    layout = ext.layout(control_slots=k)
    answer = controlled_answer(H, layout)
    g_positions = set()
    aborted = []

    def update(branch: Branch, op: Query, position: int) -> Branch:
        g_positions.add(position)
        keep, lost = update_control(branch.state, G, op.inp)
        if lost.amps:
            aborted.append(Branch(branch.weight, lost, branch.events + (DUPLICATE,)))
        return Branch(branch.weight, keep, branch.events)

    def query(branch: Branch, op: Query, slot) -> Branch:
        dup = op.on_duplicate
        return Branch(branch.weight, apply_query(branch.state, op.inp, op.out, answer, slot, dup), branch.events)

    def on_query(branch, position, op, slot):
        parts = [branch]
        if op.kind == "Q" and mode.kind == "noisy":
            parts = []
            if mode.p < 1:
                parts.append(Branch(branch.weight * (1.0 - mode.p), branch.state, branch.events + ((position, "Q"),)))
            if mode.p > 0:
                for value, s in measure_register(branch.state, [op.inp]).items():
                    parts.append(Branch(branch.weight * mode.p, s, branch.events + ((position, "C", value[0]),)))
        bit = schedule.bit_at(position)
        out = []
        for part in parts:
            if bit == 0:
                part = query(update(part, op, position), op, slot)
            elif bit == 1:
                part = update(query(part, op, slot), op, position)
            else:
                part = query(part, op, slot)
            out.append(part)
        return out

    branches = Executor(ext, layout, on_query).run([Branch(1.0, QuantumState.zero(layout))])
    joint = outcome_distribution(branches, ext, lambda key: control_inputs(key, layout))
    aborts = {}
    terms_out, terms_fail = {}, []
    for (xs, ys, z, ctrl), p in joint.items():
        if vectors_equivalent(ctrl, xs):
            terms_out.setdefault((xs, ys, z), []).append(p)
        else:
            terms_fail.append(p)
    outputs = {k2: math.fsum(v) for k2, v in terms_out.items()}
    dup_mass = math.fsum(b.mass for b in aborted)
    if dup_mass:
        aborts[DUPLICATE] = dup_mass
    if terms_fail:
        aborts[EQUIVALENCE] = math.fsum(terms_fail)
    return SimulatorOutcome(outputs, aborts, len(g_positions), branches if keep_branches else [])


def average_outcomes(weighted: list) -> SimulatorOutcome:
    """Mix (weight, SimulatorOutcome) pairs."""
    outs, aborts, gq = {}, {}, set()
    for w, res in weighted:
        w = float(w)
        for k, v in res.outputs.items():
            outs.setdefault(k, []).append(w * v)
        for k, v in res.aborts.items():
            aborts.setdefault(k, []).append(w * v)
        gq.add(res.g_queries)
    return SimulatorOutcome(
        {k: math.fsum(v) for k, v in outs.items()},
        {k: math.fsum(v) for k, v in aborts.items()},
        gq.pop() if len(gq) == 1 else -1,
    )


def run_simulator_averaged(circuit: AdversaryCircuit, H, G, schedules: Optional[list] = None, mode="pure",
                           alpha: Optional[Sequence] = None, include_appended: bool = True) -> SimulatorOutcome:
    """The simulator with its schedule randomness averaged out exactly."""
    if schedules is None:
        schedules = enumerate_schedules(circuit.k, circuit.q, circuit.c, circuit.pattern, alpha, include_appended)
    return average_outcomes(
        [(w, run_simulator(circuit, H, G, s, mode, include_appended)) for s, w in schedules]
    )


def predicate_for(game: Optional[GameSpec], challenge=None) -> Callable:
    """(xs, ys, z, oracle) -> bool; with no game every output counts."""
    if game is None:
        return lambda xs, ys, z, oracle: all(oracle(x) == y for x, y in zip(xs, ys))

    def pred(xs, ys, z, oracle):
        return evaluate_predicate(game, oracle, challenge, OutputTuple(xs, ys, z))

    return pred


def run_reprogrammed_adversary(circuit: AdversaryCircuit, H, xo: Sequence[int], yo: Sequence[int],
                               predicate: Optional[Callable] = None, mode="pure", **kw):
    """Pr[A^{H'} outputs x = xo up to order and V^{H'} accepts], H' = H reprogrammed on (xo, yo).

    Returns (probability, RunResult).
    """
    patched = reprogram(H, xo, yo)
    predicate = predicate or predicate_for(None)
    result = run_circuit(circuit, patched, mode, **kw)
    prob = math.fsum(
        p for (xs, ys, z), p in result.outcomes.items()
        if vectors_equivalent(xs, xo) and predicate(xs, ys, z, patched)
    )
    return prob, result


def simulator_success(outcome: SimulatorOutcome, H, xo, yo, predicate: Optional[Callable] = None) -> float:
    """Pr[Sim outputs (x, y, z) with x = xo up to order and V^{H'} accepts]."""
    patched = reprogram(H, xo, yo)
    predicate = predicate or predicate_for(None)
    return outcome.success(lambda xs, ys, z: vectors_equivalent(xs, xo) and predicate(xs, ys, z, patched))


def as_classical(circuit: AdversaryCircuit, repeats: bool = True) -> AdversaryCircuit:
    """The same circuit with every quantum query made classical.

    A superposition circuit may land on the same input twice once measured, so
    by default repeated inputs are answered without a second history record.
    """
    ops = tuple(
        replace(op, kind="C", repeats=repeats) if isinstance(op, Query) and op.kind == "Q" else op
        for op in circuit.ops
    )
    return replace(circuit, ops=ops, name=circuit.name + "-classical")


def run_noisy_simulator(circuit: AdversaryCircuit, H, G, p, rng: Optional[random.Random] = None,
                        schedules: Optional[list] = None, include_appended: bool = False) -> SimulatorOutcome:
    """Simulator against a T-query circuit whose quantum queries go through the noisy oracle.

    Schedule positions are uniform over the C(T, k) subsets of the circuit's T
    queries, or over the C(T+k, k) subsets of the extended sequence with
    ``include_appended``. With ``rng`` a single schedule is sampled; otherwise
    all schedules are averaged exactly. Noise coins are always enumerated.
    """
    if circuit.c:
        raise ValueError("noisy circuits make only quantum queries")
    T, k = circuit.q, circuit.k
    mode = Mode("noisy", p=float(p))
    if schedules is None:
        schedules = uniform_schedules(k, T, k if include_appended else 0)
    if rng is not None:
        s, _ = schedules[rng.randrange(len(schedules))]
        return run_simulator(circuit, H, G, s, mode)
    return average_outcomes([(w, run_simulator(circuit, H, G, s, mode)) for s, w in schedules])
