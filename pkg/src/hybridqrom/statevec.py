"""Sparse statevector simulation of hybrid query algorithms.

A basis state is a flat tuple: one value per named register, then one code per
history slot, then one code per control slot. Slot codes are ``x*N + y + 1``
with 0 meaning empty. Amplitudes live in a dict keyed by these tuples.

Probabilistic events (noise coins, measurements) split a run into branches.
A branch keeps its sub-normalized state unrenormalized and carries a classical
weight for coin probabilities, so its probability mass is
``weight * ||state||^2``. Measurement never rescales amplitudes, which keeps
masses reproducible bit for bit.
"""

from __future__ import annotations

import json
import math
import os
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

DEFAULT_MEMORY_CAP = 2**22
MEMORY_CAP_ENV = "HQROM_MEMORY_CAP"
PRUNE = 1e-15
EMPTY = 0


class LayoutMismatch(ValueError):
    pass


class SlotOccupied(RuntimeError):
    pass


class DuplicateClassicalQuery(RuntimeError):
    pass


class MemoryCapExceeded(RuntimeError):
    pass


def memory_cap() -> int:
    value = os.environ.get(MEMORY_CAP_ENV)
    return int(value) if value else DEFAULT_MEMORY_CAP


def slot_code(x: int, y: int, N: int) -> int:
    return x * N + y + 1


def slot_decode(code: int, N: int):
    if code == EMPTY:
        return None
    return divmod(code - 1, N)


# -- layout -----------------------------------------------------------------------


@dataclass(frozen=True)
class RegisterLayout:
    registers: tuple  # ((name, dim), ...)
    M: int
    N: int
    history_slots: int = 0
    control_slots: int = 0

    def __post_init__(self):
        object.__setattr__(self, "registers", tuple((str(n), int(d)) for n, d in self.registers))
        names = [n for n, _ in self.registers]
        if len(set(names)) != len(names):
            raise LayoutMismatch(f"duplicate register names in {names}")
        if any(d < 1 for _, d in self.registers):
            raise LayoutMismatch("register dimensions must be positive")
        object.__setattr__(self, "_index", {n: i for i, n in enumerate(names)})

    def index(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise LayoutMismatch(f"no register named {name!r}") from None

    def dim(self, name: str) -> int:
        return self.registers[self.index(name)][1]

    @property
    def slot_dim(self) -> int:
        return self.M * self.N + 1

    @property
    def history_offset(self) -> int:
        return len(self.registers)

    @property
    def control_offset(self) -> int:
        return len(self.registers) + self.history_slots

    @property
    def width(self) -> int:
        return len(self.registers) + self.history_slots + self.control_slots

    def dims(self) -> list:
        return [d for _, d in self.registers] + [self.slot_dim] * (self.history_slots + self.control_slots)

    @property
    def total_dimension(self) -> int:
        return math.prod(self.dims())

    def zero_key(self) -> tuple:
        return (0,) * self.width

    def basis_index(self, key: Sequence[int]) -> int:
        """Row-major index of a basis key in the dense encoding."""
        if len(key) != self.width:
            raise LayoutMismatch("basis key width does not match layout")
        idx = 0
        for value, dim in zip(key, self.dims()):
            if not 0 <= value < dim:
                raise LayoutMismatch(f"value {value} out of range for dimension {dim}")
            idx = idx * dim + value
        return idx

    def with_slots(self, history: int, control: int) -> RegisterLayout:
        return replace(self, history_slots=history, control_slots=control)

    def with_registers(self, extra) -> RegisterLayout:
        return replace(self, registers=self.registers + tuple(extra))


# -- state ------------------------------------------------------------------------


@dataclass(frozen=True)
class QuantumState:
    layout: RegisterLayout
    amps: dict = field(compare=False)

    @classmethod
    def zero(cls, layout: RegisterLayout) -> QuantumState:
        return cls(layout, {layout.zero_key(): 1.0 + 0j})

    @classmethod
    def basis(cls, layout: RegisterLayout, **values) -> QuantumState:
        key = list(layout.zero_key())
        for name, v in values.items():
            key[layout.index(name)] = int(v)
        return cls(layout, {tuple(key): 1.0 + 0j})

    @classmethod
    def from_register_amplitudes(cls, layout: RegisterLayout, name: str, amplitudes) -> QuantumState:
        """Product state with ``name`` holding the given vector and every other register at 0."""
        i = layout.index(name)
        base = list(layout.zero_key())
        amps = {}
        for v, a in enumerate(amplitudes):
            if a != 0:
                base[i] = v
                amps[tuple(base)] = complex(a)
        return cls(layout, amps)

    def norm2(self) -> float:
        return math.fsum(a.real * a.real + a.imag * a.imag for a in self.amps.values())

    def support(self) -> int:
        return len(self.amps)

    def value(self, key, name: str) -> int:
        return key[self.layout.index(name)]

    def marginal(self, names: Sequence[str]) -> dict:
        idx = [self.layout.index(n) for n in names]
        terms = {}
        for key, a in self.amps.items():
            terms.setdefault(tuple(key[i] for i in idx), []).append(a.real * a.real + a.imag * a.imag)
        return {k: math.fsum(v) for k, v in terms.items()}

    def to_dense(self) -> np.ndarray:
        dim = self.layout.total_dimension
        if dim > memory_cap():
            raise MemoryCapExceeded(f"dense dimension {dim} exceeds the memory cap")
        vec = np.zeros(dim, dtype=complex)
        for key, a in self.amps.items():
            vec[self.layout.basis_index(key)] = a
        return vec

    def project(self, predicate: Callable) -> QuantumState:
        return QuantumState(self.layout, {k: a for k, a in self.amps.items() if predicate(k)})

    def relabel(self, layout: RegisterLayout) -> QuantumState:
        """Embed into a layout with extra trailing registers/slots set to 0."""
        if layout.registers[: len(self.layout.registers)] != self.layout.registers:
            raise LayoutMismatch("target layout must extend the register list")
        nr, nh, nc = len(self.layout.registers), self.layout.history_slots, self.layout.control_slots
        pad_r = (0,) * (len(layout.registers) - nr)
        if layout.history_slots < nh or layout.control_slots < nc:
            raise LayoutMismatch("target layout has fewer slots")
        pad_h = (0,) * (layout.history_slots - nh)
        pad_c = (0,) * (layout.control_slots - nc)
        amps = {}
        for k, a in self.amps.items():
            amps[k[:nr] + pad_r + k[nr : nr + nh] + pad_h + k[nr + nh :] + pad_c] = a
        return QuantumState(layout, amps)


def _check_cap(amps: dict) -> dict:
    if len(amps) > memory_cap():
        raise MemoryCapExceeded(f"state support {len(amps)} exceeds the memory cap {memory_cap()}")
    return amps


# -- unitary primitives -----------------------------------------------------------


def apply_matrix(state: QuantumState, regs: Sequence[str], matrix) -> QuantumState:
    """Apply a unitary on the joint space of ``regs`` (first register most significant).

    Components are grouped by the untouched part of the key and multiplied in a
    fixed column order, so the arithmetic does not depend on dict ordering.
    """
    layout = state.layout
    idx = [layout.index(r) for r in regs]
    dims = [layout.registers[i][1] for i in idx]
    size = math.prod(dims)
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.shape != (size, size):
        raise LayoutMismatch(f"matrix shape {matrix.shape} does not match sub-register dimension {size}")
    columns = [[(r, matrix[r, s]) for r in range(size) if matrix[r, s] != 0] for s in range(size)]
    digits = []
    for r in range(size):
        vals, rem = [], r
        for d in reversed(dims):
            vals.append(rem % d)
            rem //= d
        digits.append(tuple(reversed(vals)))

    groups = {}
    for key, a in state.amps.items():
        sub = 0
        for i, d in zip(idx, dims):
            sub = sub * d + key[i]
        rest = list(key)
        for i in idx:
            rest[i] = 0
        groups.setdefault(tuple(rest), {})[sub] = a

    out = {}
    for rest, vec in groups.items():
        acc = [0j] * size
        for s in sorted(vec):
            a = vec[s]
            for r, m in columns[s]:
                acc[r] += m * a
        for r, val in enumerate(acc):
            if abs(val) > PRUNE:
                key = list(rest)
                for i, v in zip(idx, digits[r]):
                    key[i] = v
                out[tuple(key)] = val
    return QuantumState(layout, _check_cap(out))


def apply_phase(state: QuantumState, regs: Sequence[str], marked) -> QuantumState:
    idx = [state.layout.index(r) for r in regs]
    marked = set(tuple(m) for m in marked)
    out = {}
    for key, a in state.amps.items():
        out[key] = -a if tuple(key[i] for i in idx) in marked else a
    return QuantumState(state.layout, out)


def apply_classical_map(state: QuantumState, sources: Sequence[str], target: str, table) -> QuantumState:
    """|a, b> -> |a, b + f(a) mod dim(b)>, with f given as a row-major table over the sources."""
    layout = state.layout
    sidx = [layout.index(s) for s in sources]
    sdims = [layout.registers[i][1] for i in sidx]
    t = layout.index(target)
    tdim = layout.registers[t][1]
    if len(table) != math.prod(sdims):
        raise LayoutMismatch("classical map table size does not match its sources")
    out = {}
    for key, a in state.amps.items():
        sub = 0
        for i, d in zip(sidx, sdims):
            sub = sub * d + key[i]
        k = list(key)
        k[t] = (k[t] + table[sub]) % tdim
        out[tuple(k)] = a
    return QuantumState(layout, out)


def apply_permutation(state: QuantumState, reg: str, perm) -> QuantumState:
    i = state.layout.index(reg)
    if sorted(perm) != list(range(state.layout.registers[i][1])):
        raise LayoutMismatch("not a permutation of the register values")
    out = {}
    for key, a in state.amps.items():
        k = list(key)
        k[i] = perm[k[i]]
        out[tuple(k)] = a
    return QuantumState(state.layout, out)


def diffusion_matrix(dim: int, support: Sequence[int]) -> np.ndarray:
    """2|u_S><u_S| - I with u_S uniform over ``support``."""
    u = np.zeros(dim)
    u[list(support)] = 1 / math.sqrt(len(support))
    return 2 * np.outer(u, u) - np.eye(dim)


def uniform_prep_matrix(dim: int, support: Sequence[int]) -> np.ndarray:
    """A real reflection exchanging |0> and the uniform state over ``support``."""
    u = np.zeros(dim)
    u[list(support)] = 1 / math.sqrt(len(support))
    w = -u
    w[0] += 1.0
    nw = w @ w
    if nw < 1e-24:
        return np.eye(dim)
    return np.eye(dim) - 2 * np.outer(w, w) / nw


def is_unitary(matrix, tol: float = 1e-10) -> bool:
    m = np.asarray(matrix, dtype=complex)
    return m.shape[0] == m.shape[1] and np.allclose(m.conj().T @ m, np.eye(m.shape[0]), atol=tol)


# -- circuit operations -----------------------------------------------------------


@dataclass(frozen=True)
class Query:
    kind: str  # "Q" or "C"
    inp: str
    out: str
    appended: bool = False
    repeats: bool = False  # a repeated classical input is answered but not re-recorded

    def __post_init__(self):
        if self.kind not in ("Q", "C"):
            raise ValueError("query kind must be 'Q' or 'C'")

    @property
    def on_duplicate(self) -> str:
        return "skip" if self.appended or self.repeats else "raise"

    def to_json(self):
        d = {"op": "query", "kind": self.kind, "in": self.inp, "out": self.out}
        if self.appended:
            d["appended"] = True
        if self.repeats:
            d["repeats"] = True
        return d


@dataclass(frozen=True)
class MatrixGate:
    regs: tuple
    matrix: tuple
    label: Optional[tuple] = None  # (name, params) for named constructions

    def __post_init__(self):
        object.__setattr__(self, "regs", tuple(self.regs))
        m = np.asarray(self.matrix, dtype=complex)
        if not is_unitary(m):
            raise ValueError(f"gate on {self.regs} is not unitary")
        object.__setattr__(self, "matrix", tuple(tuple(complex(v) for v in row) for row in m))

    def apply(self, state):
        return apply_matrix(state, self.regs, self.matrix)

    def to_json(self):
        if self.label is not None:
            name, params = self.label
            return {"op": name, "regs": list(self.regs), **dict(params)}
        return {
            "op": "matrix",
            "regs": list(self.regs),
            "real": [[v.real for v in row] for row in self.matrix],
            "imag": [[v.imag for v in row] for row in self.matrix],
        }


def diffusion(reg: str, dim: int, support) -> MatrixGate:
    support = tuple(sorted(support))
    return MatrixGate((reg,), diffusion_matrix(dim, support), ("diffusion", (("dim", dim), ("support", list(support)))))


def uniform_prep(reg: str, dim: int, support) -> MatrixGate:
    support = tuple(sorted(support))
    return MatrixGate((reg,), uniform_prep_matrix(dim, support), ("uniform_prep", (("dim", dim), ("support", list(support)))))


def hadamard_minus(reg: str) -> MatrixGate:
    """|0> -> |->, for phase kickback on a binary output register."""
    s = 1 / math.sqrt(2)
    return MatrixGate((reg,), [[s, s], [-s, s]], ("minus_prep", ()))


@dataclass(frozen=True)
class PhaseFlip:
    regs: tuple
    marked: frozenset

    def __post_init__(self):
        object.__setattr__(self, "regs", tuple(self.regs))
        object.__setattr__(self, "marked", frozenset(tuple(m) for m in self.marked))

    def apply(self, state):
        return apply_phase(state, self.regs, self.marked)

    def to_json(self):
        return {"op": "phase_flip", "regs": list(self.regs), "marked": sorted(list(m) for m in self.marked)}


@dataclass(frozen=True)
class ClassicalMap:
    sources: tuple
    target: str
    table: tuple

    def __post_init__(self):
        object.__setattr__(self, "sources", tuple(self.sources))
        object.__setattr__(self, "table", tuple(int(v) for v in self.table))

    def apply(self, state):
        return apply_classical_map(state, self.sources, self.target, self.table)

    def to_json(self):
        return {"op": "classical_map", "sources": list(self.sources), "target": self.target, "table": list(self.table)}


@dataclass(frozen=True)
class Permute:
    reg: str
    perm: tuple

    def __post_init__(self):
        object.__setattr__(self, "perm", tuple(int(v) for v in self.perm))

    def apply(self, state):
        return apply_permutation(state, self.reg, self.perm)

    def to_json(self):
        return {"op": "permute", "reg": self.reg, "perm": list(self.perm)}


def negate(reg: str, dim: int) -> Permute:
    return Permute(reg, tuple((-v) % dim for v in range(dim)))


@dataclass(frozen=True)
class Dephase:
    """Full computational-basis measurement of the whole system."""

    def to_json(self):
        return {"op": "dephase"}


def op_from_json(d: dict):
    kind = d["op"]
    if kind == "query":
        return Query(d["kind"], d["in"], d["out"], d.get("appended", False), d.get("repeats", False))
    if kind == "matrix":
        m = np.array(d["real"]) + 1j * np.array(d.get("imag", np.zeros_like(d["real"])))
        return MatrixGate(tuple(d["regs"]), m)
    if kind == "diffusion":
        return diffusion(d["regs"][0], d["dim"], d["support"])
    if kind == "uniform_prep":
        return uniform_prep(d["regs"][0], d["dim"], d["support"])
    if kind == "minus_prep":
        return hadamard_minus(d["regs"][0])
    if kind == "phase_flip":
        return PhaseFlip(tuple(d["regs"]), frozenset(tuple(m) for m in d["marked"]))
    if kind == "classical_map":
        return ClassicalMap(tuple(d["sources"]), d["target"], tuple(d["table"]))
    if kind == "permute":
        return Permute(d["reg"], tuple(d["perm"]))
    if kind == "dephase":
        return Dephase()
    raise ValueError(f"unknown circuit op {kind!r}")


# -- circuits ---------------------------------------------------------------------


@dataclass(frozen=True)
class AdversaryCircuit:
    """A static hybrid circuit. Queries are ``Query`` ops; everything else is oracle-free."""

    M: int
    N: int
    registers: tuple
    ops: tuple
    x_regs: tuple
    z_regs: tuple = ()
    name: str = "circuit"

    def __post_init__(self):
        object.__setattr__(self, "registers", tuple((str(n), int(d)) for n, d in self.registers))
        object.__setattr__(self, "ops", tuple(self.ops))
        object.__setattr__(self, "x_regs", tuple(self.x_regs))
        object.__setattr__(self, "z_regs", tuple(self.z_regs))
        layout = self.layout()
        for r in self.x_regs:
            if layout.dim(r) != self.M:
                raise LayoutMismatch(f"output register {r} must have dimension M")
        for op in self.ops:
            if isinstance(op, Query):
                if layout.dim(op.inp) != self.M or layout.dim(op.out) != self.N:
                    raise LayoutMismatch(f"query registers {op.inp},{op.out} have the wrong dimensions")

    @property
    def k(self) -> int:
        return len(self.x_regs)

    @property
    def pattern(self) -> tuple:
        return tuple(op.kind for op in self.ops if isinstance(op, Query))

    @property
    def q(self) -> int:
        return sum(1 for op in self.ops if isinstance(op, Query) and op.kind == "Q" and not op.appended)

    @property
    def c(self) -> int:
        return sum(1 for op in self.ops if isinstance(op, Query) and op.kind == "C" and not op.appended)

    @property
    def y_regs(self) -> tuple:
        return tuple(f"_y{i}" for i in range(self.k))

    @property
    def is_extended(self) -> bool:
        return any(isinstance(op, Query) and op.appended for op in self.ops)

    def layout(self, control_slots: int = 0) -> RegisterLayout:
        return RegisterLayout(self.registers, self.M, self.N, self.pattern.count("C"), control_slots)

    def extended(self) -> AdversaryCircuit:
        """Append the k classical queries y_i = H(x_i) the challenger makes."""
        if self.is_extended:
            return self
        regs = self.registers + tuple((y, self.N) for y in self.y_regs)
        ops = self.ops + tuple(Query("C", x, y, appended=True) for x, y in zip(self.x_regs, self.y_regs))
        return replace(self, registers=regs, ops=ops)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "M": self.M,
            "N": self.N,
            "registers": [[n, d] for n, d in self.registers],
            "pattern": list(self.pattern),
            "unitaries": [op.to_json() for op in self.ops],
            "output_registers": {"x": list(self.x_regs), "z": list(self.z_regs)},
        }

    @classmethod
    def from_json(cls, data) -> AdversaryCircuit:
        if isinstance(data, str):
            data = json.loads(data)
        ops = tuple(op_from_json(d) for d in data["unitaries"])
        circ = cls(
            data["M"], data["N"], tuple(tuple(r) for r in data["registers"]), ops,
            tuple(data["output_registers"]["x"]), tuple(data["output_registers"].get("z", ())),
            data.get("name", "circuit"),
        )
        if "pattern" in data and list(circ.pattern) != list(data["pattern"]):
            raise LayoutMismatch("declared pattern does not match the query ops")
        return circ


# -- queries ----------------------------------------------------------------------


def plain_answer(oracle) -> Callable:
    def answer(key, x):
        return oracle(x)

    return answer


def controlled_answer(oracle, layout: RegisterLayout) -> Callable:
    """Answer through the oracle reprogrammed on the control list held in the key."""
    lo, hi, N = layout.control_offset, layout.control_offset + layout.control_slots, layout.N

    def answer(key, x):
        for code in key[lo:hi]:
            if code and (code - 1) // N == x:
                return (code - 1) % N
        return oracle(x)

    return answer


def apply_query(state: QuantumState, inp: str, out: str, answer: Callable, slot: Optional[int] = None,
                on_duplicate: str = "raise") -> QuantumState:
    """y <- y + answer(x) mod N; with ``slot`` also record (x, answer) in that history slot.

    ``on_duplicate='skip'`` leaves the slot empty on components whose input is
    already recorded (used for the challenger's appended queries).
    """
    layout = state.layout
    i, o = layout.index(inp), layout.index(out)
    N = layout.registers[o][1]
    if layout.registers[i][1] != layout.M or N != layout.N:
        raise LayoutMismatch("query registers do not match the oracle shape")
    h0 = layout.history_offset
    if slot is not None and not 0 <= slot < layout.history_slots:
        raise LayoutMismatch(f"history slot {slot} out of range")
    out_amps = {}
    for key, a in state.amps.items():
        x = key[i]
        y = answer(key, x)
        k = list(key)
        k[o] = (k[o] + y) % N
        if slot is not None:
            s = h0 + slot
            if key[s] != EMPTY:
                raise SlotOccupied(f"history slot {slot} already filled")
            seen = any(c and (c - 1) // N == x for c in key[h0 : h0 + layout.history_slots])
            if seen:
                if on_duplicate == "raise":
                    raise DuplicateClassicalQuery(f"input {x} was already queried classically")
            else:
                k[s] = slot_code(x, y, N)
        out_amps[tuple(k)] = a
    return QuantumState(layout, out_amps)


def quantum_query(state: QuantumState, oracle, inp: str = "x", out: str = "y") -> QuantumState:
    return apply_query(state, inp, out, plain_answer(oracle))


def classical_query(state: QuantumState, oracle, slot: int, inp: str = "x", out: str = "y",
                    on_duplicate: str = "raise") -> QuantumState:
    return apply_query(state, inp, out, plain_answer(oracle), slot=slot, on_duplicate=on_duplicate)


def measure_register(state: QuantumState, names: Sequence[str]) -> dict:
    """Projective measurement of registers; returns value-tuple -> unnormalized post-state."""
    idx = [state.layout.index(n) for n in names]
    parts = {}
    for key, a in state.amps.items():
        parts.setdefault(tuple(key[i] for i in idx), {})[key] = a
    return {v: QuantumState(state.layout, amps) for v, amps in parts.items()}


# -- branches and channels ---------------------------------------------------------


@dataclass(frozen=True)
class Branch:
    """A sub-normalized state with a classical weight; mass = weight * ||state||^2."""

    weight: float
    state: QuantumState
    events: tuple = ()

    @property
    def mass(self) -> float:
        return self.weight * self.state.norm2()


@dataclass(frozen=True)
class Trajectory:
    seed: Optional[int]
    coins: tuple
    outcomes: tuple
    weight: float


def noisy_query(state: QuantumState, answer_or_oracle, p: float, coin: Optional[str] = None,
                inp: str = "x", out: str = "y") -> list:
    """Noisy query O_p: quantum answer with weight 1-p, else measure the input and answer.

    ``coin`` forces one side ('Q' or 'C'); by default both sides are returned
    (exhaustive branching). Returns ``[(weight, coin, outcome, state), ...]``.
    """
    answer = answer_or_oracle if _is_answer(answer_or_oracle) else plain_answer(answer_or_oracle)
    branches = []
    if coin in (None, "Q") and p < 1:
        branches.append((1.0 - p if coin is None else 1.0, "Q", None, apply_query(state, inp, out, answer)))
    if coin in (None, "C") and p > 0:
        w = p if coin is None else 1.0
        for value, part in measure_register(state, [inp]).items():
            branches.append((w, "C", value[0], apply_query(part, inp, out, answer)))
    return branches


def _is_answer(fn) -> bool:
    return getattr(fn, "__code__", None) is not None and fn.__code__.co_argcount == 2


def dephase(state: QuantumState) -> list:
    """Measure every register and slot; one unnormalized basis branch per support element."""
    return [(key, QuantumState(state.layout, {key: a})) for key, a in state.amps.items()]


# -- execution --------------------------------------------------------------------


@dataclass(frozen=True)
class Mode:
    kind: str = "pure"  # pure | noisy | depth
    p: float = 0.0
    d: int = 0

    @classmethod
    def parse(cls, text) -> Mode:
        if isinstance(text, Mode):
            return text
        text = str(text)
        if text == "pure":
            return cls()
        name, _, value = text.partition(":")
        if name == "noisy":
            from fractions import Fraction

            p = float(Fraction(value))
            if not 0 <= p <= 1:
                raise ValueError("noise rate must lie in [0, 1]")
            return cls("noisy", p=p)
        if name == "depth":
            d = int(value)
            if d < 1:
                raise ValueError("depth must be positive")
            return cls("depth", d=d)
        raise ValueError(f"unknown mode {text!r}")

    def __str__(self):
        if self.kind == "noisy":
            return f"noisy:{self.p}"
        if self.kind == "depth":
            return f"depth:{self.d}"
        return "pure"


@dataclass
class RunResult:
    outcomes: dict  # (xs, ys, z) -> probability
    branches: list
    mode: Mode
    backend: str
    trajectories: list = field(default_factory=list)

    def total(self) -> float:
        return math.fsum(self.outcomes.values())


class Executor:
    """Walks a circuit over a list of branches; the query hook decides how queries are answered.

    ``on_query(branch, position, op, slot) -> list[Branch]`` is called for each
    ``Query`` op (positions are 1-based in pattern order).
    """

    def __init__(self, circuit: AdversaryCircuit, layout: RegisterLayout, on_query: Callable,
                 after_query: Optional[Callable] = None, rng: Optional[random.Random] = None):
        self.circuit = circuit
        self.layout = layout
        self.on_query = on_query
        self.after_query = after_query
        self.rng = rng

    def run(self, branches: list) -> list:
        position, slot = 0, 0
        for op in self.circuit.ops:
            if isinstance(op, Query):
                position += 1
                use_slot = slot if op.kind == "C" else None
                branches = [nb for b in branches for nb in self.on_query(b, position, op, use_slot)]
                if op.kind == "C":
                    slot += 1
                if self.after_query is not None:
                    branches = [nb for b in branches for nb in self.after_query(b, position, op)]
            elif isinstance(op, Dephase):
                branches = [nb for b in branches for nb in dephase_branch(b, self.rng)]
            else:
                branches = [Branch(b.weight, op.apply(b.state), b.events) for b in branches]
            if self.rng is not None:
                branches = [_normalize(b) for b in branches]
            if sum(b.state.support() for b in branches) > memory_cap():
                raise MemoryCapExceeded("branch set exceeds the memory cap")
        return branches


def _normalize(branch: Branch) -> Branch:
    n = branch.state.norm2()
    if n == 0 or abs(n - 1) < 1e-15:
        return branch
    s = 1 / math.sqrt(n)
    return Branch(branch.weight * n, QuantumState(branch.state.layout, {k: a * s for k, a in branch.state.amps.items()}), branch.events)


def _sample(rng: random.Random, options: list):
    """Pick one (mass, item) proportionally to mass."""
    total = math.fsum(m for m, _ in options)
    r = rng.random() * total
    acc = 0.0
    for m, item in options:
        acc += m
        if r < acc:
            return item
    return options[-1][1]


def dephase_branch(branch: Branch, rng: Optional[random.Random] = None) -> list:
    parts = [Branch(branch.weight, s, branch.events + (("dephase", key),)) for key, s in dephase(branch.state)]
    if rng is None:
        return parts
    chosen = _sample(rng, [(p.state.norm2(), p) for p in parts])
    return [Branch(branch.weight, chosen.state, chosen.events)]


def noisy_branch(branch: Branch, op: Query, answer: Callable, p: float, rng: Optional[random.Random],
                 position: int) -> list:
    if rng is None:
        return [Branch(branch.weight * w, s, branch.events + ((position, coin, outcome),))
                for w, coin, outcome, s in noisy_query(branch.state, answer, p, None, op.inp, op.out)]
    coin = "C" if rng.random() < p else "Q"
    options = noisy_query(branch.state, answer, p, coin, op.inp, op.out)
    if coin == "C":
        chosen = _sample(rng, [(s.norm2(), (w, coin, o, s)) for w, coin, o, s in options])
    else:
        chosen = options[0]
    _, coin, outcome, s = chosen
    return [Branch(branch.weight, s, branch.events + ((position, coin, outcome),))]


def outcome_distribution(branches: list, circuit: AdversaryCircuit, extra_keys: Optional[Callable] = None) -> dict:
    """Exact outcome law over (xs, ys, z) (plus an optional extra key per basis state), fsum-accumulated."""
    layout = branches[0].state.layout if branches else circuit.extended().layout()
    xi = [layout.index(r) for r in circuit.x_regs]
    yi = [layout.index(r) for r in circuit.y_regs]
    zi = [layout.index(r) for r in circuit.z_regs]
    terms = {}
    for b in branches:
        w = b.weight
        for key, a in b.state.amps.items():
            out = (tuple(key[i] for i in xi), tuple(key[i] for i in yi), tuple(key[i] for i in zi))
            if extra_keys is not None:
                out = out + (extra_keys(key),)
            terms.setdefault(out, []).append(w * (a.real * a.real + a.imag * a.imag))
    return {k: math.fsum(v) for k, v in terms.items()}


def run_circuit(circuit: AdversaryCircuit, oracle, mode="pure", backend: str = "exhaustive",
                trials: int = 1000, seed: int = 0, control_slots: int = 0) -> RunResult:
    """Run the circuit with its appended challenger queries against ``oracle``.

    Quantum queries follow ``mode``; classical queries (including the k appended
    ones) are always purified into history slots.
    """
    mode = Mode.parse(mode)
    if backend not in ("exhaustive", "sampled"):
        raise ValueError(f"unknown backend {backend!r}")
    ext = circuit.extended()
    layout = ext.layout(control_slots)
    answer = plain_answer(oracle)
    count = [0]

    def on_query(b, position, op, slot):
        if op.kind == "C":
            dup = op.on_duplicate
            return [Branch(b.weight, apply_query(b.state, op.inp, op.out, answer, slot, dup), b.events)]
        if mode.kind == "noisy":
            return noisy_branch(b, op, answer, mode.p, rng, position)
        return [Branch(b.weight, apply_query(b.state, op.inp, op.out, answer), b.events)]

    def after_query(b, position, op):
        if mode.kind != "depth" or op.appended:
            return [b]
        count[0] += 1
        if count[0] % mode.d == 0:
            return dephase_branch(b, rng)
        return [b]

    if backend == "exhaustive" or mode.kind == "pure":
        rng = None
        branches = Executor(ext, layout, on_query, after_query).run([Branch(1.0, QuantumState.zero(layout))])
        return RunResult(outcome_distribution(branches, ext), branches, mode, "exhaustive")

    if trials < 1:
        raise ValueError("trials must be positive")
    master = random.Random(seed)
    acc, trajs = {}, []
    for _ in range(trials):
        tseed = master.getrandbits(64)
        rng = random.Random(tseed)
        count[0] = 0
        branches = Executor(ext, layout, on_query, after_query, rng).run([Branch(1.0, QuantumState.zero(layout))])
        b = branches[0]
        dist = outcome_distribution([Branch(1.0, b.state, b.events)], ext)
        norm = math.fsum(dist.values())
        for k, v in dist.items():
            acc.setdefault(k, []).append(v / norm / trials)
        coins = tuple(e for e in b.events if isinstance(e[0], int))
        outcomes = tuple(e for e in b.events if not isinstance(e[0], int))
        trajs.append(Trajectory(tseed, coins, outcomes, 1.0 / trials))
    return RunResult({k: math.fsum(v) for k, v in acc.items()}, [], mode, "sampled", trajs)


def success_probability(result: RunResult, predicate: Callable) -> float:
    return math.fsum(p for out, p in result.outcomes.items() if predicate(*out[:3]))
