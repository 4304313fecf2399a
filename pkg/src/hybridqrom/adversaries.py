"""Concrete hybrid adversary circuits.

Staged Grover for multi-image search, a classical exhaustive baseline, a
random guesser, and the small fixed circuits the verification grids run.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass
from typing import Optional

from .relations import GameSpec, Relation
from .statevec import (
    AdversaryCircuit,
    ClassicalMap,
    PhaseFlip,
    Query,
    diffusion,
    hadamard_minus,
    negate,
    uniform_prep,
)


class BudgetMismatch(ValueError):
    pass


class BudgetExceedsDomain(ValueError):
    pass


def _load(reg: str, value: int) -> ClassicalMap:
    """Set a zero register to a constant."""
    return ClassicalMap((), reg, (value,))


def _copy_map(sources, dims, target, fn) -> ClassicalMap:
    """ClassicalMap whose table is fn(values) over the row-major product of source dims."""
    table = [fn(vals) for vals in itertools.product(*[range(d) for d in dims])]
    return ClassicalMap(tuple(sources), target, tuple(table))


def _remaining(targets, found) -> Counter:
    rem = Counter(targets)
    for y in found:
        if rem[y] > 0:
            rem[y] -= 1
    return +rem


# -- staged Grover ----------------------------------------------------------------


@dataclass(frozen=True)
class StagedGroverSpec:
    k: int
    u: int  # Grover iterations per stage
    v: int  # classical probes per stage
    targets: tuple
    M: int
    N: int
    kickback: Optional[bool] = None  # default: one-query phase kickback when N == 2 and k == 1

    def __post_init__(self):
        object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
        if self.k < 1 or self.u < 0 or self.v < 0:
            raise BudgetMismatch("stage counts and budgets must be nonnegative with k >= 1")
        if len(self.targets) != self.k:
            raise BudgetMismatch("need one target image per stage")
        if any(not 0 <= t < self.N for t in self.targets):
            raise ValueError("target image out of range")
        if self.k * self.v > self.M:
            raise BudgetMismatch("classical probes exceed the domain (v*k > M)")

    @property
    def uses_kickback(self) -> bool:
        if self.kickback is not None:
            if self.kickback and not (self.N == 2 and self.k == 1):
                raise BudgetMismatch("kickback marking needs N == 2 and a single target")
            return self.kickback
        return self.N == 2 and self.k == 1

    @property
    def queries_per_iteration(self) -> int:
        return 1 if self.uses_kickback else 2

    @property
    def q(self) -> int:
        """Quantum queries actually spent, including marking overhead and value lookups."""
        return self.k * self.u * self.queries_per_iteration + (self.k - 1)

    @property
    def c(self) -> int:
        return self.k * self.v


def build_staged_grover(spec: StagedGroverSpec) -> AdversaryCircuit:
    """k stages of (v classical probes at fresh points, u Grover iterations, commit).

    Stage s marks preimages of the targets not yet accounted for by the values
    committed in earlier stages. Non-final stages spend one quantum query to load
    the committed point's image so later stages can mark the rest.
    """
    M, N, k, u, v = spec.M, spec.N, spec.k, spec.u, spec.v
    regs, ops = [], []
    probed = set()
    values = []  # registers holding images of committed points
    for s in range(k):
        points = [s * v + i for i in range(v)]
        probed |= set(points)
        for i, pt in enumerate(points):
            a, p = f"a{s}_{i}", f"p{s}_{i}"
            regs += [(a, M), (p, N)]
            ops += [_load(a, pt), Query("C", a, p)]
        support = [x for x in range(M) if x not in probed] or list(range(M))
        g = f"g{s}"
        regs.append((g, M))
        ops.append(uniform_prep(g, M, support))
        if u:
            if spec.uses_kickback:
                m = f"m{s}"
                regs.append((m, N))
                ops.append(hadamard_minus(m))
                for _ in range(u):
                    ops += [Query("Q", g, m), diffusion(g, M, support)]
                # kickback marks H(x) = 1; for target 0 that differs by a global sign only
            else:
                w = f"w{s}"
                regs.append((w, N))
                marked = set()
                for earlier in itertools.product(range(N), repeat=len(values)):
                    rem = _remaining(spec.targets, earlier)
                    for val in rem:
                        marked.add((val,) + earlier)
                for _ in range(u):
                    ops += [
                        Query("Q", g, w),
                        PhaseFlip((w,) + tuple(values), frozenset(marked)),
                        negate(w, N),
                        Query("Q", g, w),
                        negate(w, N),
                        diffusion(g, M, support),
                    ]
        x = f"x{s}"
        regs.append((x, M))
        probe_regs = [f"p{s}_{i}" for i in range(v)]
        dims = [N] * v + [N] * len(values) + [M]

        def commit(vals, points=points, nv=len(values)):
            probe_vals, earlier, gval = vals[:v], vals[v : v + nv], vals[-1]
            rem = _remaining(spec.targets, earlier)
            for pt, val in zip(points, probe_vals):
                if rem[val] > 0:
                    return pt
            return gval

        ops.append(_copy_map(probe_regs + values + [g], dims, x, commit))
        if s < k - 1:
            c = f"c{s}"
            regs.append((c, N))
            ops.append(Query("Q", x, c))
            values.append(c)
    xs = tuple(f"x{s}" for s in range(k))
    circ = AdversaryCircuit(M, N, tuple(regs), tuple(ops), xs, (), f"staged-grover-k{k}-u{u}-v{v}")
    if circ.q != spec.q or circ.c != spec.c:
        raise BudgetMismatch("built circuit does not match its declared budget")
    return circ


def grover_closed_form(u: int, marked: int, size: int) -> float:
    """sin^2((2u+1) arcsin(sqrt(marked/size)))."""
    theta = math.asin(math.sqrt(marked / size))
    return math.sin((2 * u + 1) * theta) ** 2


# -- baselines --------------------------------------------------------------------


def build_random_guess(k: int, M: int, N: int) -> AdversaryCircuit:
    """Zero-query circuit outputting x = (0, 1, ..., k-1)."""
    if k > M:
        raise BudgetExceedsDomain("need k distinct inputs")
    regs = tuple((f"x{j}", M) for j in range(k))
    ops = tuple(_load(f"x{j}", j) for j in range(1, k))
    return AdversaryCircuit(M, N, regs, ops, tuple(r for r, _ in regs), (), f"random-guess-k{k}")


def build_block_random_guess(g: int, k: int, M: int, N: int) -> AdversaryCircuit:
    """Random guess on each of g packed rows: block i outputs (i*M, ..., i*M + k-1)."""
    if k > M:
        raise BudgetExceedsDomain("need k distinct inputs per row")
    regs = tuple((f"x{i}_{j}", g * M) for i in range(g) for j in range(k))
    ops = tuple(_load(f"x{i}_{j}", i * M + j) for i in range(g) for j in range(k) if i * M + j)
    return AdversaryCircuit(g * M, N, regs, ops, tuple(r for r, _ in regs), (), f"block-random-guess-g{g}k{k}")


def _expected_success(relation: Relation, xs, known: dict, N: int, challenge) -> float:
    unknown = [x for x in xs if x not in known]
    total = 0
    for vals in itertools.product(range(N), repeat=len(unknown)):
        table = dict(known)
        table.update(zip(unknown, vals))
        ys = tuple(table[x] for x in xs)
        total += relation.contains(ys, xs=xs, challenge=challenge)
    return total / N ** len(unknown)


def build_classical_exhaustive(k: int, budget: int, game: GameSpec, challenge=None) -> AdversaryCircuit:
    """Probe points 0..budget-1 classically, then output the distinct k-tuple with the
    highest success probability given what was seen (ties broken lexicographically)."""
    M, N = game.M, game.N
    if budget > M:
        raise BudgetExceedsDomain(f"budget {budget} exceeds domain size {M}")
    if k != game.k:
        raise BudgetMismatch("arity differs from the game")
    if k > M:
        raise BudgetExceedsDomain("need k distinct inputs")
    if challenge is None:
        challenge = game.sample_challenge()
    relation = game.relation
    regs, ops = [], []
    for i in range(budget):
        regs += [(f"a{i}", M), (f"p{i}", N)]
        ops += [_load(f"a{i}", i), Query("C", f"a{i}", f"p{i}")]
    candidates = list(itertools.permutations(range(M), k))
    choice = {}
    for vals in itertools.product(range(N), repeat=budget):
        known = dict(zip(range(budget), vals))
        best = max(candidates, key=lambda xs: (_expected_success(relation, xs, known, N, challenge), [-x for x in xs]))
        choice[vals] = best
    for j in range(k):
        regs.append((f"x{j}", M))
        ops.append(_copy_map([f"p{i}" for i in range(budget)], [N] * budget, f"x{j}", lambda vals, j=j: choice[tuple(vals)][j]))
    return AdversaryCircuit(M, N, tuple(regs), tuple(ops), tuple(f"x{j}" for j in range(k)), (),
                            f"classical-exhaustive-k{k}-b{budget}")


# -- small fixed circuits for the inequality grids -------------------------------


def _spread_outputs(ops, regs, k, M, first: str):
    """x_j = first + j mod M for j >= 1, keeping outputs distinct."""
    names = [first]
    for j in range(1, k):
        name = f"x{j}"
        regs.append((name, M))
        ops.append(_copy_map([first], [M], name, lambda vals, j=j: (vals[0] + j) % M))
        names.append(name)
    return tuple(names)


def build_grover_stage(k: int, q: int, c: int, M: int, N: int = 2, target: int = 1) -> AdversaryCircuit:
    """One search stage with exactly q quantum and c classical queries.

    Probes points 0..c-1, runs q marking iterations (phase kickback) over the
    rest, commits the first probe hitting ``target`` or else the search register.
    Extra outputs are shifts of the first.
    """
    if N != 2:
        raise BudgetMismatch("the one-query marking stage needs N == 2")
    if c > M or k > M:
        raise BudgetExceedsDomain("need c <= M and k <= M")
    regs, ops = [], []
    for i in range(c):
        regs += [(f"a{i}", M), (f"p{i}", N)]
        ops += [_load(f"a{i}", i), Query("C", f"a{i}", f"p{i}")]
    support = list(range(c, M)) or list(range(M))
    regs += [("g", M), ("m", N), ("x0", M)]
    ops += [uniform_prep("g", M, support), hadamard_minus("m")]
    for _ in range(q):
        ops += [Query("Q", "g", "m"), diffusion("g", M, support)]

    def commit(vals):
        for i in range(c):
            if vals[i] == target:
                return i
        return vals[-1]

    ops.append(_copy_map([f"p{i}" for i in range(c)] + ["g"], [N] * c + [M], "x0", commit))
    xs = _spread_outputs(ops, regs, k, M, "x0")
    return AdversaryCircuit(M, N, tuple(regs), tuple(ops), xs, (), f"grover-stage-q{q}-c{c}")


def build_classical_probe(k: int, q: int, c: int, M: int, N: int = 2, target: int = 1) -> AdversaryCircuit:
    """Probes points 0..c-1 classically and outputs the first hit on ``target``; otherwise
    outputs a uniformly superposed point that its q quantum queries were made on."""
    if c > M or k > M:
        raise BudgetExceedsDomain("need c <= M and k <= M")
    regs, ops = [], []
    for i in range(c):
        regs += [(f"a{i}", M), (f"p{i}", N)]
        ops += [_load(f"a{i}", i), Query("C", f"a{i}", f"p{i}")]
    regs += [("s", M), ("x0", M)]
    ops.append(uniform_prep("s", M, range(M)))
    for i in range(q):
        regs.append((f"o{i}", N))
        ops.append(Query("Q", "s", f"o{i}"))

    def commit(vals):
        for i in range(c):
            if vals[i] == target:
                return i
        return vals[-1]

    ops.append(_copy_map([f"p{i}" for i in range(c)] + ["s"], [N] * c + [M], "x0", commit))
    xs = _spread_outputs(ops, regs, k, M, "x0")
    return AdversaryCircuit(M, N, tuple(regs), tuple(ops), xs, (), f"classical-probe-q{q}-c{c}")


def build_fixed_output(k: int, q: int, c: int, M: int, N: int = 2) -> AdversaryCircuit:
    """Outputs x = (0, ..., k-1) regardless of the oracle. Its quantum queries act on a
    uniform superposition; its classical queries hit points M-1, M-2, ..."""
    if c > M or k > M:
        raise BudgetExceedsDomain("need c <= M and k <= M")
    regs, ops = [], []
    regs.append(("s", M))
    ops.append(uniform_prep("s", M, range(M)))
    for i in range(q):
        regs.append((f"o{i}", N))
        ops.append(Query("Q", "s", f"o{i}"))
    for i in range(c):
        regs += [(f"a{i}", M), (f"p{i}", N)]
        ops += [_load(f"a{i}", M - 1 - i), Query("C", f"a{i}", f"p{i}")]
    for j in range(k):
        regs.append((f"x{j}", M))
        if j:
            ops.append(_load(f"x{j}", j))
    return AdversaryCircuit(M, N, tuple(regs), tuple(ops), tuple(f"x{j}" for j in range(k)), (),
                            f"fixed-output-q{q}-c{c}")


def build_blind_output(k: int, q: int, c: int, M: int, N: int = 2) -> AdversaryCircuit:
    """Outputs x = (0, ..., k-1) while querying only the basis point M-1 quantumly and
    points M-1, M-2, ... classically; its queries never touch its outputs."""
    if c > M or k > M - 1:
        raise BudgetExceedsDomain("need c <= M and k < M")
    regs, ops = [("s", M)], [_load("s", M - 1)]
    for i in range(q):
        regs.append((f"o{i}", N))
        ops.append(Query("Q", "s", f"o{i}"))
    for i in range(c):
        regs += [(f"a{i}", M), (f"p{i}", N)]
        ops += [_load(f"a{i}", M - 1 - i), Query("C", f"a{i}", f"p{i}")]
    for j in range(k):
        regs.append((f"x{j}", M))
        if j:
            ops.append(_load(f"x{j}", j))
    return AdversaryCircuit(M, N, tuple(regs), tuple(ops), tuple(f"x{j}" for j in range(k)), (),
                            f"blind-output-q{q}-c{c}")


def build_pair_probe(M: int, N: int) -> AdversaryCircuit:
    """Two quantum queries on s and s+1 (s uniform); outputs s if H(s) != 0 else s+1."""
    regs = [("s", M), ("t", M), ("o0", N), ("o1", N), ("x0", M)]
    ops = [
        uniform_prep("s", M, range(M)),
        Query("Q", "s", "o0"),
        _copy_map(["s"], [M], "t", lambda vals: (vals[0] + 1) % M),
        Query("Q", "t", "o1"),
        _copy_map(["s", "o0"], [M, N], "x0", lambda vals: vals[0] if vals[1] else (vals[0] + 1) % M),
    ]
    return AdversaryCircuit(M, N, tuple(regs), tuple(ops), ("x0",), (), "pair-probe")


def build_kickback_pair(M: int, N: int = 2) -> AdversaryCircuit:
    """A phase-kickback marking query plus diffusion on s, then a plain query on s+1; outputs s."""
    if N != 2:
        raise BudgetMismatch("phase kickback needs N == 2")
    regs = [("s", M), ("m", N), ("t", M), ("o", N)]
    ops = [
        uniform_prep("s", M, range(M)),
        hadamard_minus("m"),
        Query("Q", "s", "m"),
        diffusion("s", M, range(M)),
        _copy_map(["s"], [M], "t", lambda vals: (vals[0] + 1) % M),
        Query("Q", "t", "o"),
    ]
    return AdversaryCircuit(M, N, tuple(regs), tuple(ops), ("s",), (), "kickback-pair")


def build_fixed_pair(M: int, N: int = 2) -> AdversaryCircuit:
    """Queries basis points 0 and 1 quantumly and outputs 0."""
    regs = [("a", M), ("b", M), ("o0", N), ("o1", N), ("x0", M)]
    ops = [_load("b", 1), Query("Q", "a", "o0"), Query("Q", "b", "o1")]
    return AdversaryCircuit(M, N, tuple(regs), tuple(ops), ("x0",), (), "fixed-pair")


BUNDLED = {
    "grover-stage": build_grover_stage,
    "classical-probe": build_classical_probe,
    "fixed-output": build_fixed_output,
}

NOISY_BUNDLED = {
    "pair-probe": build_pair_probe,
    "kickback-pair": build_kickback_pair,
    "fixed-pair": build_fixed_pair,
}
