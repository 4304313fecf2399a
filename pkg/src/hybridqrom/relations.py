"""Oracle tables, reprogramming, winning relations and the p(R) quantity."""

from __future__ import annotations

import itertools
import json
import math
import random
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import jsonschema

from .exact import ExactValue

ENUMERATION_LIMIT = 2**24


class DuplicateInputs(ValueError):
    pass


class EnumerationTooLarge(RuntimeError):
    pass


class UnsupportedKind(ValueError):
    pass


class ArityMismatch(ValueError):
    pass


class OracleDependentRelation(ValueError):
    """p(R) is undefined for relations that read the oracle; use the game harness."""


@dataclass(frozen=True)
class OracleTable:
    M: int
    N: int
    table: tuple

    def __post_init__(self):
        object.__setattr__(self, "table", tuple(int(v) for v in self.table))
        if self.M < 1 or self.N < 1:
            raise ValueError("domain and codomain sizes must be positive")
        if len(self.table) != self.M:
            raise ValueError(f"table has {len(self.table)} entries, expected {self.M}")
        if any(not 0 <= v < self.N for v in self.table):
            raise ValueError("table entry out of range")

    def __call__(self, x: int) -> int:
        return self.table[x]

    @classmethod
    def all_tables(cls, M: int, N: int):
        """Every function [M] -> [N], in lexicographic order of the table."""
        for values in itertools.product(range(N), repeat=M):
            yield cls(M, N, values)

    @classmethod
    def random(cls, M: int, N: int, rng: random.Random) -> OracleTable:
        return cls(M, N, [rng.randrange(N) for _ in range(M)])


@dataclass(frozen=True)
class ReprogrammedOracle:
    base: OracleTable
    patch: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "patch", tuple((int(x), int(y)) for x, y in self.patch))
        inputs = [x for x, _ in self.patch]
        if len(set(inputs)) != len(inputs):
            raise DuplicateInputs(f"patch inputs {inputs} repeat")
        for x, y in self.patch:
            if not (0 <= x < self.base.M and 0 <= y < self.base.N):
                raise ValueError(f"patch entry ({x}, {y}) out of range")

    @property
    def M(self) -> int:
        return self.base.M

    @property
    def N(self) -> int:
        return self.base.N

    def __call__(self, x: int) -> int:
        for px, py in self.patch:
            if px == x:
                return py
        return self.base(x)

    def as_table(self) -> OracleTable:
        return OracleTable(self.M, self.N, [self(x) for x in range(self.M)])


def reprogram(base: OracleTable, xs: Sequence[int], ys: Sequence[int]) -> ReprogrammedOracle:
    """H_{x,y}: answers y_i on x_i and base(z) elsewhere."""
    if len(xs) != len(ys):
        raise ValueError("input and output vectors differ in length")
    if isinstance(base, ReprogrammedOracle):
        base = base.as_table()
    return ReprogrammedOracle(base, tuple(zip(xs, ys)))


def vectors_equivalent(a: Sequence, b: Sequence) -> bool:
    """True iff b is a permutation of a."""
    return len(a) == len(b) and Counter(a) == Counter(b)


# -- relations --------------------------------------------------------------------

KINDS = ("multi-image", "multi-collision", "multi-search", "three-sum", "custom")


@dataclass(frozen=True)
class Relation:
    """A winning relation over output tuples.

    ``N`` is the codomain size, except for three-sum where it is the range
    parameter: values -N..N are encoded as 0..2N.
    """

    kind: str
    k: int
    N: int
    targets: Optional[tuple] = None
    target: int = 0
    predicate: Optional[Callable] = field(default=None, compare=False)
    oracle_dependent: bool = False

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UnsupportedKind(self.kind)
        if self.k < 1 or self.N < 1:
            raise ValueError("arity and codomain size must be positive")
        if self.kind == "three-sum" and self.k != 3:
            raise ArityMismatch("three-sum has arity 3")
        if self.kind == "multi-image" and self.targets is not None:
            object.__setattr__(self, "targets", tuple(int(t) for t in self.targets))
            if len(self.targets) != self.k:
                raise ArityMismatch("multi-image needs exactly k targets")
        if self.kind == "custom" and self.predicate is None:
            raise ValueError("custom relations need a predicate")

    @classmethod
    def multi_image(cls, targets: Sequence[int], N: int) -> Relation:
        return cls("multi-image", len(targets), N, targets=tuple(targets))

    @classmethod
    def multi_collision(cls, k: int, N: int) -> Relation:
        return cls("multi-collision", k, N)

    @classmethod
    def multi_search(cls, k: int, N: int, target: int = 0) -> Relation:
        return cls("multi-search", k, N, target=target)

    @classmethod
    def three_sum(cls, N: int) -> Relation:
        return cls("three-sum", 3, N)

    @classmethod
    def custom(cls, k: int, N: int, predicate: Callable, oracle_dependent: bool = False) -> Relation:
        """``predicate(xs, ys, z, challenge, oracle) -> bool``."""
        return cls("custom", k, N, predicate=predicate, oracle_dependent=oracle_dependent)

    @property
    def codomain_size(self) -> int:
        return 2 * self.N + 1 if self.kind == "three-sum" else self.N

    @property
    def permutation_invariant(self) -> bool:
        return self.kind in ("multi-collision", "multi-search", "three-sum")

    def contains(self, ys: Sequence[int], xs=None, z=None, challenge=None, oracle=None) -> bool:
        """Membership of one ordering of ys (no search over permutations)."""
        if len(ys) != self.k:
            raise ArityMismatch(f"expected {self.k} outputs, got {len(ys)}")
        if self.kind == "multi-image":
            targets = self.targets if self.targets is not None else challenge
            return tuple(ys) == tuple(targets)
        if self.kind == "multi-collision":
            return len(set(ys)) == 1
        if self.kind == "multi-search":
            return all(y == self.target for y in ys)
        if self.kind == "three-sum":
            return sum(ys) - 3 * self.N == 0
        return bool(self.predicate(tuple(xs or ()), tuple(ys), z, challenge, oracle))

    def contains_up_to_permutation(self, ys: Sequence[int], **context) -> bool:
        if self.permutation_invariant:
            return self.contains(ys, **context)
        return any(self.contains(perm, **context) for perm in set(itertools.permutations(ys)))


def _check_p_of_r_defined(relation: Relation) -> None:
    if relation.oracle_dependent:
        raise OracleDependentRelation("p(R) undefined for oracle-dependent relations; use the game harness")
    if relation.kind == "multi-image" and relation.targets is None:
        raise ValueError("multi-image p(R) needs fixed targets")


def p_of_r_exact(relation: Relation, limit: int = ENUMERATION_LIMIT, short_circuit: bool = True) -> ExactValue:
    """Brute-force Pr over uniform y in Y^k that some permutation of y lies in R."""
    _check_p_of_r_defined(relation)
    size = relation.codomain_size
    total = size**relation.k
    if total > limit:
        raise EnumerationTooLarge(f"{total} tuples exceed the limit {limit}")
    if short_circuit:
        check = relation.contains_up_to_permutation
    else:
        def check(ys):
            return any(relation.contains(perm) for perm in itertools.permutations(ys))
    hits = sum(1 for ys in itertools.product(range(size), repeat=relation.k) if check(ys))
    return ExactValue.of(Fraction(hits, total))


def p_of_r_closed_form(relation: Relation) -> ExactValue:
    k, N = relation.k, relation.N
    if relation.kind == "multi-image":
        _check_p_of_r_defined(relation)
        # distinct orderings of the target multiset; k! when targets are distinct
        arrangements = math.factorial(k)
        for count in Counter(relation.targets).values():
            arrangements //= math.factorial(count)
        return ExactValue.of(Fraction(arrangements, N**k))
    if relation.kind == "multi-collision":
        return ExactValue.of(Fraction(1, N ** (k - 1)))
    if relation.kind == "multi-search":
        return ExactValue.of(Fraction(1, N**k))
    if relation.kind == "three-sum":
        return ExactValue.of(Fraction(3 * N * N + 3 * N + 1, (2 * N + 1) ** 3))
    raise UnsupportedKind("custom relations have no closed form; use p_of_r_exact")


# -- games ------------------------------------------------------------------------


@dataclass(frozen=True)
class OutputTuple:
    xs: tuple
    ys: tuple
    z: object = None

    def __post_init__(self):
        object.__setattr__(self, "xs", tuple(self.xs))
        object.__setattr__(self, "ys", tuple(self.ys))
        if len(self.xs) != len(self.ys):
            raise ArityMismatch("x and y vectors differ in length")

    @property
    def k(self) -> int:
        return len(self.xs)


@dataclass(frozen=True)
class ChallengeSampler:
    """Deterministic challenge source; oracle-independent.

    ``none`` gives no challenge, ``fixed`` returns ``value``, ``distinct-targets``
    draws k distinct images from the seed.
    """

    type: str = "none"
    seed: int = 0
    value: Optional[tuple] = None

    def sample(self, k: int, N: int, seed: Optional[int] = None):
        if self.type == "none":
            return None
        if self.type == "fixed":
            return tuple(self.value)
        if self.type == "distinct-targets":
            rng = random.Random(self.seed if seed is None else seed)
            return tuple(rng.sample(range(N), k))
        raise ValueError(f"unknown challenge type {self.type!r}")


@dataclass(frozen=True)
class GameSpec:
    relation: Relation
    M: int
    N: int
    challenge: ChallengeSampler = ChallengeSampler()
    outputs_distinct_required: bool = True
    any_order: bool = False  # win if some reordering of y satisfies the relation

    @property
    def k(self) -> int:
        return self.relation.k

    def sample_challenge(self, seed: Optional[int] = None):
        return self.challenge.sample(self.k, self.N, seed)


def evaluate_predicate(game: GameSpec, oracle, challenge, out: OutputTuple) -> bool:
    """V^H: relation holds, y_i = H(x_i) for every i, and x is duplicate-free when required."""
    if out.k != game.k:
        raise ArityMismatch(f"game has arity {game.k}, output has {out.k}")
    if any(oracle(x) != y for x, y in zip(out.xs, out.ys)):
        return False
    if game.outputs_distinct_required and len(set(out.xs)) != len(out.xs):
        return False
    check = game.relation.contains_up_to_permutation if game.any_order else game.relation.contains
    return check(out.ys, xs=out.xs, z=out.z, challenge=challenge, oracle=oracle)


# -- game file format -------------------------------------------------------------

GAME_SCHEMA = {
    "type": "object",
    "required": ["kind", "k", "M", "N"],
    "properties": {
        "kind": {"enum": ["multi-image", "multi-collision", "multi-search", "three-sum"]},
        "k": {"type": "integer", "minimum": 1},
        "M": {"type": "integer", "minimum": 1},
        "N": {"type": "integer", "minimum": 1},
        "parameters": {
            "type": "object",
            "properties": {
                "targets": {"type": "array", "items": {"type": "integer", "minimum": 0}},
                "target": {"type": "integer", "minimum": 0},
            },
        },
        "outputs_distinct_required": {"type": "boolean"},
        "any_order": {"type": "boolean"},
        "challenge": {
            "type": "object",
            "required": ["type"],
            "properties": {
                "type": {"enum": ["none", "fixed", "distinct-targets"]},
                "seed": {"type": "integer"},
                "value": {"type": "array", "items": {"type": "integer"}},
            },
        },
    },
}


def game_from_json(data) -> GameSpec:
    if isinstance(data, str):
        data = json.loads(data)
    jsonschema.validate(data, GAME_SCHEMA)
    kind, k, N = data["kind"], data["k"], data["N"]
    params = data.get("parameters", {})
    if kind == "multi-image":
        targets = params.get("targets")
        relation = Relation("multi-image", k, N, targets=tuple(targets) if targets is not None else None)
    elif kind == "multi-collision":
        relation = Relation.multi_collision(k, N)
    elif kind == "multi-search":
        relation = Relation.multi_search(k, N, params.get("target", 0))
    else:
        if k != 3:
            raise ArityMismatch("three-sum has arity 3")
        relation = Relation.three_sum(N)
    ch = data.get("challenge", {"type": "none"})
    sampler = ChallengeSampler(ch["type"], ch.get("seed", 0), tuple(ch["value"]) if "value" in ch else None)
    return GameSpec(relation, data["M"], relation.codomain_size, sampler,
                    data.get("outputs_distinct_required", True), data.get("any_order", False))


def game_to_json(game: GameSpec) -> dict:
    rel = game.relation
    if rel.kind == "custom":
        raise UnsupportedKind("custom predicates do not serialize")
    params = {}
    if rel.kind == "multi-image" and rel.targets is not None:
        params["targets"] = list(rel.targets)
    if rel.kind == "multi-search":
        params["target"] = rel.target
    challenge = {"type": game.challenge.type, "seed": game.challenge.seed}
    if game.challenge.value is not None:
        challenge["value"] = list(game.challenge.value)
    return {
        "kind": rel.kind,
        "k": rel.k,
        "M": game.M,
        "N": rel.N,
        "parameters": params,
        "outputs_distinct_required": game.outputs_distinct_required,
        "any_order": game.any_order,
        "challenge": challenge,
    }
