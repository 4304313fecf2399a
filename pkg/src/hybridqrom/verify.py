"""Verification harnesses: game play, inequality grids, lifting and product games."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional

import jsonschema
from scipy.stats import beta

from .adversaries import BUNDLED, NOISY_BUNDLED, BudgetExceedsDomain
from .bounds import alpha_distribution, hybrid_loss_corrected, hybrid_loss_exact, noisy_loss_corrected, noisy_loss_exact
from .relations import (
    ArityMismatch,
    GameSpec,
    OracleTable,
    OutputTuple,
    evaluate_predicate,
    game_from_json,
    p_of_r_exact,
)
from .reprogram import (
    ReprogramSchedule,
    as_classical,
    enumerate_schedules,
    predicate_for,
    run_noisy_simulator,
    run_reprogrammed_adversary,
    run_simulator,
    run_simulator_averaged,
    simulator_success,
    uniform_schedules,
)
from .statevec import AdversaryCircuit, run_circuit

TOLERANCE = 1e-9
DEFAULT_CELL_CAP = 250_000
CSV_COLUMNS = ("cell_id", "h_index", "g_index", "xo", "lhs", "rhs", "margin", "mode", "seed")


class CellCapExceeded(RuntimeError):
    pass


class UnsupportedRelation(ValueError):
    pass


class ShapeMismatch(ValueError):
    pass


# -- games ------------------------------------------------------------------------


def play_game(game: GameSpec, circuit: AdversaryCircuit, oracle, challenge_seed: Optional[int] = None,
              mode="pure", challenge=None) -> float:
    """Exact win probability, including the challenger's k verification queries."""
    if circuit.k != game.k:
        raise ArityMismatch(f"circuit outputs {circuit.k} inputs, game needs {game.k}")
    if challenge is None:
        challenge = game.sample_challenge(challenge_seed)
    result = run_circuit(circuit, oracle, mode)
    return math.fsum(
        p for (xs, ys, z), p in result.outcomes.items()
        if evaluate_predicate(game, oracle, challenge, OutputTuple(xs, ys, z))
    )


def average_win(game: GameSpec, circuit: AdversaryCircuit, challenge_seed: Optional[int] = None, mode="pure") -> float:
    """Win probability averaged over every oracle table [M] -> [N]."""
    tables = list(OracleTable.all_tables(game.M, game.N))
    return math.fsum(play_game(game, circuit, H, challenge_seed, mode) for H in tables) / len(tables)


def play_direct_product(g: int, game: GameSpec, circuit: AdversaryCircuit, oracle: OracleTable,
                        challenge_seed: Optional[int] = None) -> float:
    """g independent instances on the rows of a g*M table; block i's inputs must lie in row i."""
    M, k = game.M, game.k
    if oracle.M != g * M or oracle.N != game.N:
        raise ShapeMismatch(f"direct-product oracle must be {g}*{M} -> {game.N}")
    if circuit.k != g * k or circuit.M != g * M:
        raise ShapeMismatch("circuit must output g blocks of k inputs over the packed domain")
    rows = [OracleTable(M, game.N, oracle.table[i * M : (i + 1) * M]) for i in range(g)]
    challenge = game.sample_challenge(challenge_seed)
    result = run_circuit(circuit, oracle)
    total = []
    for (xs, ys, z), p in result.outcomes.items():
        if p == 0:
            continue
        win = True
        for i in range(g):
            bx, by = xs[i * k : (i + 1) * k], ys[i * k : (i + 1) * k]
            if any(not i * M <= x < (i + 1) * M for x in bx):
                raise ShapeMismatch(f"block {i} output {bx} leaves its row")
            local = tuple(x - i * M for x in bx)
            if not evaluate_predicate(game, rows[i], challenge, OutputTuple(local, by, z)):
                win = False
                break
        if win:
            total.append(p)
    return math.fsum(total)


def play_multi_instance(g: int, games, circuit: AdversaryCircuit, oracle, challenge_seed: Optional[int] = None) -> float:
    """g instances sharing one oracle; ``games`` is one game or a list of g games."""
    games = list(games) if isinstance(games, (list, tuple)) else [games] * g
    if len(games) != g:
        raise ShapeMismatch("need one game per instance")
    k = games[0].k
    if any(gm.k != k for gm in games) or circuit.k != g * k:
        raise ShapeMismatch("circuit must output g blocks of k inputs")
    challenges = [gm.sample_challenge(challenge_seed) for gm in games]
    result = run_circuit(circuit, oracle)
    return math.fsum(
        p for (xs, ys, z), p in result.outcomes.items()
        if all(
            evaluate_predicate(gm, oracle, ch, OutputTuple(xs[i * k : (i + 1) * k], ys[i * k : (i + 1) * k], z))
            for i, (gm, ch) in enumerate(zip(games, challenges))
        )
    )


# -- Monte Carlo ------------------------------------------------------------------


@dataclass(frozen=True)
class MCEstimate:
    estimate: float
    lower: float
    upper: float
    successes: int
    trials: int
    confidence: float = 0.99


def clopper_pearson(successes: int, trials: int, confidence: float = 0.99):
    a = 1 - confidence
    lo = 0.0 if successes == 0 else float(beta.ppf(a / 2, successes, trials - successes + 1))
    hi = 1.0 if successes == trials else float(beta.ppf(1 - a / 2, successes + 1, trials - successes))
    return lo, hi


def monte_carlo_estimate(event: Callable, trials: int, seed: int, confidence: float = 0.99) -> MCEstimate:
    """Frequency of ``event(rng)`` over seeded trials with a two-sided Clopper-Pearson interval."""
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = random.Random(seed)
    hits = sum(1 for _ in range(trials) if event(rng))
    lo, hi = clopper_pearson(hits, trials, confidence)
    return MCEstimate(hits / trials, lo, hi, hits, trials, confidence)


# -- inequality reports -----------------------------------------------------------


@dataclass
class Cell:
    cell_id: str
    h_index: int
    g_index: int
    xo: tuple
    lhs: float
    rhs: float
    mode: str
    seed: Optional[int] = None

    @property
    def margin(self) -> float:
        return self.lhs - self.rhs

    def row(self) -> dict:
        return {
            "cell_id": self.cell_id,
            "h_index": self.h_index,
            "g_index": self.g_index,
            "xo": " ".join(map(str, self.xo)),
            "lhs": repr(self.lhs),
            "rhs": repr(self.rhs),
            "margin": repr(self.margin),
            "mode": self.mode,
            "seed": "" if self.seed is None else self.seed,
        }


@dataclass
class InequalityReport:
    """Per-cell lhs >= rhs checks. Sampled reports also carry a bound on the violation rate."""

    cells: list = field(default_factory=list)
    sampled: bool = False
    tolerance: float = TOLERANCE
    confidence: float = 0.99

    @property
    def failures(self) -> list:
        return [c for c in self.cells if c.margin < -self.tolerance]

    @property
    def verdict(self) -> str:
        return "FAIL" if self.failures else "PASS"

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"

    @property
    def min_margin(self) -> float:
        return min((c.margin for c in self.cells), default=math.inf)

    def violation_rate_bound(self) -> float:
        """Upper confidence bound on the fraction of violating cells (sampled grids)."""
        return clopper_pearson(len(self.failures), max(len(self.cells), 1), self.confidence)[1]

    def merge(self, other: InequalityReport) -> InequalityReport:
        return InequalityReport(self.cells + other.cells, self.sampled or other.sampled, self.tolerance, self.confidence)

    def to_csv(self, path=None) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=CSV_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for c in self.cells:
            writer.writerow(c.row())
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    def summary(self) -> dict:
        out = {"verdict": self.verdict, "cells": len(self.cells), "failures": len(self.failures),
               "min_margin": self.min_margin}
        if self.sampled:
            out["violation_rate_upper"] = self.violation_rate_bound()
        return out


def table_index(table: OracleTable) -> int:
    """Position of the table in OracleTable.all_tables order."""
    idx = 0
    for v in table.table:
        idx = idx * table.N + v
    return idx


def _cells_for(M: int, N: int, k: int, enumeration: str, trials: int, seed: int, cap: int):
    tables = list(OracleTable.all_tables(M, N))
    xos = list(itertools.combinations(range(M), k))
    total = len(tables) ** 2 * len(xos)
    if enumeration == "exhaustive":
        if total > cap:
            raise CellCapExceeded(f"{total} cells exceed the cap {cap}")
        for H in tables:
            for G in tables:
                yield H, G, xos
        return
    rng = random.Random(seed)
    picks = {}
    for _ in range(trials):
        H = OracleTable.random(M, N, rng)
        G = OracleTable.random(M, N, rng)
        picks.setdefault((H.table, G.table), []).append(xos[rng.randrange(len(xos))])
    for (h, g), xs in picks.items():
        yield OracleTable(M, N, h), OracleTable(M, N, g), sorted(set(xs))


@dataclass
class ReprogramGrid:
    """Inputs of a reprogramming-inequality check for one circuit and one predicate."""

    circuit: AdversaryCircuit
    game: Optional[GameSpec] = None
    challenge: Optional[tuple] = None
    enumeration: str = "exhaustive"  # or "monte_carlo"
    trials: int = 200
    seed: int = 0
    cell_cap: int = DEFAULT_CELL_CAP
    variant: str = "literal"  # or "corrected"
    label: str = ""


def check_reprogram_inequality(grid: ReprogramGrid) -> InequalityReport:
    """Per (H, G, x_o): Sim success >= Adv success / loss.

    ``literal`` uses alpha(k,q,c) and loss 2^{2k} k A_{k,q,c}; ``corrected``
    uses alpha(k,q,c+k) and loss 2^{2k} (k+1) A_{k,q,c+k}. Schedules are
    averaged exactly in both.
    """
    circ = grid.circuit
    k, q, c = circ.k, circ.q, circ.c
    if grid.variant == "literal":
        loss = hybrid_loss_exact(k, q, c)
        schedules = enumerate_schedules(k, q, c, circ.pattern)
    elif grid.variant == "corrected":
        loss = hybrid_loss_corrected(k, q, c)
        schedules = enumerate_schedules(k, q, c, circ.pattern, alpha=alpha_distribution(k, q, c + k))
    else:
        raise ValueError(f"unknown variant {grid.variant!r}")
    loss = float(loss.to_fraction()) if loss.is_exact else loss.to_float()
    challenge = grid.challenge
    if grid.game is not None and challenge is None:
        challenge = grid.game.sample_challenge(grid.seed)
    pred = predicate_for(grid.game, challenge)
    label = grid.label or f"{circ.name}/k{k}M{circ.M}N{circ.N}/{'any' if grid.game is None else grid.game.relation.kind}"
    report = InequalityReport(sampled=grid.enumeration != "exhaustive")
    mode = f"pure/{grid.variant}"
    seed = None if grid.enumeration == "exhaustive" else grid.seed
    for H, G, xos in _cells_for(circ.M, circ.N, k, grid.enumeration, grid.trials, grid.seed, grid.cell_cap):
        sim = run_simulator_averaged(circ, H, G, schedules)
        hi, gi = table_index(H), table_index(G)
        for xo in xos:
            yo = tuple(G(x) for x in xo)
            adv, _ = run_reprogrammed_adversary(circ, H, xo, yo, pred)
            lhs = simulator_success(sim, H, xo, yo, pred)
            report.cells.append(Cell(f"{label}/{hi}-{gi}-{''.join(map(str, xo))}", hi, gi, xo, lhs, adv / loss, mode, seed))
    return report


def noisy_limit_mismatches(circuit: AdversaryCircuit, H, G, include_appended: bool = False) -> list:
    """Schedules where the noisy simulator at p=0 / p=1 differs (bitwise) from the pure-pattern run."""
    bad = []
    classical = as_classical(circuit)
    k = circuit.k
    for s, _ in uniform_schedules(k, circuit.q, k if include_appended else 0):
        zero = run_simulator(circuit, H, G, s, "noisy:0")
        pure = run_simulator(circuit, H, G, s, "pure")
        if zero.outputs != pure.outputs or zero.aborts != pure.aborts:
            bad.append(("p=0", s))
        one = run_simulator(circuit, H, G, s, "noisy:1")
        cs = ReprogramSchedule(0, s.v, s.b)
        cls = run_simulator(classical, H, G, cs, "pure")
        if one.outputs != cls.outputs or one.aborts != cls.aborts:
            bad.append(("p=1", s))
    return bad


def check_noisy_inequality(circuit: AdversaryCircuit, p, game: Optional[GameSpec] = None,
                           cell_cap: int = DEFAULT_CELL_CAP, challenge=None, variant: str = "literal") -> InequalityReport:
    """Per (H, G, x_o): noisy Sim success >= noisy Adv success / loss.

    ``literal``: v uniform over the T circuit queries, loss noisy_loss_exact(p, T, k).
    ``corrected``: v uniform over the T + k extended positions, loss
    noisy_loss_corrected(p, T, k). Noise coins are enumerated on both sides.
    """
    if circuit.c:
        raise ValueError("noisy checks take all-quantum circuits")
    k, T = circuit.k, circuit.q
    p = Fraction(p).limit_denominator(10**6) if not isinstance(p, Fraction) else p
    if variant == "literal":
        loss, appended = noisy_loss_exact(p, T, k), False
    elif variant == "corrected":
        loss, appended = noisy_loss_corrected(p, T, k), True
    else:
        raise ValueError(f"unknown variant {variant!r}")
    loss = float(loss.to_fraction())
    if game is not None and challenge is None:
        challenge = game.sample_challenge(0)
    pred = predicate_for(game, challenge)
    mode = f"noisy:{float(p)}"
    tag = f"noisy:{p}/{variant}"
    report = InequalityReport()
    label = f"{circuit.name}/T{T}k{k}M{circuit.M}N{circuit.N}/p{p}"
    for H, G, xos in _cells_for(circuit.M, circuit.N, k, "exhaustive", 0, 0, cell_cap):
        sim = run_noisy_simulator(circuit, H, G, float(p), include_appended=appended)
        hi, gi = table_index(H), table_index(G)
        for xo in xos:
            yo = tuple(G(x) for x in xo)
            adv, _ = run_reprogrammed_adversary(circuit, H, xo, yo, pred, mode=mode)
            lhs = simulator_success(sim, H, xo, yo, pred)
            report.cells.append(Cell(f"{label}/{hi}-{gi}-{''.join(map(str, xo))}", hi, gi, xo, lhs, adv / loss, tag))
    return report


def check_lifting(game: GameSpec, circuit: AdversaryCircuit, challenge_seed: Optional[int] = None,
                  variant: str = "literal") -> InequalityReport:
    """Average win over all oracles <= loss * p(R). One aggregate cell.

    ``literal`` uses hybrid_loss_exact(k,q,c), which is 0 when q + c < k;
    ``corrected`` uses hybrid_loss_corrected(k,q,c).
    """
    if game.relation.oracle_dependent or game.relation.kind == "custom":
        raise UnsupportedRelation("lifting checks need an oracle-independent named relation")
    rel = game.relation
    if rel.kind == "multi-image" and rel.targets is None:
        from .relations import Relation

        rel = Relation.multi_image(game.sample_challenge(challenge_seed), rel.N)
    pR = p_of_r_exact(rel).to_fraction()
    k, q, c = circuit.k, circuit.q, circuit.c
    if variant == "literal":
        loss = hybrid_loss_exact(k, q, c)
    elif variant == "corrected":
        loss = hybrid_loss_corrected(k, q, c)
    else:
        raise ValueError(f"unknown variant {variant!r}")
    bound = float(loss.to_fraction() * pR)
    win = average_win(game, circuit, challenge_seed)
    report = InequalityReport()
    report.cells.append(Cell(f"lifting/{circuit.name}/{rel.kind}", -1, -1, (), bound, win, f"pure/{variant}"))
    return report


# -- manifests --------------------------------------------------------------------

MANIFEST_SCHEMA = {
    "type": "object",
    "required": ["check"],
    "properties": {
        "check": {"enum": ["reprogram", "noisy"]},
        "circuits": {"type": "array", "items": {"type": "string"}},
        "circuit_files": {"type": "array", "items": {"type": "string"}},
        "game": {"type": ["object", "string", "null"]},
        "grid": {
            "type": "object",
            "properties": {
                "k": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "M": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "N": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "max_queries": {"type": "integer", "minimum": 0},
                "qc": {"type": "array", "items": {"type": "array", "items": {"type": "integer", "minimum": 0},
                                                  "minItems": 2, "maxItems": 2}},
            },
        },
        "p": {"type": "array", "items": {"type": ["number", "string"]}},
        "mode": {"enum": ["exhaustive", "monte_carlo"]},
        "schedule": {"enum": ["exhaustive"]},
        "variant": {"enum": ["literal", "corrected"]},
        "seed": {"type": "integer"},
        "trials": {"type": "integer", "minimum": 1},
        "cell_cap": {"type": "integer", "minimum": 1},
    },
}


def load_manifest(path) -> dict:
    path = Path(path)
    data = json.loads(path.read_text())
    jsonschema.validate(data, MANIFEST_SCHEMA)
    data["_base"] = str(path.parent)
    return data


def _manifest_game(data: dict) -> Optional[GameSpec]:
    game = data.get("game")
    if game is None:
        return None
    if isinstance(game, str):
        game = json.loads((Path(data.get("_base", ".")) / game).read_text())
    return game_from_json(game)


def manifest_circuits(data: dict) -> list:
    """Expand the manifest grid into concrete circuits."""
    grid = data.get("grid", {})
    out = []
    base = Path(data.get("_base", "."))
    for f in data.get("circuit_files", []):
        out.append(AdversaryCircuit.from_json((base / f).read_text()))
    names = data.get("circuits", [])
    if data["check"] == "noisy":
        for name in names:
            if name not in NOISY_BUNDLED:
                raise ValueError(f"unknown noisy circuit {name!r}")
            for M in grid.get("M", [2]):
                for N in grid.get("N", [2]):
                    out.append(NOISY_BUNDLED[name](M, N))
        return out
    for name in names:
        if name not in BUNDLED:
            raise ValueError(f"unknown circuit {name!r}")
    for k in grid.get("k", [1]):
        for M in grid.get("M", [3]):
            if M < k:
                continue
            for N in grid.get("N", [2]):
                if "qc" in grid:
                    qcs = [tuple(x) for x in grid["qc"]]
                else:
                    n = grid.get("max_queries", 3)
                    qcs = [(q, c) for q in range(n + 1) for c in range(n + 1 - q)]
                for q, c in qcs:
                    if q + c < k:
                        continue
                    for name in names:
                        try:
                            out.append(BUNDLED[name](k, q, c, M, N))
                        except BudgetExceedsDomain:
                            continue
    return out


def run_manifest(data: dict, trials: Optional[int] = None) -> InequalityReport:
    game = _manifest_game(data)
    circuits = manifest_circuits(data)
    seed = data.get("seed", 0)
    report = InequalityReport()
    if data["check"] == "noisy":
        for p in data.get("p", [0, "1/2", 1]):
            for circ in circuits:
                report = report.merge(check_noisy_inequality(
                    circ, Fraction(str(p)), game, data.get("cell_cap", DEFAULT_CELL_CAP),
                    variant=data.get("variant", "literal"),
                ))
        return report
    for circ in circuits:
        grid = ReprogramGrid(
            circ, game, None, data.get("mode", "exhaustive"),
            trials if trials is not None else data.get("trials", 200), seed,
            data.get("cell_cap", DEFAULT_CELL_CAP), data.get("variant", "literal"),
        )
        report = report.merge(check_reprogram_inequality(grid))
    return report
