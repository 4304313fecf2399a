import csv
import io
import math
from fractions import Fraction
from pathlib import Path

import pytest

from hybridqrom.adversaries import (
    build_block_random_guess,
    build_blind_output,
    build_classical_exhaustive,
    build_classical_probe,
    build_fixed_output,
    build_fixed_pair,
    build_grover_stage,
    build_pair_probe,
    build_random_guess,
)
from hybridqrom.relations import ArityMismatch, GameSpec, OracleTable, Relation
from hybridqrom.statevec import AdversaryCircuit, ClassicalMap
from hybridqrom.verify import (
    CSV_COLUMNS,
    CellCapExceeded,
    InequalityReport,
    ReprogramGrid,
    ShapeMismatch,
    UnsupportedRelation,
    average_win,
    check_lifting,
    check_noisy_inequality,
    check_reprogram_inequality,
    load_manifest,
    monte_carlo_estimate,
    play_direct_product,
    play_game,
    play_multi_instance,
    run_manifest,
)

MANIFESTS = Path(__file__).resolve().parents[1] / "src" / "hybridqrom" / "manifests"


def game(rel, M, **kw):
    return GameSpec(rel, M, rel.codomain_size, **kw)


# -- games ------------------------------------------------------------------------


def test_play_game_examples():
    search = game(Relation.multi_search(1, 2), 4)
    assert average_win(search, build_random_guess(1, 4, 2)) == pytest.approx(0.5)
    scan = build_classical_exhaustive(1, 4, search)
    assert average_win(search, scan) == pytest.approx(1 - 1 / 16)
    never = game(Relation.custom(1, 2, lambda *a: False), 4)
    for H in OracleTable.all_tables(4, 2):
        assert play_game(never, scan, H) == 0
    with pytest.raises(ArityMismatch):
        play_game(search, build_random_guess(2, 4, 2), OracleTable(4, 2, (0, 0, 0, 0)))


def test_direct_product():
    base = game(Relation.multi_search(1, 2), 2)
    single = build_random_guess(1, 2, 2)
    for H in OracleTable.all_tables(2, 2):
        assert play_direct_product(1, base, single, H) == play_game(base, single, H)
    pair = build_block_random_guess(2, 1, 2, 2)
    tables = list(OracleTable.all_tables(4, 2))
    avg = math.fsum(play_direct_product(2, base, pair, H) for H in tables) / len(tables)
    assert avg == pytest.approx(average_win(base, single) ** 2, abs=1e-12)
    # both outputs in row 0 break the block rule
    bad = AdversaryCircuit(4, 2, (("x0", 4), ("x1", 4)), (ClassicalMap((), "x1", (1,)),), ("x0", "x1"))
    with pytest.raises(ShapeMismatch):
        play_direct_product(2, base, bad, tables[0])
    with pytest.raises(ShapeMismatch):
        play_direct_product(2, base, pair, OracleTable(2, 2, (0, 0)))


def test_multi_instance():
    search = game(Relation.multi_search(1, 2), 3, outputs_distinct_required=False)
    single = build_random_guess(1, 3, 2)
    tables = list(OracleTable.all_tables(3, 2))
    for H in tables:
        assert play_multi_instance(1, search, single, H) == play_game(search, single, H)
    # the same output twice wins both instances together
    twice = AdversaryCircuit(3, 2, (("x0", 3), ("x1", 3)), (), ("x0", "x1"))
    for H in tables:
        assert play_multi_instance(2, search, twice, H) == play_game(search, single, H)
    # different targets force different outputs
    other = game(Relation.multi_search(1, 2, target=1), 3, outputs_distinct_required=False)
    spread = build_random_guess(2, 3, 2)
    joint = math.fsum(play_multi_instance(2, [search, other], spread, H) for H in tables) / len(tables)
    assert joint <= average_win(search, single) + 1e-12
    with pytest.raises(ShapeMismatch):
        play_multi_instance(2, search, single, tables[0])


# -- reprogramming inequality -----------------------------------------------------


def test_reprogram_inequality_on_one_stage_grover():
    report = check_reprogram_inequality(ReprogramGrid(build_grover_stage(1, 1, 1, 3)))
    assert len(report.cells) == 8 * 8 * 3
    assert report.passed, report.summary()
    assert report.min_margin >= -1e-9


def test_zero_success_adversary_holds_trivially():
    never = game(Relation.custom(1, 2, lambda *a: False), 3)
    report = check_reprogram_inequality(ReprogramGrid(build_grover_stage(1, 1, 1, 3), never))
    assert report.passed
    assert all(c.lhs == 0 and c.rhs == 0 for c in report.cells)


def test_blind_output_separates_literal_and_corrected():
    # with c = 0 the literal schedule never reprograms an appended query, yet the
    # adversary learns y_o only through them: Sim = 0 < Adv / loss
    circ = build_blind_output(1, 1, 0, 3)
    literal = check_reprogram_inequality(ReprogramGrid(circ))
    assert not literal.passed
    assert all(c.lhs == 0 for c in literal.failures)
    assert check_reprogram_inequality(ReprogramGrid(circ, variant="corrected")).passed


def test_fixed_output_both_sides_positive():
    report = check_reprogram_inequality(ReprogramGrid(build_fixed_output(1, 1, 1, 3)))
    assert report.passed
    assert any(c.lhs > 0 and c.rhs > 0 for c in report.cells)


def test_corrected_variant_on_two_outputs():
    report = check_reprogram_inequality(ReprogramGrid(build_classical_probe(2, 1, 1, 3), variant="corrected"))
    assert report.passed, report.summary()
    assert {c.mode for c in report.cells} == {"pure/corrected"}


def test_cell_cap():
    with pytest.raises(CellCapExceeded):
        check_reprogram_inequality(ReprogramGrid(build_grover_stage(1, 1, 1, 3), cell_cap=100))


def test_sampled_grid_reports_confidence():
    grid = ReprogramGrid(build_fixed_output(1, 1, 1, 3), enumeration="monte_carlo", trials=20, seed=3)
    report = check_reprogram_inequality(grid)
    assert report.sampled and report.passed
    assert 0 < report.summary()["violation_rate_upper"] < 1
    again = check_reprogram_inequality(grid)
    assert report.to_csv() == again.to_csv()


# -- noisy inequality -------------------------------------------------------------


def test_noisy_inequality_small():
    assert check_noisy_inequality(build_fixed_pair(2, 2), Fraction(1, 2)).passed
    # the literal form loses the appended positions; pair-probe witnesses it at M = 2
    literal = check_noisy_inequality(build_pair_probe(2, 2), Fraction(1, 2))
    assert len(literal.failures) == 4
    assert check_noisy_inequality(build_pair_probe(2, 2), Fraction(1, 2), variant="corrected").passed


@pytest.mark.parametrize("p", [0, Fraction(1, 2), 1])
def test_noisy_corrected_variant(p):
    for build in (build_pair_probe, build_fixed_pair):
        report = check_noisy_inequality(build(3, 2), p, variant="corrected")
        assert report.passed, (build.__name__, p, report.summary())


def test_noisy_p0_reduces_to_pure_check():
    # with c = 0, alpha puts all mass on t = k and v is uniform over the T quantum
    # positions, which is exactly the noisy simulator's schedule law
    circ = build_pair_probe(2, 2)
    noisy = check_noisy_inequality(circ, 0)
    pure = check_reprogram_inequality(ReprogramGrid(circ))
    assert len(noisy.cells) == len(pure.cells)
    for a, b in zip(noisy.cells, pure.cells):
        assert (a.h_index, a.g_index, a.xo) == (b.h_index, b.g_index, b.xo)
        assert a.lhs == pytest.approx(b.lhs, abs=1e-12)
        assert a.rhs * 4 == pytest.approx(b.rhs * 16, abs=1e-12)


# -- lifting ----------------------------------------------------------------------


def test_lifting_examples():
    search = game(Relation.multi_search(1, 2, target=1), 3)
    report = check_lifting(search, build_grover_stage(1, 1, 1, 3))
    assert report.passed and report.min_margin > 0

    # with no queries the literal loss 4^k k A_{k,0,0} is 0; the corrected loss counts
    # the challenger's k classical queries and is at least 1
    guess_game = game(Relation.multi_search(1, 2), 3)
    literal = check_lifting(guess_game, build_random_guess(1, 3, 2))
    assert literal.cells[0].lhs == 0 and not literal.passed
    (cell,) = check_lifting(guess_game, build_random_guess(1, 3, 2), variant="corrected").cells
    assert cell.rhs == pytest.approx(0.5) and cell.lhs >= cell.rhs

    coll = game(Relation.multi_collision(2, 2), 4)
    assert check_lifting(coll, build_classical_exhaustive(2, 2, coll)).passed

    oracle_game = game(Relation.custom(1, 2, lambda *a: True, oracle_dependent=True), 3)
    with pytest.raises(UnsupportedRelation):
        check_lifting(oracle_game, build_random_guess(1, 3, 2))


@pytest.mark.parametrize("build", [build_grover_stage, build_classical_probe, build_fixed_output])
def test_lifting_implied_by_reprogram_inequality(build):
    circ = build(1, 1, 1, 3)
    search = game(Relation.multi_search(1, 2, target=1), 3)
    reprog = check_reprogram_inequality(ReprogramGrid(circ, search))
    lift = check_lifting(search, circ)
    assert not (reprog.passed and not lift.passed)


# -- Monte Carlo ------------------------------------------------------------------


def test_monte_carlo_calibration():
    misses = 0
    batches = 300
    for seed in range(batches):
        est = monte_carlo_estimate(lambda rng: rng.random() < 0.5, 10_000, seed)
        misses += not est.lower <= 0.5 <= est.upper
    # expected about 3 misses at 99% coverage
    assert misses <= 8


def test_monte_carlo_examples():
    est = monte_carlo_estimate(lambda rng: all(rng.randrange(16) == 0 for _ in range(1)), 20_000, 4)
    assert est.lower <= 1 / 16 <= est.upper
    assert est == monte_carlo_estimate(lambda rng: all(rng.randrange(16) == 0 for _ in range(1)), 20_000, 4)
    small = monte_carlo_estimate(lambda rng: False, 100, 0)
    large = monte_carlo_estimate(lambda rng: False, 10_000, 0)
    assert small.estimate == large.estimate == 0
    assert large.upper < small.upper / 50
    with pytest.raises(ValueError):
        monte_carlo_estimate(lambda rng: True, 0, 0)


# -- reports and manifests --------------------------------------------------------


def test_report_csv_and_merge(tmp_path):
    a = check_reprogram_inequality(ReprogramGrid(build_fixed_output(1, 1, 0, 2)))
    b = check_reprogram_inequality(ReprogramGrid(build_fixed_output(1, 0, 1, 2)))
    merged = a.merge(b)
    assert len(merged.cells) == len(a.cells) + len(b.cells)
    path = tmp_path / "out.csv"
    merged.to_csv(path)
    rows = list(csv.DictReader(io.StringIO(path.read_text())))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == len(merged.cells)
    assert merged.summary()["verdict"] == "PASS"


def test_empty_report_passes():
    assert InequalityReport().verdict == "PASS"


def test_exhaustive_results_are_bit_identical():
    grid = ReprogramGrid(build_classical_probe(1, 1, 1, 3))
    assert check_reprogram_inequality(grid).to_csv() == check_reprogram_inequality(grid).to_csv()


def test_shipped_tiny_manifest_passes():
    report = run_manifest(load_manifest(MANIFESTS / "thm31_tiny.json"))
    assert report.passed and len(report.cells) == 576


def test_shipped_sampled_manifest_passes():
    report = run_manifest(load_manifest(MANIFESTS / "reprogram_sampled.json"))
    assert report.passed and report.sampled


def test_manifest_schema_rejects_bad_input(tmp_path):
    import jsonschema

    bad = tmp_path / "bad.json"
    bad.write_text('{"check": "reprogram", "grid": {"k": [0]}}')
    with pytest.raises(jsonschema.ValidationError):
        load_manifest(bad)
