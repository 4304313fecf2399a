"""hqrom: bounds, p(R), simulations and verification grids from the shell.

Exit codes: 0 pass, 1 inequality violated, 2 usage error, 3 resource cap.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from fractions import Fraction
from pathlib import Path

import jsonschema

from . import bounds
from .adversaries import BUNDLED, NOISY_BUNDLED, BudgetExceedsDomain, BudgetMismatch
from .bounds import Params, Tag, bound_report
from .relations import EnumerationTooLarge, OracleTable, Relation, p_of_r_closed_form, p_of_r_exact
from .reprogram import run_simulator_averaged
from .statevec import AdversaryCircuit, MemoryCapExceeded, run_circuit
from .verify import CellCapExceeded, load_manifest, run_manifest

EXIT_PASS, EXIT_FAIL, EXIT_USAGE, EXIT_CAP = 0, 1, 2, 3
SWEEP_ROW_LIMIT = 100_000
GAMES = ("multi-image", "multi-collision", "multi-search", "three-sum")


class UsageError(Exception):
    pass


def _fraction(text: str) -> Fraction:
    try:
        return Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational number: {text!r}") from None


def _ints(text: str) -> tuple:
    return tuple(int(t) for t in text.replace(",", " ").split())


def _relation(kind: str, k: int, N: int, targets=None) -> Relation:
    if kind == "multi-image":
        return Relation.multi_image(targets if targets else tuple(range(k)), N)
    if kind == "multi-collision":
        return Relation.multi_collision(k, N)
    if kind == "multi-search":
        return Relation.multi_search(k, N)
    if k != 3:
        raise UsageError("three-sum has k = 3")
    return Relation.three_sum(N)


# -- bound ------------------------------------------------------------------------


def cmd_bound(args) -> int:
    if args.d is not None and args.p is not None:
        raise UsageError("give either --d or --p, not both")
    if args.k > args.q + args.c:
        raise UsageError(f"k={args.k} exceeds q+c={args.q + args.c}")
    try:
        params = Params(args.k, args.q, args.c, args.T, args.p or 0, args.d or 1,
                        args.N, args.M, args.S, args.K, args.g)
    except ValueError as err:
        raise UsageError(str(err)) from None
    pR = None
    if args.game:
        pR = p_of_r_closed_form(_relation(args.game, args.k, args.N, args.targets)).to_fraction()
    report = bound_report(params, pR=pR, pR_mis_S=args.p_mis, use_depth=args.d is not None)
    if args.json:
        print(json.dumps(report.to_json(), indent=2))
        return EXIT_PASS
    width = max(len(name) for name, _, _ in report.entries)
    for name, value, tag in report.entries:
        print(f"{name:<{width}}  {value.render():<28}  [{tag.value}]")
    return EXIT_PASS


# -- p-of-r -----------------------------------------------------------------------


def cmd_p_of_r(args) -> int:
    rel = _relation(args.kind, args.k, args.N, args.targets)
    exact = p_of_r_exact(rel, limit=args.limit)
    closed = p_of_r_closed_form(rel)
    print(f"exact        {exact.render()}")
    print(f"closed form  {closed.render()}")
    return EXIT_PASS if exact == closed else EXIT_FAIL


# -- simulate ---------------------------------------------------------------------


def _circuit(args) -> AdversaryCircuit:
    if args.circuit_file:
        return AdversaryCircuit.from_json(Path(args.circuit_file).read_text())
    if args.circuit in NOISY_BUNDLED:
        return NOISY_BUNDLED[args.circuit](args.M, args.N)
    if args.circuit in BUNDLED:
        return BUNDLED[args.circuit](args.k, args.q, args.c, args.M, args.N)
    raise UsageError(f"unknown circuit {args.circuit!r}")


def _table(values, M: int, N: int) -> OracleTable:
    if len(values) != M:
        raise UsageError(f"oracle table needs {M} entries")
    return OracleTable(M, N, values)


def cmd_simulate(args) -> int:
    try:
        circ = _circuit(args)
    except (BudgetExceedsDomain, BudgetMismatch) as err:
        raise UsageError(str(err)) from None
    H = _table(args.oracle, circ.M, circ.N)
    print(f"# {circ.name}: k={circ.k} q={circ.q} c={circ.c} M={circ.M} N={circ.N} pattern={''.join(circ.pattern)}")
    if args.reprogram is not None:
        G = _table(args.reprogram, circ.M, circ.N)
        out = run_simulator_averaged(circ, H, G, mode=args.mode)
        for (xs, ys, z), p in sorted(out.outputs.items()):
            print(f"x={xs} y={ys} z={z}  {p:.12g}")
        for reason, p in sorted(out.aborts.items()):
            print(f"abort {reason}  {p:.12g}")
        print(f"# total {out.total():.12g}  G-queries {out.g_queries}")
        return EXIT_PASS
    result = run_circuit(circ, H, args.mode, backend=args.backend, trials=args.trials, seed=args.seed)
    for (xs, ys, z), p in sorted(result.outcomes.items()):
        print(f"x={xs} y={ys} z={z}  {p:.12g}")
    return EXIT_PASS


# -- verify -----------------------------------------------------------------------


def cmd_verify(args) -> int:
    try:
        data = load_manifest(args.manifest)
    except (OSError, json.JSONDecodeError, jsonschema.ValidationError) as err:
        print(f"manifest error: {getattr(err, 'message', err)}", file=sys.stderr)
        return EXIT_USAGE
    if args.variant:
        data["variant"] = args.variant
    report = run_manifest(data, trials=args.trials)
    if args.csv:
        report.to_csv(args.csv)
    summary = report.summary()
    print(json.dumps(summary))
    if not report.passed:
        writer = csv.DictWriter(sys.stdout, fieldnames=list(report.failures[0].row()), lineterminator="\n")
        writer.writerow(min(report.failures, key=lambda c: c.margin).row())
        return EXIT_FAIL
    return EXIT_PASS


# -- sweep ------------------------------------------------------------------------

QUANTITIES = {
    "capital-a": (("k", "q", "c"), bounds.capital_a),
    "hybrid-loss": (("k", "q", "c"), bounds.hybrid_loss_exact),
    "hybrid-loss-corrected": (("k", "q", "c"), bounds.hybrid_loss_corrected),
    "quantum-mr-loss": (("k", "q"), bounds.dfm_loss),
    "noisy-loss-exact": (("p", "T", "k"), bounds.noisy_loss_exact),
    "noisy-loss-asymptotic": (("p", "T", "k"), bounds.noisy_loss_asymptotic),
    "bounded-depth-loss": (("d", "T", "k"), bounds.bounded_depth_loss),
    "multi-image-algorithm": (("k", "q", "c", "N"), bounds.multi_image_alg_success),
    "hybrid-search-floor": (("u", "v", "N"), bounds.hybrid_search_floor),
    "optimality-ratio": (("k", "u", "v", "N"), bounds.optimality_ratio),
}


def _range(text: str) -> list:
    """``a:b:step`` inclusive of b (rational), or a comma list."""
    if ":" in text:
        parts = [Fraction(t) for t in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise UsageError("range must be start:stop:step with step > 0")
        start, stop, step = parts
        if stop < start:
            return []
        count = int((stop - start) / step) + 1
        if count > SWEEP_ROW_LIMIT:
            raise UsageError(f"range has {count} rows, over the limit {SWEEP_ROW_LIMIT}")
        return [start + i * step for i in range(count)]
    values = [Fraction(t) for t in text.split(",") if t.strip()]
    if len(values) > SWEEP_ROW_LIMIT:
        raise UsageError("too many values")
    return values


def _arg(name: str, value: Fraction):
    if name == "p":
        return value
    if value.denominator != 1:
        raise UsageError(f"{name} must be an integer")
    return int(value)


def cmd_sweep(args) -> int:
    names, fn = QUANTITIES[args.quantity]
    if args.over not in names:
        raise UsageError(f"{args.quantity} takes {', '.join(names)}")
    fixed = {}
    for item in args.set:
        key, _, value = item.partition("=")
        if key not in names:
            raise UsageError(f"{args.quantity} takes {', '.join(names)}")
        fixed[key] = Fraction(value)
    missing = [n for n in names if n != args.over and n not in fixed]
    if missing:
        raise UsageError(f"missing --set for {', '.join(missing)}")
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([args.over, "value", "float"])
    for x in _range(args.values):
        call = {**fixed, args.over: x}
        try:
            value = fn(*[_arg(n, call[n]) for n in names])
        except (ValueError, bounds.ZeroMass, bounds.IndivisibleBudget) as err:
            raise UsageError(f"{args.over}={x}: {err}") from None
        writer.writerow([str(x), value.render(), repr(value.to_float())])
    if args.out:
        Path(args.out).write_text(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return EXIT_PASS


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    tags = "\n".join(f"  {t.value}" for t in Tag)
    raw = argparse.RawDescriptionHelpFormatter
    parser = argparse.ArgumentParser(
        prog="hqrom",
        description="Hybrid/noisy QROM bounds and desk-scale reprogramming checks.",
        epilog=f"bound tags:\n{tags}\n\nexit codes: 0 pass, 1 fail, 2 usage, 3 resource cap\n"
               "memory cap override: HQROM_MEMORY_CAP",
        formatter_class=raw,
    )
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("bound", help="every applicable bound with its tag", epilog=f"tags:\n{tags}",
                       formatter_class=raw)
    b.add_argument("--k", type=int, default=1)
    b.add_argument("--q", type=int, default=0)
    b.add_argument("--c", type=int, default=0)
    b.add_argument("--T", type=int, default=0, help="total noisy queries")
    b.add_argument("--p", type=_fraction, help="noise probability (rational)")
    b.add_argument("--d", type=int, help="depth bound; maps to p=1/d and 2T queries")
    b.add_argument("--N", type=int, default=1, help="codomain size")
    b.add_argument("--M", type=int, default=1, help="domain size")
    b.add_argument("--S", type=int, default=0, help="advice bits")
    b.add_argument("--K", type=int, default=1, help="salt space size")
    b.add_argument("--g", type=int, default=1, help="direct-product instances")
    b.add_argument("--game", choices=GAMES, help="adds p(R) and the lifting family")
    b.add_argument("--targets", type=_ints, help="multi-image targets (default 0..k-1)")
    b.add_argument("--p-mis", type=_fraction, help="p(R_MIS^S) for the advice bound")
    b.add_argument("--json", action="store_true")
    b.set_defaults(func=cmd_bound)

    r = sub.add_parser("p-of-r", help="p(R) by enumeration and closed form")
    r.add_argument("--kind", choices=GAMES, required=True)
    r.add_argument("--k", type=int, default=1)
    r.add_argument("--N", type=int, required=True)
    r.add_argument("--targets", type=_ints)
    r.add_argument("--limit", type=int, default=2**24, help="enumeration cap")
    r.set_defaults(func=cmd_p_of_r)

    s = sub.add_parser("simulate", help="outcome law of a bundled or JSON circuit")
    s.add_argument("--circuit", default="grover-stage",
                   help=f"one of {', '.join(list(BUNDLED) + list(NOISY_BUNDLED))}")
    s.add_argument("--circuit-file")
    s.add_argument("--k", type=int, default=1)
    s.add_argument("--q", type=int, default=1)
    s.add_argument("--c", type=int, default=0)
    s.add_argument("--M", type=int, default=2)
    s.add_argument("--N", type=int, default=2)
    s.add_argument("--oracle", type=_ints, required=True, help="table H as 'h0,h1,...'")
    s.add_argument("--reprogram", type=_ints, help="table G; runs the reprogramming simulator")
    s.add_argument("--mode", default="pure", help="pure, noisy:P or depth:D")
    s.add_argument("--backend", choices=("exhaustive", "sampled"), default="exhaustive")
    s.add_argument("--trials", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_simulate)

    v = sub.add_parser("verify", help="run a manifest grid; CSV of per-cell margins")
    v.add_argument("manifest")
    v.add_argument("--csv", help="write the per-cell CSV here")
    v.add_argument("--trials", type=int, help="override Monte Carlo cell count")
    v.add_argument("--variant", choices=("literal", "corrected"))
    v.set_defaults(func=cmd_verify)

    w = sub.add_parser("sweep", help="CSV rows of one quantity over one parameter")
    w.add_argument("quantity", choices=sorted(QUANTITIES))
    w.add_argument("--over", required=True, help="parameter to sweep")
    w.add_argument("--values", required=True, help="start:stop:step (inclusive) or a comma list")
    w.add_argument("--set", action="append", default=[], metavar="NAME=VALUE")
    w.add_argument("--out")
    w.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_PASS
    try:
        return args.func(args)
    except UsageError as err:
        print(f"hqrom {args.command}: error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (CellCapExceeded, MemoryCapExceeded, EnumerationTooLarge) as err:
        print(f"hqrom {args.command}: resource cap: {err}", file=sys.stderr)
        return EXIT_CAP


if __name__ == "__main__":
    sys.exit(main())
