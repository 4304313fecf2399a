"""Reprogramming inequality over the k <= 2, q + c <= 3, M <= 3, N = 2 grid.

Runs the literal and corrected simulator variants side by side and prints,
per (k, M, q, c, circuit), the number of violating cells and the worst margin.

    python3 scripts/reprogram_grid.py --out results/grid
"""

import argparse
import collections
import time
from dataclasses import dataclass
from pathlib import Path

from hybridqrom.adversaries import BUNDLED, BudgetExceedsDomain
from hybridqrom.verify import ReprogramGrid, check_reprogram_inequality


@dataclass
class GridConfig:
    ks: tuple = (1, 2)
    Ms: tuple = (1, 2, 3)
    N: int = 2
    max_queries: int = 3
    variants: tuple = ("literal", "corrected")
    out: str = ""


def circuits(cfg: GridConfig):
    for k in cfg.ks:
        for M in cfg.Ms:
            if M < k:
                continue
            for q in range(cfg.max_queries + 1):
                for c in range(cfg.max_queries + 1 - q):
                    if q + c < k:
                        continue
                    for name, build in BUNDLED.items():
                        try:
                            yield (k, M, q, c, name), build(k, q, c, M, cfg.N)
                        except BudgetExceedsDomain:
                            continue


def run(cfg: GridConfig):
    for variant in cfg.variants:
        t0 = time.perf_counter()
        stats = collections.OrderedDict()
        report = None
        for key, circ in circuits(cfg):
            r = check_reprogram_inequality(ReprogramGrid(circ, variant=variant))
            stats[key] = (len(r.failures), len(r.cells), r.min_margin)
            report = r if report is None else report.merge(r)
        s = report.summary()
        print(f"[{variant}] {s['verdict']}: {s['failures']}/{s['cells']} cells violate, "
              f"min margin {s['min_margin']:.4g} ({time.perf_counter() - t0:.1f}s)")
        for (k, M, q, c, name), (bad, total, margin) in stats.items():
            if bad:
                print(f"  k={k} M={M} q={q} c={c} {name:<16} {bad:>4}/{total:<4} worst {margin:.4g}")
        if cfg.out:
            path = Path(f"{cfg.out}_{variant}.csv")
            path.parent.mkdir(parents=True, exist_ok=True)
            report.to_csv(path)
            print(f"  cells -> {path}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-queries", type=int, default=3)
    ap.add_argument("--variant", choices=("literal", "corrected"), action="append")
    ap.add_argument("--out", default="", help="CSV prefix, one file per variant")
    args = ap.parse_args()
    cfg = GridConfig(max_queries=args.max_queries, out=args.out)
    if args.variant:
        cfg.variants = tuple(args.variant)
    run(cfg)


if __name__ == "__main__":
    main()
