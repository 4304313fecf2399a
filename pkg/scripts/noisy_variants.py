"""Noisy reprogramming inequality: literal vs corrected schedule/loss.

literal    v uniform over the T circuit queries, loss E(p, T, k)
corrected  v uniform over the T + k extended positions, loss 4^k E(p, T + k, k)

Also counts p=0 / p=1 bit mismatches against the pure-pattern runs.
"""

import argparse
from dataclasses import dataclass, field
from fractions import Fraction

from hybridqrom.adversaries import NOISY_BUNDLED
from hybridqrom.relations import OracleTable
from hybridqrom.verify import check_noisy_inequality, noisy_limit_mismatches


@dataclass
class NoisyConfig:
    M: int = 2
    N: int = 2
    rates: list = field(default_factory=lambda: [Fraction(0), Fraction(1, 2), Fraction(1)])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--M", type=int, default=2)
    ap.add_argument("--rates", default="0,1/2,1")
    args = ap.parse_args()
    cfg = NoisyConfig(M=args.M, rates=[Fraction(r) for r in args.rates.split(",")])

    for variant in ("literal", "corrected"):
        print(f"[{variant}]")
        for p in cfg.rates:
            for name, build in sorted(NOISY_BUNDLED.items()):
                r = check_noisy_inequality(build(cfg.M, cfg.N), p, variant=variant)
                print(f"  p={str(p):<4} {name:<14} {len(r.failures):>3}/{len(r.cells):<3} violate, "
                      f"min margin {r.min_margin:.4g}")

    tables = list(OracleTable.all_tables(cfg.M, cfg.N))
    for name, build in sorted(NOISY_BUNDLED.items()):
        circ = build(cfg.M, cfg.N)
        bad = sum(len(noisy_limit_mismatches(circ, H, G, appended))
                  for H in tables for G in tables for appended in (False, True))
        print(f"bit-match {name:<14} {bad} mismatching schedules")


if __name__ == "__main__":
    main()
