"""Optimality witness: hardness bound vs the staged hybrid Grover algorithm.

Prints the ratio [4^k k A k!/N^k] / P_alg on the k, u, v, N grid and the
simulated single-target success against the hybrid search floor.
"""

import argparse
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction

from hybridqrom.adversaries import StagedGroverSpec, build_staged_grover
from hybridqrom.bounds import hybrid_search_floor, optimality_ratio
from hybridqrom.relations import OracleTable
from hybridqrom.statevec import run_circuit


@dataclass
class OptimalityConfig:
    ks: tuple = (1, 2)
    us: tuple = (1, 2)
    vs: tuple = (0, 1, 2)
    Ns: tuple = (8, 16)
    floor_Ns: tuple = (3, 4)
    floor_us: tuple = (0, 1, 2)
    C: Fraction = 128 * Fraction(739, 100)


def staged_success(u, v, N, target=0):
    """Average over tables with exactly one preimage of ``target``."""
    circ = build_staged_grover(StagedGroverSpec(1, u, v, (target,), N, N))
    wins = []
    for H in OracleTable.all_tables(N, N):
        if H.table.count(target) == 1:
            res = run_circuit(circ, H)
            wins.append(math.fsum(p for (xs, ys, z), p in res.outcomes.items() if ys == (target,)))
    return math.fsum(wins) / len(wins)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.parse_args()
    cfg = OptimalityConfig()

    print(f"ratio grid, C = {float(cfg.C):.2f}")
    worst = 0.0
    for k, u, v, N in itertools.product(cfg.ks, cfg.us, cfg.vs, cfg.Ns):
        root = optimality_ratio(k, u, v, N).to_float() ** (1 / k)
        worst = max(worst, root)
        print(f"  k={k} u={u} v={v} N={N:<3} ratio^(1/k) = {root:8.3f}")
    print(f"max ratio^(1/k) = {worst:.3f}")

    print("staged Grover vs floor (best over u' <= u)")
    for N in cfg.floor_Ns:
        for v in cfg.vs:
            if v >= N:
                continue
            succ = [staged_success(u, v, N) for u in cfg.floor_us]
            for u in cfg.floor_us:
                floor = hybrid_search_floor(u, v, N).to_fraction()
                best = max(succ[: u + 1])
                mark = "vacuous" if floor > 1 else ("ok" if best >= float(floor) - 1e-9 else "LOW")
                print(f"  N={N} u={u} v={v}  success {succ[u]:.4f} best {best:.4f} floor {float(floor):.4f}  {mark}")


if __name__ == "__main__":
    main()
