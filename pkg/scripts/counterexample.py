"""Smallest cell where the literal simulator misses the stated loss.

k=1, q=1, c=0, M=2, N=2, one Grover iteration. alpha puts all mass on the
single quantum position; after x is recorded the two-point diffusion moves
the search register off it, so the simulator's output never matches the
control register while the adversary wins with probability 1/2.
"""

from hybridqrom.adversaries import build_grover_stage
from hybridqrom.bounds import alpha_distribution, hybrid_loss_corrected, hybrid_loss_exact
from hybridqrom.relations import OracleTable
from hybridqrom.reprogram import (
    enumerate_schedules,
    run_reprogrammed_adversary,
    run_simulator,
    simulator_success,
)


def main():
    circ = build_grover_stage(1, 1, 0, 2)
    H, G = OracleTable(2, 2, (0, 0)), OracleTable(2, 2, (1, 0))
    xo = (0,)
    yo = (G(0),)
    adv, _ = run_reprogrammed_adversary(circ, H, xo, yo)
    print(f"circuit {circ.name}, pattern {''.join(circ.pattern)}, H={H.table} G={G.table} xo={xo}")
    print(f"adversary success {adv:.6f}")

    for variant, alpha, loss in (
        ("literal", alpha_distribution(1, 1, 0), hybrid_loss_exact(1, 1, 0)),
        ("corrected", alpha_distribution(1, 1, 1), hybrid_loss_corrected(1, 1, 0)),
    ):
        loss = float(loss.to_fraction())
        total = 0.0
        print(f"[{variant}] alpha = {[str(a.to_fraction()) for a in alpha]}, loss {loss:g}")
        for s, w in enumerate_schedules(1, 1, 0, circ.pattern, alpha=alpha):
            out = run_simulator(circ, H, G, s)
            sim = simulator_success(out, H, xo, yo)
            total += float(w) * sim
            aborts = {k: round(v, 6) for k, v in out.aborts.items()}
            print(f"  v={s.v} b={s.b} weight {w}: success {sim:.6f} aborts {aborts}")
        print(f"  Sim {total:.6f} vs Adv/loss {adv / loss:.6f} -> {'holds' if total >= adv / loss - 1e-9 else 'VIOLATED'}")


if __name__ == "__main__":
    main()
