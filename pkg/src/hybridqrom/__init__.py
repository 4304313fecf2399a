"""Exact bounds and desk-scale simulation for hybrid and noisy QROM reprogramming."""

from .bounds import (
    BoundReport,
    Params,
    Tag,
    alpha_distribution,
    bound_report,
    capital_a,
    hybrid_loss_corrected,
    hybrid_loss_exact,
    noisy_loss_corrected,
    noisy_loss_exact,
)
from .exact import ExactValue
from .relations import GameSpec, OracleTable, Relation, p_of_r_closed_form, p_of_r_exact, reprogram
from .reprogram import ReprogramSchedule, run_simulator, run_simulator_averaged
from .statevec import AdversaryCircuit, QuantumState, RegisterLayout, run_circuit
from .verify import InequalityReport, ReprogramGrid, check_noisy_inequality, check_reprogram_inequality

__all__ = [
    "AdversaryCircuit",
    "BoundReport",
    "ExactValue",
    "GameSpec",
    "InequalityReport",
    "OracleTable",
    "Params",
    "QuantumState",
    "RegisterLayout",
    "Relation",
    "ReprogramGrid",
    "ReprogramSchedule",
    "Tag",
    "alpha_distribution",
    "bound_report",
    "capital_a",
    "check_noisy_inequality",
    "check_reprogram_inequality",
    "hybrid_loss_corrected",
    "hybrid_loss_exact",
    "noisy_loss_corrected",
    "noisy_loss_exact",
    "p_of_r_closed_form",
    "p_of_r_exact",
    "reprogram",
    "run_circuit",
    "run_simulator",
    "run_simulator_averaged",
]
