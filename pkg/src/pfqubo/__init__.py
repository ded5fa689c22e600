"""Penalty-free QUBO pipeline for cardinality-constrained portfolio selection."""

from pfqubo.errors import BudgetExceeded, ConfigError, DataError, PfquboError
from pfqubo.instances import (
    PortfolioInstance,
    QuboMatrix,
    Selection,
    betting_moments,
    build_objective_qubo,
    build_penalized_qubo,
    equity_moments,
    qubo_energy,
    to_upper_triangular,
)

__version__ = "0.1.0"

__all__ = [
    "BudgetExceeded",
    "ConfigError",
    "DataError",
    "PfquboError",
    "PortfolioInstance",
    "QuboMatrix",
    "Selection",
    "betting_moments",
    "build_objective_qubo",
    "build_penalized_qubo",
    "equity_moments",
    "qubo_energy",
    "to_upper_triangular",
]
