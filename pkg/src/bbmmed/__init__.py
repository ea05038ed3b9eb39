"""Bounded Brownian message (BBM) processes and message-enhanced DeGroot (MED) opinion dynamics.

Analytic laws of the absorbed message process, exact-discretisation
simulators for messages and opinions, and a Monte Carlo harness that checks
one against the other.
"""

__version__ = "0.1.0"

from .core import (
    BBMError,
    CheckpointError,
    DerivedMessageStats,
    DimensionError,
    DomainError,
    GridMismatchError,
    MessageModelParams,
    NegativeEntryError,
    NetworkModel,
    RowSumError,
    SeedSpec,
    TimeGrid,
    ValidationError,
    derive_message_stats,
    initial_law_stats,
    renormalize_rows,
    validate_network,
)
from .kernels import BACKEND
from .med import MedSystem, SingularAError, med_trajectory, opinion_mean, opinion_variance_limit
from .degroot import degroot_steady_state, degroot_trajectory
from .bbm import sample_path, simulate_absorbed
from .ensemble import (
    EnsembleStats,
    MessageOracles,
    OpinionOracles,
    ValidationReport,
    empirical_interior_pdf,
    run_message_ensemble,
    run_opinion_ensemble,
    validate,
)

__all__ = [
    "BACKEND", "BBMError", "CheckpointError", "DerivedMessageStats", "DimensionError", "DomainError",
    "EnsembleStats", "GridMismatchError", "MedSystem", "MessageModelParams", "MessageOracles",
    "NegativeEntryError", "NetworkModel", "OpinionOracles", "RowSumError", "SeedSpec", "SingularAError",
    "TimeGrid", "ValidationError", "ValidationReport", "degroot_steady_state", "degroot_trajectory",
    "derive_message_stats", "empirical_interior_pdf", "initial_law_stats", "med_trajectory", "opinion_mean",
    "opinion_variance_limit", "renormalize_rows", "run_message_ensemble", "run_opinion_ensemble",
    "sample_path", "simulate_absorbed", "validate", "validate_network",
]
