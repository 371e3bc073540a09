"""Quantum-logic search for narrow optical transitions.

Lindblad dynamics of an ion under an optical dipole force, the resulting
detection lineshapes, an exact likelihood-ratio test over neighbouring
frequency bins and a scan-speed optimiser built on top of them.
"""

__version__ = "0.1.0"

from .errors import (AtomOverflow, ConfigError, ConflictError, CorruptCacheEntry,  # noqa: E402
                     DimensionMismatch, IntegrationFailure, NoPeak, OutOfRange, QLSearchError,
                     SchemaError, TruncationWarning, VerificationError)
from .params import PhysicalParams, db_to_r, r_to_db  # noqa: E402
from .dynamics import (build_hamiltonian, build_lindblad_generator, evolve, evolve_many,  # noqa: E402
                       initial_state, povm_signal, squeezed_state)
from .lineshape import (DetuningGrid, LineshapeCache, LineshapeTable, background_probability,  # noqa: E402
                        compute_lineshape, compute_lineshapes, fwhm)
from .hypothesis import (BinModel, ErrorPair, Hypothesis, Position, TestConfig,  # noqa: E402
                         find_threshold, spam_exact, spam_monte_carlo, statistic_distribution,
                         worst_case_miss)
from .optimizer import Optimizer, ScanPoint, SearchSpace, evaluate_point, optimize, sweep_squeezing  # noqa: E402

__all__ = [
    "AtomOverflow", "ConfigError", "ConflictError", "CorruptCacheEntry", "DimensionMismatch",
    "IntegrationFailure", "NoPeak", "OutOfRange", "QLSearchError", "SchemaError",
    "TruncationWarning", "VerificationError", "PhysicalParams", "db_to_r", "r_to_db",
    "build_hamiltonian", "build_lindblad_generator", "evolve", "evolve_many", "initial_state",
    "povm_signal", "squeezed_state", "DetuningGrid", "LineshapeCache", "LineshapeTable",
    "background_probability", "compute_lineshape", "compute_lineshapes", "fwhm", "BinModel",
    "ErrorPair", "Hypothesis", "Position", "TestConfig", "find_threshold", "spam_exact",
    "spam_monte_carlo", "statistic_distribution", "worst_case_miss", "Optimizer", "ScanPoint",
    "SearchSpace", "evaluate_point", "optimize", "sweep_squeezing",
]
