"""Simulation and validation of continuous-state branching processes through
flows of subordinators, their inverse flows and consecutive coalescents."""
from . import mechanism, partition, flow, poissonbox, coalescent, feller, stats, harness
from .errors import (CSBPError, ConfigError, DomainError, InternalConsistencyError,
                     NumericFailure, RangeError)
from .mechanism import BranchingMechanism, feller as feller_mechanism, neveu, stable

__all__ = [
    "mechanism", "partition", "flow", "poissonbox", "coalescent", "feller", "stats", "harness",
    "BranchingMechanism", "feller_mechanism", "neveu", "stable",
    "CSBPError", "ConfigError", "DomainError", "InternalConsistencyError", "NumericFailure", "RangeError",
]
