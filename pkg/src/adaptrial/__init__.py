"""Adaptive clinical trial design, simulation, and conduct engines."""

from .config import DesignConfig, validate_design_config
from .types import (
    ArmOutcomeSummary,
    CohortOutcome,
    DoseGrid,
    Recommendation,
    TrialState,
)

__version__ = "0.1.0"

__all__ = [
    "DesignConfig",
    "validate_design_config",
    "DoseGrid",
    "CohortOutcome",
    "ArmOutcomeSummary",
    "TrialState",
    "Recommendation",
    "__version__",
]
