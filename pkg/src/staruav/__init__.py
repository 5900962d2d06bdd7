"""Joint trajectory, surface coefficient, and power optimization for an
aerial relay backed by a transmit-and-reflect surface serving a primary
NOMA group and an underlay secondary pair."""

__version__ = "0.1.0"

from .ao import AoOptions, AoSolution, ScenarioInfeasibleError, initialize, run_ao
from .rate import RateReport, oma_sum_rate, sum_rate
from .scenario import (
    PhysicalConstants,
    Position2D,
    Scenario,
    ScenarioError,
    TimeGrid,
    UserSpec,
)
from .star_ris import BeamformingState, ElementCoeffs, ModeAssignment

__all__ = [
    "AoOptions",
    "AoSolution",
    "BeamformingState",
    "ElementCoeffs",
    "ModeAssignment",
    "PhysicalConstants",
    "Position2D",
    "RateReport",
    "Scenario",
    "ScenarioError",
    "ScenarioInfeasibleError",
    "TimeGrid",
    "UserSpec",
    "initialize",
    "oma_sum_rate",
    "run_ao",
    "sum_rate",
    "__version__",
]
