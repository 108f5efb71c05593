"""Cahn-Hilliard dynamics on long strips and cylinders with weighted and uniformly-local diagnostics."""
from .domain import GridSpec, ScalarField
from .dynamics import SolverConfig, State, TrajectoryRecord, integrate, make_initial_data
from .potentials import PotentialSpec
from .weights import WeightSpec

__version__ = "0.1.0"

__all__ = ["GridSpec", "ScalarField", "SolverConfig", "State", "TrajectoryRecord", "integrate",
           "make_initial_data", "PotentialSpec", "WeightSpec", "__version__"]
