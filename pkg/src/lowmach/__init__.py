"""Pseudo-spectral toolkit for low Mach number compressible flows on periodic boxes."""

from .besov import INF, BesovSpec, SpaceTimeSpec, Trajectory, TruncatedSpec, besov_norm, spacetime_norm, truncated_norm
from .errors import LowMachError
from .harness import DataSpec, SweepConfig, measure_rates, run_sweep
from .littlewood_paley import SplitConfig, delta_j
from .solvers import BaroState, IncState, NSFState, PhysicalParams, StepperConfig
from .spectral import Grid, SpectralField, VectorField, from_physical, to_physical

__version__ = "0.1.0"

__all__ = [
    "INF", "BesovSpec", "SpaceTimeSpec", "Trajectory", "TruncatedSpec", "besov_norm", "spacetime_norm",
    "truncated_norm", "LowMachError", "DataSpec", "SweepConfig", "measure_rates", "run_sweep", "SplitConfig",
    "delta_j", "BaroState", "IncState", "NSFState", "PhysicalParams", "StepperConfig", "Grid", "SpectralField",
    "VectorField", "from_physical", "to_physical",
]
