"""Simulation and bound certification for the forced fractional Keller-Segel system on the torus."""

from .constants import ModelParams, DataNorms, PaperConstants, compute_constants
from .dynamics import SolverConfig, run, twin_run
from .torus import Field, SpectralField, TorusGrid

__all__ = [
    "ModelParams",
    "DataNorms",
    "PaperConstants",
    "compute_constants",
    "SolverConfig",
    "run",
    "twin_run",
    "Field",
    "SpectralField",
    "TorusGrid",
]

__version__ = "0.1.0"
