"""Spectral ground states of the periodic Schroedinger-Poisson crystal model.

Cells are 3-tori (d=3) or cells with one (d=2) or two (d=1) unbounded axes,
truncated to [-L, L] with periodic wrap.  The ground state minimizes the
energy per cell over wavefunctions with ||psi||^2 = Z.
"""
__version__ = "0.1.0"

from .densities import Gaussian, IonSpecies, PhysicalUnits, TabulatedRadial, Uniform, check_condition_infrared
from .energy import Configuration, energy, grad_ions, grad_psi, make_configuration
from .errors import (
    BadGrid,
    BadTruncation,
    CellMismatch,
    CheckFailed,
    DegenerateLattice,
    LineSearchStalled,
    NonNeutral,
    NotConverged,
    NotTangent,
    SPCrystalError,
    UnderResolved,
    ValidationError,
    WrongDimension,
    ZeroField,
)
from .geometry import Cell, make_cell
from .groundstate import GroundStateResult, Problem, solve, truncation_study
from .minimizer import SolverConfig, minimize, relax_ions, scf_oracle

__all__ = [
    "Cell", "Configuration", "Gaussian", "GroundStateResult", "IonSpecies", "PhysicalUnits",
    "Problem", "SolverConfig", "TabulatedRadial", "Uniform", "check_condition_infrared",
    "energy", "grad_ions", "grad_psi", "make_cell", "make_configuration", "minimize",
    "relax_ions", "scf_oracle", "solve", "truncation_study",
    "BadGrid", "BadTruncation", "CellMismatch", "CheckFailed", "DegenerateLattice", "LineSearchStalled", "NonNeutral", "NotConverged", "NotTangent", "SPCrystalError", "UnderResolved", "ValidationError", "WrongDimension", "ZeroField",
]
