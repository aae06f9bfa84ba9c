"""Shared fixtures: small cells and cached solves reused across test modules."""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from spcrystal.densities import Gaussian, IonSpecies, TabulatedRadial, Uniform
from spcrystal.energy import make_configuration
from spcrystal.groundstate import Problem, assemble, solve
from spcrystal.minimizer import SolverConfig, minimize, scf_oracle

CENTER = (0.5, 0.5, 0.5)


def problem_3d(grid=12, sigma=0.25):
    return Problem(3, np.eye(3), (), (grid,) * 3, (IonSpecies(1.0, Gaussian(sigma), CENTER),))


def problem_2d(L=4.0, nz=64):
    return Problem(2, ((1, 0, 0), (0, 1, 0)), (L,), (8, 8, nz), (IonSpecies(1.0, Gaussian(0.25), CENTER),))


def problem_1d(L=4.0, n=64):
    return Problem(1, ((1, 0, 0),), (L, L), (8, n, n), (IonSpecies(1.0, Gaussian(0.25), CENTER),))


def problem_jellium(grid=16):
    return Problem(3, np.eye(3), (), (grid,) * 3, (IonSpecies(1.0, Uniform()),))


def problem_pair():
    ions = (IonSpecies(1.0, Gaussian(0.2), (0.2, 0.2, 0.2)), IonSpecies(1.0, Gaussian(0.2), (0.6, 0.7, 0.6)))
    return Problem(3, np.eye(3), (), (12, 12, 12), ions)


def heavy_tail_profile():
    """(1 + r)^-3.25: integrable, but the first moment diverges."""
    r = np.concatenate([[0.0], np.geomspace(1e-3, 1e6, 400)])
    return TabulatedRadial(r, (1 + r) ** -3.25)


FIXTURES = {"3d": problem_3d, "2d": problem_2d, "1d": problem_1d}


@lru_cache(maxsize=None)
def solved(name: str):
    return solve(FIXTURES[name]())


@lru_cache(maxsize=None)
def oracle(name: str):
    p = FIXTURES[name]()
    cfg = make_configuration(p.cell(), p.species, units=p.units)
    final, info = scf_oracle(cfg, SolverConfig(grad_tol=1e-10))
    return assemble(final), info


@lru_cache(maxsize=None)
def relaxed_pair():
    p = problem_pair()
    cfg = make_configuration(p.cell(), p.species, units=p.units)
    final, trace = minimize(cfg, SolverConfig(ion_relaxation=True))
    return assemble(final, trace, trace.converged)


def random_psi(cell, rng, band=3):
    """Smooth random complex field (|m_i| <= band)."""
    C = np.zeros(cell.grid, dtype=complex)
    idx = np.ix_(*[np.flatnonzero(np.abs(m) <= band) for m in cell.mode_index])
    shape = C[idx].shape
    C[idx] = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    from spcrystal.spectral import synthesize
    return synthesize(C)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}
