"""Solved ground states: frequency, residuals of the stationary system, diagnostics."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .densities import IonSpecies, PhysicalUnits, check_condition_infrared
from .energy import (
    Configuration,
    EnergyBreakdown,
    energy,
    grad_ions_arrays,
    hamiltonian_apply,
    make_configuration,
    potential_arrays,
)
from .errors import CheckFailed, SPCrystalError, ValidationError, WrongDimension
from .geometry import Cell, make_cell
from .io import atomic_write_json, write_snapshot
from .minimizer import IterationTrace, SolverConfig, initial_guess, minimize
from .spectral import ScalarField, analyze, inner, norm2, synthesize

log = logging.getLogger(__name__)


# ---------------------------------------------------------------- problem description

@dataclass(frozen=True)
class Problem:
    d: int
    periods: tuple
    trunc: tuple
    grid: tuple
    species: tuple[IonSpecies, ...]
    units: PhysicalUnits = PhysicalUnits()

    def __post_init__(self):
        object.__setattr__(self, "species", tuple(self.species))
        if self.d < 3 and len(self.species) != 1:
            raise ValidationError("cells with d < 3 carry exactly one ion per cell")
        if not self.species or sum(s.Z for s in self.species) <= 0:
            raise ValidationError("total ion charge Z must be > 0 (neutrality needs electrons to balance it)")

    def cell(self) -> Cell:
        return make_cell(self.d, self.periods, self.trunc, self.grid)

    def with_trunc(self, L: float) -> "Problem":
        """Same problem with every truncated half-length set to L, grid spacing kept."""
        if self.d == 3:
            raise WrongDimension("no truncated axes for d = 3")
        grid = list(self.grid)
        axes = (2,) if self.d == 2 else (1, 2)
        for ax, L0 in zip(axes, self.trunc):
            n = grid[ax] * L / L0
            grid[ax] = max(2, 2 * int(round(n / 2)))
        return replace(self, trunc=tuple(float(L) for _ in self.trunc), grid=tuple(grid))


# ---------------------------------------------------------------- result

@dataclass
class GroundStateResult:
    config: Configuration
    psi0: ScalarField
    phi0: ScalarField
    ions0: np.ndarray
    omega0: complex
    U0: float
    breakdown: EnergyBreakdown
    residuals: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)
    trace: IterationTrace | None = None
    converged: bool = True

    @property
    def cell(self) -> Cell:
        return self.config.cell


def extract_omega(config: Configuration) -> complex:
    """Rayleigh quotient <H psi0, psi0> / (hbar ||psi0||^2)."""
    cell, units = config.cell, config.units
    psi = config.psi.values
    phi, _ = potential_arrays(cell, psi, config.rho_plus, units, config.charge_scale)
    return rayleigh_omega(cell, psi, phi, units)


def rayleigh_omega(cell: Cell, psi: np.ndarray, phi: np.ndarray, units: PhysicalUnits) -> complex:
    hpsi = hamiltonian_apply(cell, psi, phi, units)
    return complex(inner(cell, hpsi, psi)) / (units.hbar * norm2(cell, psi))


def residuals(result: GroundStateResult) -> dict:
    cfg = result.config
    cell, units = cfg.cell, cfg.units
    psi, phi = result.psi0.values, result.phi0.values
    hpsi = hamiltonian_apply(cell, psi, phi, units)
    lam = units.hbar * result.omega0
    schr = np.sqrt(norm2(cell, hpsi - lam * psi) / norm2(cell, psi))
    rho = cfg.rho_plus + units.charge_e * np.abs(psi) ** 2
    lap = synthesize(cell.k2 * analyze(phi)).real
    # rho0 carries absolute roundoff ~1e-16 ||rho+|| from the cancellation, so a
    # nearly neutral density is measured against 1e-4 ||rho+|| instead
    ref = max(norm2(cell, rho), 1e-8 * norm2(cell, cfg.rho_plus))
    pois = np.sqrt(norm2(cell, lap - rho) / ref) if ref > 0 else 0.0
    G = grad_ions_arrays(cell, cfg.ions, phi, units.charge_e)
    return {
        "schrodinger": float(schr),
        "poisson": float(pois),
        "force": float(np.max(np.linalg.norm(G, axis=1))),
    }


# ---------------------------------------------------------------- diagnostics

@dataclass
class GrowthDiagnostic:
    radii: np.ndarray
    max_phi: np.ndarray
    exponent: float | None
    constant: float | None
    fit_residual: float | None
    flat: bool

    def as_dict(self) -> dict:
        return {
            "exponent": self.exponent,
            "constant": self.constant,
            "fit_residual": self.fit_residual,
            "flat": self.flat,
        }


def growth_diagnostic(result: GroundStateResult, flat_tol: float = 1e-12) -> GrowthDiagnostic:
    """Fit the growth envelope of |phi0| away from the ion plane (d=2) or line (d=1).

    phi0 keeps its zero-mean normalization.  M(r) is the running sup of |phi0|
    over points within distance r of the ion (minimum image on the truncated
    axes); a bound with a nondecreasing right side holds pointwise iff it
    holds for M.  For d=2 the fit is log M = c + p log(r + 1), for d=1 it is
    log M = c + p log log(r + 2).  Only r in [L/8, L/2] enters.  Never raises
    on a bad fit.
    """
    cell = result.cell
    if cell.d == 3:
        raise WrongDimension("growth diagnostic applies to d = 1, 2 only")
    x = cell.positions
    phi = result.phi0.values.real
    ion = cell.to_cartesian(np.atleast_2d(result.ions0)[0])
    off = []
    for L, ax in zip(cell.trunc, cell.truncated_axes):
        u = x[..., ax] - ion[ax]
        off.append(u - 2 * L * np.round(u / (2 * L)))
    r = np.abs(off[0]) if cell.d == 2 else np.hypot(off[0], off[1])
    h = float(max(cell.spacing[ax] for ax in cell.truncated_axes))
    L = min(cell.trunc)
    bins = np.arange(0.0, L + h, h)
    idx = np.clip(np.digitize(r.ravel(), bins) - 1, 0, len(bins) - 1)
    M = np.zeros(len(bins))
    np.maximum.at(M, idx, np.abs(phi).ravel())
    M = np.maximum.accumulate(M)
    radii = bins + 0.5 * h if cell.d == 1 else bins
    if float(M[-1]) <= flat_tol:
        return GrowthDiagnostic(radii, M, None, None, None, True)
    sel = (radii >= L / 8) & (radii <= L / 2) & (M > 0)
    if sel.sum() < 2:
        return GrowthDiagnostic(radii, M, None, None, None, False)
    xs = np.log(radii[sel] + 1.0) if cell.d == 2 else np.log(np.log(radii[sel] + 2.0))
    ys = np.log(M[sel])
    p, c = np.polyfit(xs, ys, 1)
    resid = float(np.sqrt(np.mean((ys - (p * xs + c)) ** 2)))
    return GrowthDiagnostic(radii, M, float(p), float(np.exp(c)), resid, False)


def spectral_decay(result: GroundStateResult) -> dict:
    """Share of ||psi0^||^2 and ||phi0^||^2 above half the resolved band on some axis."""
    cell = result.cell
    masks = [np.abs(idx) > n // 4 for idx, n in zip(cell.mode_index, cell.grid)]
    m1, m2, m3 = np.meshgrid(*masks, indexing="ij")
    shell = m1 | m2 | m3
    out = {}
    for name, f in (("psi", result.psi0.values), ("phi", result.phi0.values)):
        c = np.abs(analyze(f)) ** 2
        tot = c.sum()
        out[name] = float(c[shell].sum() / tot) if tot > 0 else 0.0
    return out


def neutrality(result: GroundStateResult) -> float:
    """|int rho0| relative to Z|e|."""
    cfg = result.config
    rho = cfg.rho_plus + cfg.units.charge_e * np.abs(result.psi0.values) ** 2
    return float(abs(cfg.cell.dV * rho.sum()) / cfg.charge_scale)


# ---------------------------------------------------------------- orchestration

def assemble(config: Configuration, trace: IterationTrace | None = None, converged: bool = True) -> GroundStateResult:
    cell, units = config.cell, config.units
    phi, _ = potential_arrays(cell, config.psi.values, config.rho_plus, units, config.charge_scale)
    res = GroundStateResult(
        config=config,
        psi0=config.psi,
        phi0=ScalarField(cell, phi, real=True),
        ions0=config.positions,
        omega0=rayleigh_omega(cell, config.psi.values, phi, units),
        U0=energy(config).total,
        breakdown=energy(config),
        trace=trace,
        converged=converged,
    )
    res.residuals = residuals(res)
    diag = {"neutrality": neutrality(res), "spectral_decay": spectral_decay(res)}
    if cell.d < 3:
        diag["phi_growth"] = growth_diagnostic(res).as_dict()
    res.diagnostics = diag
    return res


def solve(problem: Problem, solver: SolverConfig = SolverConfig(), seed: int | None = None) -> GroundStateResult:
    """Minimize from the positive start (or a seeded noisy one) and assemble the result."""
    cell = problem.cell()
    if seed is None:
        seed = solver.seed
    cfg = initial_guess(make_configuration(cell, problem.species, units=problem.units), seed)
    if cell.d < 3:
        solver = replace(solver, ion_relaxation=False)
    final, trace = minimize(cfg, solver)
    return assemble(final, trace, trace.converged)


@dataclass
class StudyRow:
    L: float
    U0: float | None
    omega0: float | None
    exponent: float | None
    converged: bool
    error: str = ""


def _study_row(args) -> StudyRow:
    problem, L, solver = args
    try:
        res = solve(problem.with_trunc(L), solver)
        g = res.diagnostics.get("phi_growth", {})
        return StudyRow(L, res.U0, res.omega0.real, g.get("exponent"), res.converged)
    except SPCrystalError as exc:
        return StudyRow(L, None, None, None, False, f"{type(exc).__name__}: {exc}")


def truncation_study(problem: Problem, Ls: Sequence[float], solver: SolverConfig = SolverConfig(),
                     workers: int = 1) -> list[StudyRow]:
    """Solve the same d<3 problem at several truncation lengths.

    Refused with :class:`CheckFailed` unless the infrared condition holds.
    """
    if problem.d == 3:
        raise WrongDimension("truncation study needs an unbounded direction (d = 1 or 2)")
    cell = problem.cell()
    rep = check_condition_infrared(problem.species[0], cell)
    if not rep.passed:
        raise CheckFailed(f"{rep.condition} fails for this ion profile; refusing the L sweep")
    jobs = [(problem, float(L), solver) for L in Ls]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(_study_row, jobs))
    return [_study_row(j) for j in jobs]


def successive_differences(rows: Sequence[StudyRow]) -> list[float | None]:
    out = []
    for a, b in zip(rows, rows[1:]):
        out.append(abs(b.U0 - a.U0) if a.U0 is not None and b.U0 is not None else None)
    return out


# ---------------------------------------------------------------- persistence

def result_record(result: GroundStateResult, snapshot_paths: dict | None = None) -> dict:
    cell = result.cell
    rec = {
        "cell": {"d": cell.d, "periods": [list(p) for p in cell.periods],
                 "trunc": list(cell.trunc), "grid": list(cell.grid), "volume": cell.volume},
        "U0": float(result.U0),
        "I1": float(result.breakdown.kinetic),
        "I2": float(result.breakdown.coulomb),
        "omega0": {"real": float(result.omega0.real), "imag": float(result.omega0.imag)},
        "ions0": [[float(v) for v in row] for row in np.atleast_2d(result.ions0)],
        "residuals": {k: float(v) for k, v in result.residuals.items()},
        "diagnostics": result.diagnostics,
        "converged": bool(result.converged),
        "iterations": len(result.trace) if result.trace is not None else 0,
        "units": {"hbar": result.config.units.hbar, "mass_e": result.config.units.mass_e,
                  "charge_e": result.config.units.charge_e},
        "Z": result.config.Z,
    }
    if snapshot_paths:
        rec.update({k: str(v) for k, v in snapshot_paths.items()})
    return rec


def save_result(result: GroundStateResult, path, snapshot_dir=None) -> dict:
    """Write field snapshots (if a directory is given) and the JSON record."""
    snaps = {}
    if snapshot_dir is not None:
        snapshot_dir = Path(snapshot_dir)
        snaps = {"psi0": snapshot_dir / "psi0.spfld", "phi0": snapshot_dir / "phi0.spfld"}
        write_snapshot(result.psi0, snaps["psi0"])
        write_snapshot(result.phi0, snaps["phi0"])
    rec = result_record(result, snaps)
    atomic_write_json(path, rec)
    return rec
