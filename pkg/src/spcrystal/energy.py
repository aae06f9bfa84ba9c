"""Energy per cell, its derivatives, and the sphere chart around a point.

All evaluations are spectral on the (truncated) cell.  The Coulomb part is
always ``1/2 ||Lambda rho||^2``; ``coulomb_via_potential`` and
``coulomb_via_field`` exist only as independent cross-checks.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .densities import (
    IonSpecies,
    PhysicalUnits,
    assemble_rho_plus,
    check_resolvable,
    species_coefficients,
)
from .errors import CellMismatch, NotTangent, ValidationError, ZeroField
from .geometry import Cell
from .spectral import (
    ScalarField,
    analyze,
    check_neutral,
    inner,
    inv_k2,
    norm2,
    synthesize,
)

MANIFOLD_RTOL = 1e-10
TANGENT_TOL = 1e-8


@dataclass(frozen=True)
class EnergyBreakdown:
    kinetic: float
    coulomb: float

    @property
    def total(self) -> float:
        return self.kinetic + self.coulomb


@dataclass(frozen=True, eq=False)
class Configuration:
    """Electron field plus ion positions; the point (psi, x) being optimized."""

    psi: ScalarField
    ions: tuple[IonSpecies, ...]
    units: PhysicalUnits = PhysicalUnits()

    def __post_init__(self):
        object.__setattr__(self, "ions", tuple(self.ions))
        if not self.ions:
            raise ValidationError("at least one ion species is required (Z > 0)")
        n2 = norm2(self.cell, self.psi.values)
        if abs(n2 - self.Z) > MANIFOLD_RTOL * self.Z:
            raise ValidationError(f"||psi||^2 = {n2:.15g} differs from Z = {self.Z:.15g}")

    @property
    def cell(self) -> Cell:
        return self.psi.cell

    @property
    def Z(self) -> float:
        return float(sum(s.Z for s in self.ions))

    @property
    def charge_scale(self) -> float:
        return self.Z * abs(self.units.charge_e)

    @cached_property
    def rho_plus(self) -> np.ndarray:
        return assemble_rho_plus(self.ions, self.cell, self.units.charge_e).values

    def with_psi(self, psi) -> "Configuration":
        if not isinstance(psi, ScalarField):
            psi = ScalarField(self.cell, psi)
        new = Configuration(psi, self.ions, self.units)
        if "rho_plus" in self.__dict__:
            new.__dict__["rho_plus"] = self.rho_plus
        return new

    def with_positions(self, positions) -> "Configuration":
        ions = tuple(s.moved(p) for s, p in zip(self.ions, positions))
        return Configuration(self.psi, ions, self.units)

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.position for s in self.ions])


def make_configuration(
    cell: Cell,
    ions: Sequence[IonSpecies],
    psi=None,
    units: PhysicalUnits = PhysicalUnits(),
) -> Configuration:
    """Build a configuration; ``psi`` is rescaled onto the sphere ||psi||^2 = Z.

    Without ``psi`` the start is sqrt(rho+/|e|), which is positive and
    already carries the neutralizing norm.
    """
    ions = tuple(ions)
    if not ions:
        raise ValidationError("at least one ion species is required (Z > 0)")
    for s in ions:
        check_resolvable(s, cell)
    Z = float(sum(s.Z for s in ions))
    if psi is None:
        rp = assemble_rho_plus(ions, cell, units.charge_e).values
        psi = np.sqrt(np.clip(rp / abs(units.charge_e), 0.0, None))
    vals = psi.values if isinstance(psi, ScalarField) else np.asarray(psi, dtype=complex)
    if vals.shape != cell.grid:
        raise CellMismatch(f"psi shape {vals.shape} does not match grid {cell.grid}")
    n2 = norm2(cell, vals)
    if not n2 > 0:
        raise ZeroField("initial psi is identically zero")
    vals = vals.astype(complex) * np.sqrt(Z / n2)
    return Configuration(ScalarField(cell, vals), ions, units)


# ---------------------------------------------------------------- array-level

def density(cell: Cell, psi: np.ndarray, rho_plus: np.ndarray, units: PhysicalUnits) -> np.ndarray:
    return rho_plus + units.charge_e * (psi.real**2 + psi.imag**2)


def kinetic_energy(cell: Cell, psi_hat: np.ndarray, units: PhysicalUnits) -> float:
    return units.kinetic * cell.dV * float(np.sum(cell.k2 * (psi_hat.real**2 + psi_hat.imag**2)))


def coulomb_energy(cell: Cell, rho_hat: np.ndarray) -> float:
    return 0.5 * cell.dV * float(np.sum(inv_k2(cell) * (rho_hat.real**2 + rho_hat.imag**2)))


def energy_arrays(cell, psi, rho_plus, units, scale=None) -> EnergyBreakdown:
    rho = density(cell, psi, rho_plus, units)
    check_neutral(cell, rho, scale)
    return EnergyBreakdown(kinetic_energy(cell, analyze(psi), units), coulomb_energy(cell, analyze(rho)))


def energy_increment(cell, psi, delta, rho_plus, units) -> float:
    """U(psi + delta) - U(psi) with roundoff proportional to ``delta``.

    Both terms are quadratic forms, q(u + v) - q(u) = Re<v, A(2u + v)>; the
    density change is e Re[delta conj(2 psi + delta)].
    """
    B, D = analyze(psi), analyze(delta)
    dkin = units.kinetic * cell.dV * float(np.sum(cell.k2 * (np.conj(D) * (2 * B + D)).real))
    drho = units.charge_e * (delta * np.conj(2 * psi + delta)).real
    rho = density(cell, psi, rho_plus, units)
    Rd, Rs = analyze(drho), analyze(2 * rho + drho)
    dcoul = 0.5 * cell.dV * float(np.sum(inv_k2(cell) * (np.conj(Rd) * Rs).real))
    return dkin + dcoul


def energy_difference(cell, psi_a, psi_b, rho_plus, units) -> float:
    """U(psi_a) - U(psi_b), evaluated from the difference so small changes stay accurate."""
    return energy_increment(cell, psi_b, psi_a - psi_b, rho_plus, units)


def configuration_difference(a: "Configuration", b: "Configuration") -> float:
    """U(a) - U(b) for configurations on one cell, without cancellation.

    Handles differences in both psi and the ion positions.
    """
    if not a.cell.compatible(b.cell):
        raise CellMismatch("configurations live on different cells")
    cell, units = a.cell, a.units
    pa, pb = a.psi.values, b.psi.values
    A, B = analyze(pa), analyze(pb)
    dkin = units.kinetic * cell.dV * float(np.sum(cell.k2 * (np.conj(A - B) * (A + B)).real))
    drho = (a.rho_plus - b.rho_plus) + units.charge_e * ((pa - pb) * np.conj(pa + pb)).real
    rho_b = density(cell, pb, b.rho_plus, units)
    Rd, Rs = analyze(drho), analyze(2 * rho_b + drho)
    dcoul = 0.5 * cell.dV * float(np.sum(inv_k2(cell) * (np.conj(Rd) * Rs).real))
    return dkin + dcoul


def potential_arrays(cell, psi, rho_plus, units, scale=None) -> tuple[np.ndarray, np.ndarray]:
    """(phi, rho) with phi the zero-mean solution of -Lap phi = rho."""
    rho = density(cell, psi, rho_plus, units)
    check_neutral(cell, rho, scale)
    phi = synthesize(analyze(rho) * inv_k2(cell)).real
    return phi, rho


def hamiltonian_apply(cell: Cell, psi: np.ndarray, phi: np.ndarray, units: PhysicalUnits) -> np.ndarray:
    """H psi = -(hbar^2/2m) Lap psi + e phi psi."""
    return units.kinetic * synthesize(cell.k2 * analyze(psi)) + units.charge_e * phi * psi


# ---------------------------------------------------------------- public API

def energy(config: Configuration) -> EnergyBreakdown:
    return energy_arrays(config.cell, config.psi.values, config.rho_plus, config.units, config.charge_scale)


def potential(config: Configuration) -> ScalarField:
    phi, _ = potential_arrays(config.cell, config.psi.values, config.rho_plus, config.units, config.charge_scale)
    return ScalarField(config.cell, phi, real=True)


def charge_density(config: Configuration) -> ScalarField:
    return ScalarField(config.cell, density(config.cell, config.psi.values, config.rho_plus, config.units), real=True)


def coulomb_via_potential(config: Configuration) -> float:
    """1/2 int phi rho, the three-dimensional form of the Coulomb energy."""
    phi, rho = potential_arrays(config.cell, config.psi.values, config.rho_plus, config.units, config.charge_scale)
    return 0.5 * config.cell.dV * float(np.sum(phi * rho))


def coulomb_via_field(config: Configuration) -> float:
    """1/2 int |grad phi|^2 with the gradient taken component by component."""
    cell = config.cell
    phi, _ = potential_arrays(cell, config.psi.values, config.rho_plus, config.units, config.charge_scale)
    P = analyze(phi)
    total = 0.0
    for j in range(3):
        g = synthesize(-1j * cell.kvec[..., j] * P)
        total += float(np.sum(np.abs(g) ** 2))
    return 0.5 * cell.dV * total


def grad_psi(config: Configuration) -> ScalarField:
    """Unconstrained gradient -2(hbar^2/2m) Lap psi + 2 e phi psi.

    Pairs with perturbations through dU = Re <g, delta>.
    """
    phi, _ = potential_arrays(config.cell, config.psi.values, config.rho_plus, config.units, config.charge_scale)
    return ScalarField(config.cell, 2.0 * hamiltonian_apply(config.cell, config.psi.values, phi, config.units))


def grad_ions_arrays(cell, ions, phi, charge_e) -> np.ndarray:
    """dU/dx_j = int phi d(rho_j^per(x - x_j))/dx_j, Cartesian, one row per ion."""
    P = analyze(phi)
    out = np.zeros((len(ions), 3))
    for j, s in enumerate(ions):
        _, dc = species_coefficients(s, cell, with_gradient=True)
        dc *= abs(charge_e)
        out[j] = cell.dV * np.einsum("xyz,xyzl->l", np.conj(P), dc).real
    return out


def grad_ions(config: Configuration) -> np.ndarray:
    phi = potential(config).values
    return grad_ions_arrays(config.cell, config.ions, phi, config.units.charge_e)


# ---------------------------------------------------------------- chart on the sphere

def tangent_defect(cell: Cell, psi0: np.ndarray, tau: np.ndarray) -> float:
    """|<psi0, tau>| relative to ||psi0|| ||tau||."""
    den = np.sqrt(norm2(cell, psi0) * norm2(cell, tau))
    return abs(inner(cell, psi0, tau)) / den if den > 0 else 0.0


def _scaled_norm(a: np.ndarray) -> float:
    """Euclidean norm that does not underflow for tiny (even subnormal) entries."""
    m = float(np.max(np.abs(a))) if a.size else 0.0
    return m * float(np.linalg.norm(a / m)) if m > 0 else 0.0


def _check_tangent(cell, psi0, tau):
    defect = tangent_defect(cell, psi0, tau)
    if defect > TANGENT_TOL:
        raise NotTangent(f"tau is not orthogonal to psi0 (relative overlap {defect:.2e})")


def project_tangent(psi0: ScalarField, raw: ScalarField) -> ScalarField:
    """Remove the psi0 component (complex projection) from ``raw``."""
    c = psi0.inner(raw) / norm2(psi0.cell, psi0.values)
    return ScalarField(psi0.cell, raw.values - c * psi0.values)


def chart_point(psi0: ScalarField, tau: ScalarField, eps: float, Z: float | None = None) -> ScalarField:
    """sqrt(Z) (psi0 + eps tau) / ||psi0 + eps tau||."""
    cell = psi0.cell
    if Z is None:
        Z = norm2(cell, psi0.values)
    v = psi0.values + eps * tau.values
    n2 = norm2(cell, v)
    if not n2 > 0:
        raise ZeroField("chart point collapsed to zero")
    return ScalarField(cell, v * np.sqrt(Z / n2))


def directional_derivative(config: Configuration, tau: ScalarField) -> float:
    """Derivative of U along the chart curve through psi0 with tangent tau.

    Kinetic part (hbar^2/2m) int (grad tau . grad psi0* + c.c.) plus the
    Coulomb part e int Lambda rho0 . Lambda(tau psi0* + psi0 tau*).
    """
    cell, units = config.cell, config.units
    psi0, t = config.psi.values, tau.values
    _check_tangent(cell, psi0, t)
    A, T = analyze(psi0), analyze(t)
    kin = units.kinetic * cell.dV * 2.0 * float(np.sum(cell.k2 * (np.conj(A) * T).real))
    s = 2.0 * (t * np.conj(psi0)).real
    # orthogonality makes the overlap density neutral
    check_neutral(cell, s, 2.0 * cell.dV * _scaled_norm(t) * _scaled_norm(psi0))
    rho0 = density(cell, psi0, config.rho_plus, units)
    check_neutral(cell, rho0, config.charge_scale)
    R, S = analyze(rho0), analyze(s)
    coul = units.charge_e * cell.dV * float(np.sum(inv_k2(cell) * (np.conj(R) * S).real))
    return kin + coul


@dataclass(frozen=True)
class RemainderReport:
    norm: float
    dc_identity: float
    alpha: float


def remainder_norm(psi0: ScalarField, tau: ScalarField, eps: float, Z: float | None = None) -> RemainderReport:
    """L^2 norm of Lambda[eps^2 |tau|^2 cos^2 a - |psi0|^2 sin^2 a].

    ``a = arctan(eps ||tau|| / ||psi0||)``.  The bracket has zero mean because
    eps^2 ||tau||^2 - Z tan^2 a = 0; that identity is checked (relative 1e-12)
    before Lambda is applied.
    """
    cell = psi0.cell
    p, t = psi0.values, tau.values
    _check_tangent(cell, p, t)
    nt2, np2 = norm2(cell, t), norm2(cell, p)
    if Z is None:
        Z = np2
    alpha = float(np.arctan(eps * np.sqrt(nt2) / np.sqrt(np2)))
    ident = eps**2 * nt2 - Z * np.tan(alpha) ** 2
    ref = max(eps**2 * nt2, np.finfo(float).tiny)
    if abs(ident) > 1e-12 * ref:
        raise NotTangent(f"DC cancellation failed: residual {ident:.3e}")
    if eps == 0:
        return RemainderReport(0.0, float(ident), alpha)
    c2, s2 = np.cos(alpha) ** 2, np.sin(alpha) ** 2
    bracket = eps**2 * np.abs(t) ** 2 * c2 - np.abs(p) ** 2 * s2
    check_neutral(cell, bracket)
    coeffs = analyze(bracket) * np.sqrt(inv_k2(cell))
    return RemainderReport(float(np.sqrt(norm2(cell, coeffs))), float(ident), alpha)


# ---------------------------------------------------------------- test-space tangents

def bump_window(cell: Cell, fraction: float = 0.5) -> np.ndarray:
    """Smooth compactly supported window on the truncated axes.

    Equals exp(1 - 1/(1 - t^2)) with t = x / (fraction L) on each truncated
    axis and is exactly zero for |x| >= fraction L; ones for d = 3.
    """
    w = np.ones(cell.grid)
    x = cell.positions
    for L, ax in zip(cell.trunc, cell.truncated_axes):
        t = x[..., ax] / (fraction * L)
        inside = np.abs(t) < 1
        f = np.zeros_like(t)
        f[inside] = np.exp(1.0 - 1.0 / (1.0 - t[inside] ** 2))
        w *= f
    return w


def random_tangent(psi0: ScalarField, rng: np.random.Generator, band: int = 2, window: bool = True) -> ScalarField:
    """Random smooth tangent vector at psi0.

    Band-limited noise (|m_i| <= band) times a compact window on truncated
    axes; orthogonality is enforced with the windowed psi0 so the support
    stays compact.
    """
    cell = psi0.cell
    C = np.zeros(cell.grid, dtype=complex)
    mask = np.ones(cell.grid, dtype=bool)
    for ax, idx in enumerate(cell.mode_index):
        shape = [1, 1, 1]
        shape[ax] = -1
        mask &= (np.abs(idx) <= band).reshape(shape)
    C[mask] = rng.standard_normal(mask.sum()) + 1j * rng.standard_normal(mask.sum())
    f = synthesize(C)
    w = bump_window(cell) if window else np.ones(cell.grid)
    wf, wp = w * f, w * psi0.values
    c = inner(cell, psi0.values, wf) / inner(cell, psi0.values, wp)
    tau = wf - c * wp
    tau *= 1.0 / np.sqrt(norm2(cell, tau))
    return ScalarField(cell, tau)


# ---------------------------------------------------------------- chart finite differences

@dataclass(frozen=True)
class GateauxRow:
    eps: float
    fd: float
    analytic: float
    diff: float
    remainder: float


def gateaux_table(config: Configuration, tau: ScalarField, eps_list: Sequence[float]) -> list[GateauxRow]:
    """One-sided chart differences against D_tau U, with the remainder norm per eps."""
    cell, units = config.cell, config.units
    psi0 = config.psi
    D = directional_derivative(config, tau)
    rows = []
    for eps in eps_list:
        p = chart_point(psi0, tau, eps, config.Z).values
        fd = energy_difference(cell, p, psi0.values, config.rho_plus, units) / eps
        R = remainder_norm(psi0, tau, eps, config.Z).norm
        rows.append(GateauxRow(float(eps), fd, D, abs(fd - D), R))
    return rows


def loglog_slope(x, y) -> float:
    """Least-squares slope of log y against log x."""
    x, y = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    return float(np.polyfit(x, y, 1)[0])
