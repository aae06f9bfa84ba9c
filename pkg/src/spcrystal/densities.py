"""Ion species, periodized ion densities and charge bookkeeping."""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path
from typing import Sequence, Union

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import CellMismatch, UnderResolved, ValidationError, ZeroField
from .geometry import Cell
from .spectral import ScalarField, norm2, synthesize

# images beyond this Gaussian weight are dropped from the alias sum
_ALIAS_CUTOFF = 1e-20


@dataclass(frozen=True)
class PhysicalUnits:
    hbar: float = 1.0
    mass_e: float = 1.0
    charge_e: float = -1.0

    def __post_init__(self):
        for name in ("hbar", "mass_e", "charge_e"):
            v = getattr(self, name)
            if not np.isfinite(v) or v == 0:
                raise ValidationError(f"{name} must be finite and nonzero")
        if self.hbar < 0 or self.mass_e < 0:
            raise ValidationError("hbar and mass_e must be positive")
        if self.charge_e > 0:
            raise ValidationError("electron charge must be negative")

    @property
    def kinetic(self) -> float:
        """Prefactor hbar^2 / 2m."""
        return self.hbar**2 / (2.0 * self.mass_e)


# ---------------------------------------------------------------- profiles
# Each profile is a unit-mass radial shape; transform(k) is its 3D Fourier
# transform (value 1 at k = 0).

@dataclass(frozen=True)
class Gaussian:
    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError(f"Gaussian width must be > 0, got {self.sigma}")

    def transform(self, k: np.ndarray) -> np.ndarray:
        return np.exp(-0.5 * self.sigma**2 * np.asarray(k) ** 2)

    def density(self, r: np.ndarray) -> np.ndarray:
        s2 = self.sigma**2
        return np.exp(-0.5 * np.asarray(r) ** 2 / s2) / (2 * np.pi * s2) ** 1.5

    def reach(self, eps: float = _ALIAS_CUTOFF) -> float:
        """Wavenumber beyond which the transform is below ``eps``."""
        return np.sqrt(-2.0 * np.log(eps)) / self.sigma


@dataclass(frozen=True, eq=False)
class TabulatedRadial:
    """Radial density samples; zero beyond the last radius.

    Values are renormalized to unit mass, so only the shape matters.
    """

    radius: np.ndarray
    rho: np.ndarray
    nodes: int = 20000

    def __post_init__(self):
        r = np.asarray(self.radius, dtype=float)
        v = np.asarray(self.rho, dtype=float)
        if r.ndim != 1 or r.shape != v.shape or r.size < 4:
            raise ValidationError("tabulated profile needs >= 4 matching (radius, density) rows")
        if np.any(np.diff(r) <= 0) or r[0] < 0:
            raise ValidationError("tabulated radii must be nonnegative and increasing")
        if np.any(v < 0):
            raise ValidationError("tabulated density must be nonnegative")
        object.__setattr__(self, "radius", r)
        object.__setattr__(self, "rho", v)

    @cached_property
    def _interp(self):
        return PchipInterpolator(self.radius, self.rho, extrapolate=False)

    def density_raw(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        out = np.nan_to_num(self._interp(np.clip(r, self.radius[0], None)))
        out[r > self.radius[-1]] = 0.0
        return out

    @cached_property
    def _quadrature(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and trapezoid weights on [r_0, r_max] (fine near 0, geometric after)."""
        r0, r1, rmax = self.radius[0], self.radius[1], self.radius[-1]
        head = np.linspace(r0, r1, 201)
        tail = np.geomspace(max(r1, 1e-300), rmax, self.nodes) if rmax > r1 else np.array([])
        nodes = np.unique(np.concatenate([head, tail]))
        w = np.zeros_like(nodes)
        dr = np.diff(nodes)
        w[:-1] += 0.5 * dr
        w[1:] += 0.5 * dr
        return nodes, w

    @cached_property
    def mass(self) -> float:
        r, w = self._quadrature
        return float(4 * np.pi * np.sum(w * r**2 * self.density_raw(r)))

    def density(self, r) -> np.ndarray:
        return self.density_raw(r) / self.mass

    def radial_moment(self, power: float, rcut: float | None = None) -> float:
        """``int |x|^power rho d^3x`` restricted to ``|x| <= rcut``."""
        r, w = self._quadrature
        mask = np.ones_like(r, dtype=bool) if rcut is None else r <= rcut
        f = 4 * np.pi * r**2 * r**power * self.density(r)
        return float(np.sum((w * f)[mask]))

    def transform(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        r, w = self._quadrature
        wf = w * 4 * np.pi * r**2 * self.density(r)
        flat = np.unique(np.round(k.ravel(), 12))
        vals = np.array([np.sum(wf * np.sinc(kk * r / np.pi)) for kk in flat])
        return np.interp(k, flat, vals) if flat.size > 1 else np.full_like(k, vals[0])

    def reach(self, eps: float = _ALIAS_CUTOFF) -> float:
        return 0.0


@dataclass(frozen=True)
class Uniform:
    """Constant background over the whole (truncated) cell: jellium."""

    def transform(self, k) -> np.ndarray:
        k = np.asarray(k, dtype=float)
        return (k == 0).astype(float)

    def reach(self, eps: float = _ALIAS_CUTOFF) -> float:
        return 0.0


Profile = Union[Gaussian, TabulatedRadial, Uniform]


def load_tabulated(path: Union[str, Path]) -> TabulatedRadial:
    """Read a two-column (radius, density) text file."""
    data = np.loadtxt(path, ndmin=2)
    if data.shape[1] != 2:
        raise ValidationError(f"{path}: expected two columns, got {data.shape[1]}")
    return TabulatedRadial(data[:, 0], data[:, 1])


# ---------------------------------------------------------------- species

@dataclass(frozen=True)
class IonSpecies:
    Z: float
    profile: Profile
    position: tuple[float, float, float] = (0.0, 0.0, 0.0)
    mass: float = 1836.0

    def __post_init__(self):
        if not self.Z > 0:
            raise ValidationError(f"ion charge number must be > 0, got {self.Z}")
        if not self.mass > 0:
            raise ValidationError("ion mass must be > 0")
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        if len(self.position) != 3:
            raise ValidationError("ion position needs three fractional coordinates")

    def moved(self, position) -> "IonSpecies":
        return IonSpecies(self.Z, self.profile, tuple(position), self.mass)


@dataclass(frozen=True)
class ChargeState:
    species: tuple[IonSpecies, ...] = dc_field(default_factory=tuple)

    @property
    def Z(self) -> float:
        return float(sum(s.Z for s in self.species))

    @property
    def target_norm(self) -> float:
        return float(np.sqrt(self.Z))


def check_resolvable(species: IonSpecies, cell: Cell) -> None:
    prof = species.profile
    if isinstance(prof, Gaussian):
        h = float(np.max(cell.spacing))
        if prof.sigma < 2 * h:
            raise UnderResolved(
                f"Gaussian width {prof.sigma} below twice the grid spacing {h:.4g}"
            )
        pmin = float(np.min(np.linalg.norm(np.asarray(cell.periods), axis=1)))
        if prof.sigma > pmin / 2:
            raise UnderResolved(f"Gaussian width {prof.sigma} exceeds half the shortest period")


def _alias_images(species: IonSpecies, cell: Cell) -> list[np.ndarray]:
    """Reciprocal shifts (multiples of n_i b_i) needed to sample the true periodic density."""
    reach = species.profile.reach()
    counts = []
    for i in range(3):
        shift = cell.grid[i] * np.linalg.norm(cell.dual[i])
        half = shift / 2
        counts.append(int(np.ceil(max(reach - half, 0.0) / shift)))
    images = []
    for p in np.ndindex(*(2 * c + 1 for c in counts)):
        p = np.asarray(p) - np.asarray(counts)
        images.append((p * np.asarray(cell.grid)) @ cell.dual)
    return images


def species_coefficients(species: IonSpecies, cell: Cell, with_gradient: bool = False):
    """Unitary coefficients of the sampled periodized density of one species.

    The coefficient at mode k is the continuous transform times the
    position phase ``exp(i k.x_j)``, summed over aliases so that synthesis
    reproduces point samples of the periodic density.  With
    ``with_gradient`` also returns the coefficients of d(density)/d(x_j).
    """
    pref = species.Z * np.sqrt(cell.npoints) / cell.volume
    xj = np.asarray(species.position) @ cell.box
    coeff = np.zeros(cell.grid, dtype=complex)
    dcoeff = np.zeros(cell.grid + (3,), dtype=complex) if with_gradient else None
    for shift in _alias_images(species, cell):
        k = cell.kvec + shift
        kn = np.sqrt(np.einsum("...i,...i->...", k, k))
        term = pref * species.profile.transform(kn) * np.exp(1j * (k @ xj))
        coeff += term
        if with_gradient:
            dcoeff += 1j * k * term[..., None]
    return (coeff, dcoeff) if with_gradient else coeff


def periodize(species: IonSpecies, cell: Cell, charge_e: float = -1.0) -> ScalarField:
    """Sampled rho_j^per(x - x_j), normalized to ``Z_j |e|`` per cell."""
    check_resolvable(species, cell)
    c = species_coefficients(species, cell) * abs(charge_e)
    return ScalarField(cell, synthesize(c).real, real=True)


def assemble_rho_plus(species: Sequence[IonSpecies], cell: Cell, charge_e: float = -1.0) -> ScalarField:
    total = np.zeros(cell.grid)
    for s in species:
        total += periodize(s, cell, charge_e).values
    return ScalarField(cell, total, real=True)


def assemble_rho(psi: ScalarField, rho_plus: ScalarField, units: PhysicalUnits = PhysicalUnits()) -> ScalarField:
    """Total charge density rho+ + e|psi|^2."""
    if psi.cell != rho_plus.cell:
        raise CellMismatch("psi and rho+ live on different cells")
    return ScalarField(psi.cell, rho_plus.values + units.charge_e * np.abs(psi.values) ** 2, real=True)


def project_to_manifold(psi: ScalarField, Z: float) -> ScalarField:
    """Rescale so that ||psi||^2 = Z."""
    n2 = norm2(psi.cell, psi.values)
    if not n2 > 0:
        raise ZeroField("cannot normalize a zero field")
    return ScalarField(psi.cell, psi.values * np.sqrt(Z / n2), psi.real)


# ---------------------------------------------------------------- infrared gate

@dataclass
class InfraredReport:
    passed: bool
    vacuous: bool
    moment: float
    moment_finite: bool
    quotient_norm: float
    norms: list[float]
    ratios: list[float]
    condition: str

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


RATIO_LIMIT = 1.1


def _first_moment(profile: Profile, d: int) -> tuple[float, bool]:
    """``int (transverse |x| + 1) rho`` for a unit-mass radial profile.

    The transverse weight is |x3| for d=2 and |x2|+|x3| for d=1; their
    sphere averages are r/2 and r.  Divergence is flagged when doubling the
    integration radius still grows the integral by more than 10 percent.
    """
    c = 0.5 if d == 2 else 1.0
    if isinstance(profile, Gaussian):
        return 1.0 + 2 * c * profile.sigma * np.sqrt(2 / np.pi), True
    if isinstance(profile, Uniform):
        return float("inf"), False
    rmax = profile.radius[-1]
    partial = [1.0 + c * profile.radial_moment(1.0, rmax / 2**j) for j in (2, 1, 0)]
    finite = partial[2] <= RATIO_LIMIT * partial[1]
    return partial[2], bool(finite)


def _quotient_norm(profile: Profile, d: int, h: float) -> float:
    """L^2 norm of (rho^per(0, xi) + eZ)/|xi| over |xi| <= 1, unit charge.

    Midpoint rule with spacing ``h`` in |xi|: over (-1, 1) for d=2 and over
    the unit disc (polar) for d=1.
    """
    n = max(int(np.ceil(1.0 / h)), 1)
    s = (np.arange(n) + 0.5) / n
    q = (profile.transform(s) - 1.0) / s
    if d == 2:
        return float(np.sqrt(2.0 * np.sum(q**2) / n))
    return float(np.sqrt(2 * np.pi * np.sum(q**2 * s) / n))


def check_condition_infrared(species: IonSpecies, cell: Cell, levels: int = 4) -> InfraredReport:
    """Square-integrability of the neutralized transverse transform near 0.

    The quotient is sampled at spacings pi/L / 2^k for successive k, starting
    at the first level finer than 1/8; it passes when every refinement
    changes the norm by a factor <= 1.1 and the first moment is finite.
    """
    if cell.d == 3:
        return InfraredReport(True, True, float("nan"), True, 0.0, [], [], "vacuous (d=3)")
    prof = species.profile
    if isinstance(prof, Uniform):
        return InfraredReport(False, False, float("inf"), False, float("inf"), [], [],
                              "uniform background is not integrable on an unbounded cell")
    moment, finite = _first_moment(prof, cell.d)
    h0 = np.pi / max(cell.trunc)
    k0 = 0
    while h0 / 2**k0 > 0.125:
        k0 += 1
    norms = [species.Z * _quotient_norm(prof, cell.d, h0 / 2 ** (k0 + j)) for j in range(levels)]
    ratios = [b / a if a > 0 else (1.0 if b == 0 else float("inf")) for a, b in zip(norms, norms[1:])]
    stable = all(r <= RATIO_LIMIT for r in ratios) and np.isfinite(norms[-1])
    label = "Condition II" if cell.d == 2 else "Condition III"
    return InfraredReport(bool(stable and finite), False, moment, finite, norms[-1], norms, ratios, label)
