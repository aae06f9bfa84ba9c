"""Grid fields, unitary transforms and Fourier multiplier operators.

Sign convention: synthesis carries ``exp(-i k.x)``, analysis ``exp(+i k.x)``.
With symmetric ``1/sqrt(N)`` normalization this makes the analysis step
``ifftn(..., norm="ortho")`` and synthesis ``fftn(..., norm="ortho")``.
Grid integrals use ``dV = volume / N``; the same weight is used for spectral
sums, so Parseval holds with no extra factors.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
import scipy.fft as sfft

from .errors import CellMismatch, NonNeutral
from .geometry import Cell

NEUTRAL_RTOL = 1e-8
REAL_RTOL = 1e-12


# ---------------------------------------------------------------- array kernels

def analyze(values: np.ndarray) -> np.ndarray:
    return sfft.ifftn(values, norm="ortho")


def synthesize(coeffs: np.ndarray) -> np.ndarray:
    return sfft.fftn(coeffs, norm="ortho")


def integral(cell: Cell, values: np.ndarray) -> complex:
    return cell.dV * values.sum()


def inner(cell: Cell, a: np.ndarray, b: np.ndarray) -> complex:
    """Hermitian L^2 product, conjugate-linear in the first slot."""
    return cell.dV * np.vdot(a, b)


def norm2(cell: Cell, a: np.ndarray) -> float:
    return cell.dV * float(np.vdot(a, a).real)


def inv_k2(cell: Cell) -> np.ndarray:
    """1/|k|^2 with the zero mode mapped to 0."""
    k2 = cell.k2
    out = np.zeros_like(k2)
    np.divide(1.0, k2, out=out, where=k2 > 0)
    return out


def check_neutral(cell: Cell, values: np.ndarray, scale: float | None = None) -> float:
    """Return the net charge; raise :class:`NonNeutral` if it exceeds tolerance.

    ``scale`` is the reference charge (``Z|e|``); by default the L^1 norm of
    the density is used.
    """
    q = integral(cell, values)
    if scale is None:
        scale = cell.dV * float(np.abs(values).sum())
    if abs(q) > NEUTRAL_RTOL * scale:
        raise NonNeutral(
            f"net charge per cell {abs(q):.3e} exceeds tolerance {NEUTRAL_RTOL * scale:.3e}"
        )
    return q


# ---------------------------------------------------------------- containers

@dataclass(frozen=True, eq=False)
class ScalarField:
    cell: Cell
    values: np.ndarray
    real: bool = False

    def __post_init__(self):
        vals = np.asarray(self.values)
        if vals.shape != self.cell.grid:
            raise CellMismatch(f"field shape {vals.shape} does not match grid {self.cell.grid}")
        if self.real:
            vals = _as_real(vals)
        else:
            vals = vals.astype(complex, copy=False)
        object.__setattr__(self, "values", vals)

    def norm(self) -> float:
        return float(np.sqrt(norm2(self.cell, self.values)))

    def integral(self) -> complex:
        return integral(self.cell, self.values)

    def inner(self, other: "ScalarField") -> complex:
        _same_cell(self, other)
        return inner(self.cell, self.values, other.values)

    def __add__(self, other):
        _same_cell(self, other)
        return ScalarField(self.cell, self.values + other.values, self.real and other.real)

    def __sub__(self, other):
        _same_cell(self, other)
        return ScalarField(self.cell, self.values - other.values, self.real and other.real)

    def __mul__(self, c):
        return ScalarField(self.cell, self.values * c, self.real and np.isrealobj(c))

    __rmul__ = __mul__


@dataclass(frozen=True, eq=False)
class SpectrumField:
    cell: Cell
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != self.cell.grid:
            raise CellMismatch(f"spectrum shape {c.shape} does not match grid {self.cell.grid}")
        object.__setattr__(self, "coeffs", c)

    def norm(self) -> float:
        return float(np.sqrt(norm2(self.cell, self.coeffs)))

    def at(self, index) -> complex:
        """Coefficient of the mode with integer index ``(m1, m2, m3)``."""
        pos = tuple(int(m) % n for m, n in zip(index, self.cell.grid))
        return complex(self.coeffs[pos])


def _as_real(vals: np.ndarray) -> np.ndarray:
    if np.iscomplexobj(vals):
        scale = float(np.max(np.abs(vals))) if vals.size else 0.0
        if np.max(np.abs(vals.imag), initial=0.0) > max(REAL_RTOL * scale, 1e-300):
            raise ValueError("field flagged real has a non-negligible imaginary part")
        vals = vals.real
    return np.ascontiguousarray(vals, dtype=float)


def _same_cell(a, b) -> None:
    if a.cell != b.cell:
        raise CellMismatch("fields live on different cells")


def field(cell: Cell, fn_or_values, real: bool | None = None) -> ScalarField:
    """Sample ``fn(x1, x2, x3)`` on the grid, or wrap an existing array."""
    if callable(fn_or_values):
        x = cell.positions
        vals = np.asarray(fn_or_values(x[..., 0], x[..., 1], x[..., 2]))
        vals = np.broadcast_to(vals, cell.grid).copy()
    else:
        vals = np.asarray(fn_or_values)
    if real is None:
        real = not np.iscomplexobj(vals)
    return ScalarField(cell, vals, real)


# ---------------------------------------------------------------- operators

def forward(f: ScalarField) -> SpectrumField:
    return SpectrumField(f.cell, analyze(f.values))


def inverse(F: SpectrumField, real: bool = False) -> ScalarField:
    vals = synthesize(F.coeffs)
    return ScalarField(F.cell, vals.real if real else vals, real)


Symbol = Union[np.ndarray, Callable[[Cell], np.ndarray]]


def apply_multiplier(F: SpectrumField, symbol: Symbol) -> SpectrumField:
    sym = symbol(F.cell) if callable(symbol) else np.asarray(symbol)
    return SpectrumField(F.cell, F.coeffs * sym)


def neg_laplacian(f: ScalarField) -> ScalarField:
    out = synthesize(analyze(f.values) * f.cell.k2)
    return ScalarField(f.cell, out.real if f.real else out, f.real)


def inv_laplacian(rho: ScalarField, scale: float | None = None) -> ScalarField:
    """Zero-mean solution of ``-Lap phi = rho`` for a neutral density."""
    check_neutral(rho.cell, rho.values, scale)
    out = synthesize(analyze(rho.values) * inv_k2(rho.cell))
    return ScalarField(rho.cell, out.real if rho.real else out, rho.real)


def lambda_op(rho: ScalarField, scale: float | None = None) -> ScalarField:
    """``(-Lap)^(-1/2)`` with the zero mode removed."""
    check_neutral(rho.cell, rho.values, scale)
    out = synthesize(analyze(rho.values) * np.sqrt(inv_k2(rho.cell)))
    return ScalarField(rho.cell, out.real if rho.real else out, rho.real)


def grad(f: ScalarField) -> tuple[ScalarField, ScalarField, ScalarField]:
    """Spectral gradient; symbol ``-i k_j``, Nyquist planes zeroed."""
    cell = f.cell
    F = analyze(f.values)
    F = np.where(cell.nyquist, 0.0, F)
    comps = []
    for j in range(3):
        out = synthesize(-1j * cell.kvec[..., j] * F)
        comps.append(ScalarField(cell, out.real if f.real else out, f.real))
    return tuple(comps)
