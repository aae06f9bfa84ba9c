"""Lattice cells, sampling grids and dual lattices.

A cell is always stored as a 3x3 box whose rows are the lattice periods
followed by ``2L`` edges along truncated (unbounded) axes, so every case
reduces to an anisotropic torus.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import BadGrid, BadTruncation, DegenerateLattice

# coordinate axes left unbounded for each lattice dimension
_TRUNCATED_AXES = {3: (), 2: (2,), 1: (1, 2)}


@dataclass(frozen=True)
class DualMode:
    index: tuple[int, int, int]
    k: tuple[float, float, float]
    k2: float


@dataclass(frozen=True)
class Cell:
    d: int
    periods: tuple[tuple[float, float, float], ...]
    trunc: tuple[float, ...]
    grid: tuple[int, int, int]

    @cached_property
    def box(self) -> np.ndarray:
        """Rows are the edge vectors of the (truncated) cell."""
        box = np.zeros((3, 3))
        box[: self.d] = np.asarray(self.periods, dtype=float)
        for i, (L, ax) in enumerate(zip(self.trunc, _TRUNCATED_AXES[self.d])):
            box[self.d + i, ax] = 2.0 * L
        return box

    @cached_property
    def truncated_axes(self) -> tuple[int, ...]:
        return _TRUNCATED_AXES[self.d]

    @cached_property
    def origin(self) -> np.ndarray:
        o = np.zeros(3)
        for L, ax in zip(self.trunc, self.truncated_axes):
            o[ax] = -L
        return o

    @cached_property
    def dual(self) -> np.ndarray:
        """Rows b_i with b_i . a_j = 2 pi delta_ij (pi/L on truncated axes)."""
        return 2.0 * np.pi * np.linalg.inv(self.box).T

    @property
    def volume(self) -> float:
        return float(abs(np.linalg.det(self.box)))

    @property
    def npoints(self) -> int:
        return int(np.prod(self.grid))

    @property
    def dV(self) -> float:
        return self.volume / self.npoints

    @property
    def spacing(self) -> np.ndarray:
        return np.linalg.norm(self.box, axis=1) / np.asarray(self.grid)

    @cached_property
    def mode_index(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Integer mode indices per axis in FFT wrap-around order."""
        return tuple(np.rint(np.fft.fftfreq(n) * n).astype(int) for n in self.grid)

    @cached_property
    def kvec(self) -> np.ndarray:
        m1, m2, m3 = np.meshgrid(*self.mode_index, indexing="ij")
        m = np.stack([m1, m2, m3], axis=-1).astype(float)
        k = m @ self.dual
        k.setflags(write=False)
        return k

    @cached_property
    def k2(self) -> np.ndarray:
        """|k|^2, symmetrized on Nyquist planes.

        A Nyquist index is its own mirror, so on skewed cells the cross terms
        b_i . b_j involving it would make the symbol differ between m and -m
        and spoil reality; those cross terms are dropped.  Orthogonal cells
        are unaffected.
        """
        G = self.dual @ self.dual.T
        m = np.meshgrid(*self.mode_index, indexing="ij")
        nyq = [idx == -(n // 2) for idx, n in zip(m, self.grid)]
        k2 = np.zeros(self.grid)
        for i in range(3):
            k2 += G[i, i] * m[i].astype(float) ** 2
            for j in range(i + 1, 3):
                keep = ~(nyq[i] | nyq[j])
                k2 += 2.0 * G[i, j] * m[i] * m[j] * keep
        k2.setflags(write=False)
        return k2

    @cached_property
    def nyquist(self) -> np.ndarray:
        """Boolean mask of modes lying on a Nyquist plane of any axis."""
        masks = [idx == -(n // 2) for idx, n in zip(self.mode_index, self.grid)]
        m1, m2, m3 = np.meshgrid(*masks, indexing="ij")
        return m1 | m2 | m3

    @cached_property
    def positions(self) -> np.ndarray:
        """Cartesian sample positions, shape grid + (3,)."""
        s = [np.arange(n) / n for n in self.grid]
        s1, s2, s3 = np.meshgrid(*s, indexing="ij")
        frac = np.stack([s1, s2, s3], axis=-1)
        return self.origin + frac @ self.box

    def to_cartesian(self, frac) -> np.ndarray:
        return self.origin + np.asarray(frac, dtype=float) @ self.box

    def to_fractional(self, x) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.origin) @ np.linalg.inv(self.box)

    def compatible(self, other: "Cell") -> bool:
        return self == other


def make_cell(
    d: int,
    periods: Sequence[Sequence[float]],
    trunc: Sequence[float] = (),
    grid: Sequence[int] = (8, 8, 8),
) -> Cell:
    """Validate the lattice description and build a :class:`Cell`.

    ``periods`` holds ``d`` vectors in R^3; ``trunc`` holds the ``3 - d``
    half-lengths of the unbounded axes.  For ``d < 3`` the periods must lie in
    the coordinate plane/line complementary to the truncated axes.
    """
    if d not in (1, 2, 3):
        raise DegenerateLattice(f"lattice dimension must be 1, 2 or 3, got {d}")
    per = np.asarray(periods, dtype=float)
    if per.shape != (d, 3):
        raise DegenerateLattice(f"expected {d} period vectors in R^3, got shape {per.shape}")
    if not np.all(np.isfinite(per)):
        raise DegenerateLattice("periods must be finite")
    gram = per @ per.T
    scale = max(float(np.max(np.abs(gram))), 1e-300)
    if np.linalg.det(gram) <= 1e-12 * scale**d:
        raise DegenerateLattice("periods are linearly dependent")
    axes = _TRUNCATED_AXES[d]
    if len(trunc) != len(axes):
        raise BadTruncation(f"d={d} needs {len(axes)} truncation half-lengths, got {len(trunc)}")
    for L in trunc:
        if not (np.isfinite(L) and L > 0):
            raise BadTruncation(f"truncation half-length must be > 0, got {L}")
    if axes and np.max(np.abs(per[:, list(axes)])) > 1e-12 * np.sqrt(scale):
        raise DegenerateLattice(
            "periods must be orthogonal to the truncated coordinate axes "
            f"{[a + 1 for a in axes]}"
        )
    grid = tuple(int(n) for n in grid)
    if len(grid) != 3 or any(n < 2 or n % 2 for n in grid):
        raise BadGrid(f"grid counts must be three even integers >= 2, got {grid}")
    return Cell(
        d=d,
        periods=tuple(tuple(float(v) for v in row) for row in per),
        trunc=tuple(float(L) for L in trunc),
        grid=grid,
    )


def unit_torus(grid=(8, 8, 8)) -> Cell:
    return make_cell(3, np.eye(3), (), grid)


def dual_modes(cell: Cell) -> list[DualMode]:
    """All grid modes, row-major over the FFT-ordered indices."""
    i1, i2, i3 = cell.mode_index
    k, k2 = cell.kvec, cell.k2
    out = []
    for a, b, c in np.ndindex(*cell.grid):
        out.append(
            DualMode(
                index=(int(i1[a]), int(i2[b]), int(i3[c])),
                k=tuple(float(v) for v in k[a, b, c]),
                k2=float(k2[a, b, c]),
            )
        )
    return out
