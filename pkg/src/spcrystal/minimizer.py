"""Constrained minimization of the cell energy on the sphere ||psi||^2 = Z.

``minimize`` is a preconditioned projected-gradient descent with Armijo
backtracking and normalization as the retraction.  ``scf_oracle`` reaches
the same state by an unrelated route (damped potential mixing plus a
shifted inverse-power eigensolver) and exists to cross-check it.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .energy import (
    Configuration,
    configuration_difference,
    energy_arrays,
    energy_increment,
    grad_ions_arrays,
    hamiltonian_apply,
    potential_arrays,
)
from .errors import LineSearchStalled, NotConverged, ValidationError
from .spectral import analyze, inner, norm2, synthesize

log = logging.getLogger(__name__)

MIN_STEP = 1e-14
STAGNATION_WINDOW = 200


@dataclass
class SolverConfig:
    max_iters: int = 100_000
    grad_tol: float = 1e-8
    energy_tol: float = 1e-12
    step0: float = 0.5
    backtrack: float = 0.5
    ion_relaxation: bool = False
    seed: int | None = None
    scf_damping: float = 0.5
    armijo: float = 1e-4
    precond_shift: float = 1.0
    scf_max_iters: int = 2000
    eig_tol: float = 1e-11

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValidationError("max_iters must be >= 1")
        for name in ("grad_tol", "energy_tol", "step0", "precond_shift", "eig_tol"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be > 0")
        if not 0 < self.backtrack < 1:
            raise ValidationError("backtrack must lie in (0, 1)")
        if not 0 < self.scf_damping <= 1:
            raise ValidationError("scf_damping must lie in (0, 1]")


@dataclass
class IterationRecord:
    iter: int
    U: float
    I1: float
    I2: float
    gnorm: float
    fmax: float
    step: float


@dataclass
class IterationTrace:
    records: list[IterationRecord] = field(default_factory=list)
    converged: bool = False
    reason: str = ""
    final_step: float = float("nan")

    def append(self, *args) -> None:
        self.records.append(IterationRecord(*args))

    def extend(self, other: "IterationTrace") -> None:
        offset = self.records[-1].iter + 1 if self.records else 0
        for r in other.records:
            self.records.append(IterationRecord(**{**asdict(r), "iter": r.iter + offset}))

    @property
    def energies(self) -> np.ndarray:
        return np.array([r.U for r in self.records])

    def __len__(self) -> int:
        return len(self.records)

    def to_csv(self, path) -> None:
        path = Path(path)
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "U", "I1", "I2", "gnorm", "fmax", "step"])
            for r in self.records:
                w.writerow([r.iter, repr(r.U), repr(r.I1), repr(r.I2), repr(r.gnorm), repr(r.fmax), repr(r.step)])
        tmp.replace(path)


# ---------------------------------------------------------------- helpers

def fix_gauge(cell, psi: np.ndarray) -> np.ndarray:
    """Rotate the global phase so that <psi, 1> is real and nonnegative."""
    s = psi.sum()
    if abs(s) > 1e-14 * np.sqrt(cell.npoints) * np.sqrt(np.vdot(psi, psi).real):
        psi = psi * (np.conj(s) / abs(s))
    return psi


def _preconditioner(config: Configuration, shift: float) -> np.ndarray:
    return 1.0 / (shift + config.units.kinetic * config.cell.k2)


def projected_gradient(cell, psi, hpsi, Z) -> tuple[np.ndarray, float]:
    """Tangent part of the gradient 2 H psi and the Rayleigh multiplier."""
    g = 2.0 * hpsi
    lam2 = inner(cell, psi, g).real / Z
    return g - lam2 * psi, 0.5 * lam2


def _retraction_increment(cell, psi, d, t, Z) -> np.ndarray:
    """sqrt(Z) (psi + t d)/||psi + t d|| - psi, without cancellation."""
    q = (2 * t * inner(cell, psi, d).real + t * t * norm2(cell, d)) / Z
    h = -0.5 * np.log1p(q)
    return np.expm1(h) * psi + (np.exp(h) * t) * d


def initial_guess(config: Configuration, seed: int | None = None) -> Configuration:
    """Positive start sqrt(rho+/|e|), or seeded band-limited noise around it."""
    cell = config.cell
    base = np.sqrt(np.clip(config.rho_plus / abs(config.units.charge_e), 0, None)).astype(complex)
    if seed is not None:
        rng = np.random.default_rng(seed)
        C = rng.standard_normal(cell.grid) + 1j * rng.standard_normal(cell.grid)
        C *= np.exp(-cell.k2 / (2.0 * (2 * np.pi) ** 2))
        noise = synthesize(C)
        noise *= np.sqrt(norm2(cell, base) / max(norm2(cell, noise), 1e-300))
        base = base + 0.3 * noise
    if norm2(cell, base) == 0:
        base = np.ones(cell.grid, dtype=complex)
    base *= np.sqrt(config.Z / norm2(cell, base))
    return config.with_psi(base)


# ---------------------------------------------------------------- projected gradient

def minimize(initial: Configuration, solver: SolverConfig = SolverConfig()) -> tuple[Configuration, IterationTrace]:
    """Minimize U over the sphere at fixed ions (or with ion relaxation if enabled).

    Returns the final configuration and its trace; ``trace.converged`` is
    False when the iteration budget ran out.
    """
    if solver.ion_relaxation and initial.cell.d == 3 and len(initial.ions) > 1:
        return relax_ions(initial, solver)
    return _minimize_psi(initial, solver)


def _minimize_psi(initial: Configuration, solver: SolverConfig, it0: int = 0, step: float | None = None):
    cfg = initial
    cell, units, Z = cfg.cell, cfg.units, cfg.Z
    rho_plus = cfg.rho_plus
    scale = cfg.charge_scale
    P = _preconditioner(cfg, solver.precond_shift)
    psi = cfg.psi.values.astype(complex)
    psi = psi * np.sqrt(Z / norm2(cell, psi))
    e = energy_arrays(cell, psi, rho_plus, units, scale)
    U = e.total
    trace = IterationTrace()
    step = solver.step0 if step is None else step
    want_forces = solver.ion_relaxation and cell.d == 3
    last_step = 0.0
    best, stalled = np.inf, 0

    for it in range(solver.max_iters + 1):
        phi, _ = potential_arrays(cell, psi, rho_plus, units, scale)
        gperp, _ = projected_gradient(cell, psi, hamiltonian_apply(cell, psi, phi, units), Z)
        gnorm = float(np.sqrt(norm2(cell, gperp)))
        fmax = 0.0
        if want_forces:
            fmax = float(np.max(np.linalg.norm(grad_ions_arrays(cell, cfg.ions, phi, units.charge_e), axis=1)))
        trace.append(it0 + it, U, e.kinetic, e.coulomb, gnorm, fmax, last_step)
        if gnorm <= solver.grad_tol:
            trace.converged, trace.reason = True, "gradient"
            break
        if it == solver.max_iters:
            trace.reason = "max_iters"
            break

        d = -synthesize(P * analyze(gperp))
        d -= (inner(cell, psi, d).real / Z) * psi
        slope = inner(cell, gperp, d).real
        if slope >= 0:
            # preconditioned direction lost descent to roundoff
            d, slope = -gperp, -gnorm**2

        t = step
        while True:
            delta = _retraction_increment(cell, psi, d, t, Z)
            dU = energy_increment(cell, psi, delta, rho_plus, units)
            if dU <= solver.armijo * t * slope and dU <= 0:
                break
            t *= solver.backtrack
            if t < MIN_STEP:
                raise LineSearchStalled(f"no decrease at step {t:.1e} (iteration {it}, gnorm {gnorm:.3e})")
        step = min(t / solver.backtrack, solver.step0) if t == step else t
        last_step = t
        psi = psi + delta
        psi *= np.sqrt(Z / norm2(cell, psi))
        Uold, U = U, U + dU
        e = energy_arrays(cell, psi, rho_plus, units, scale)
        # stagnation: negligible energy change while the gradient stops improving
        if abs(dU) <= solver.energy_tol * abs(Uold) and gnorm >= best:
            stalled += 1
            if stalled >= STAGNATION_WINDOW:
                trace.reason = "stagnated"
                break
        else:
            stalled = 0
        best = min(best, gnorm)

    psi = fix_gauge(cell, psi)
    psi *= np.sqrt(Z / norm2(cell, psi))
    trace.final_step = step
    return cfg.with_psi(psi), trace


# ---------------------------------------------------------------- ions

def relax_ions(config: Configuration, solver: SolverConfig = SolverConfig(), max_outer: int = 500):
    """Alternate electron minimization with Armijo steps on the ion positions.

    Stops when the largest ion gradient is below ``grad_tol``.  For d < 3 the
    single ion's position is a translation gauge and is left untouched.
    """
    if config.cell.d < 3 or len(config.ions) == 1:
        inner_solver = SolverConfig(**{**asdict(solver), "ion_relaxation": False})
        return _minimize_psi(config, inner_solver)
    cell, units = config.cell, config.units
    box = cell.box
    trace = IterationTrace()
    cfg, tr = _minimize_psi(config, solver)
    trace.extend(tr)
    step_psi = tr.final_step
    t_ion = 0.1
    for outer in range(max_outer):
        phi = potential_arrays(cell, cfg.psi.values, cfg.rho_plus, units, cfg.charge_scale)[0]
        G = grad_ions_arrays(cell, cfg.ions, phi, units.charge_e)
        fmax = float(np.max(np.linalg.norm(G, axis=1)))
        if fmax <= solver.grad_tol and tr.converged:
            trace.converged, trace.reason = True, "forces"
            break
        xs = cfg.positions @ box
        slope = -float(np.sum(G * G))
        t = t_ion
        while True:
            frac = (xs - t * G) @ np.linalg.inv(box)
            trial = cfg.with_positions(frac)
            dU = configuration_difference(trial, cfg)
            if dU <= solver.armijo * t * slope and dU <= 0:
                break
            t *= solver.backtrack
            if t < MIN_STEP:
                raise LineSearchStalled(f"ion step found no decrease (fmax {fmax:.3e})")
        t_ion = t / solver.backtrack if t == t_ion else t
        cfg, tr = _minimize_psi(trial, solver, step=step_psi)
        step_psi = tr.final_step
        trace.extend(tr)
    else:
        trace.reason = "max_outer"
    return cfg, trace


# ---------------------------------------------------------------- SCF oracle

def _pcg(apply, b, precond, tol, maxiter=500):
    """Preconditioned conjugate gradients for a Hermitian positive operator."""
    x = np.zeros_like(b)
    r = b.copy()
    z = precond(r)
    p = z.copy()
    rz = np.vdot(r, z).real
    bnorm = np.sqrt(np.vdot(b, b).real)
    for _ in range(maxiter):
        Ap = apply(p)
        pAp = np.vdot(p, Ap).real
        if pAp <= 0:
            return x, False
        a = rz / pAp
        x += a * p
        r -= a * Ap
        if np.sqrt(np.vdot(r, r).real) <= tol * bnorm:
            return x, True
        z = precond(r)
        rz_new = np.vdot(r, z).real
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, True


def lowest_eigenpair(cell, phi, units, psi0, Z, tol=1e-11, maxiter=200):
    """Ground state of H = -(hbar^2/2m) Lap + e phi by shifted inverse power iteration.

    The shift starts below min(e phi) - 1 (so H - shift is positive) and then
    tracks the Rayleigh quotient from below by twice the residual.
    """
    kin = units.kinetic * cell.k2
    V = units.charge_e * phi
    floor = float(V.min()) - 1.0
    psi = psi0 * np.sqrt(Z / norm2(cell, psi0))
    lam, res = None, np.inf
    for _ in range(maxiter):
        hpsi = hamiltonian_apply(cell, psi, phi, units)
        lam = inner(cell, psi, hpsi).real / Z
        res = float(np.sqrt(norm2(cell, hpsi - lam * psi) / Z))
        if res <= tol * max(1.0, abs(lam)):
            return lam, psi, res
        shift = max(floor, lam - max(2.0 * res, 1e-3 * (1.0 + abs(lam))))
        pre = 1.0 / (kin + max(float(V.max()) - shift, 1.0))

        def op(v, shift=shift):
            return hamiltonian_apply(cell, v, phi, units) - shift * v

        y, ok = _pcg(op, psi, lambda r: synthesize(pre * analyze(r)), 1e-13)
        if not ok:
            floor = min(floor, shift) - 1.0
            y, _ = _pcg(lambda v: hamiltonian_apply(cell, v, phi, units) - floor * v, psi,
                        lambda r: synthesize(pre * analyze(r)), 1e-13)
        psi = y * np.sqrt(Z / norm2(cell, y))
        psi = fix_gauge(cell, psi)
    return lam, psi, res


@dataclass
class SCFInfo:
    iterations: int
    deltas: list[float]
    eigenvalue: float


def scf_oracle(initial: Configuration, solver: SolverConfig = SolverConfig()) -> tuple[Configuration, SCFInfo]:
    """Damped self-consistent field fixed point.

    phi <- (1 - b) phi + b (-Lap)^-1 rho(psi), psi <- lowest eigenvector of
    -(hbar^2/2m) Lap + e phi normalized to sqrt(Z).  Converged when successive
    electron fields (phase aligned) differ by at most ``grad_tol``.
    """
    cell, units, Z = initial.cell, initial.units, initial.Z
    rho_plus, scale = initial.rho_plus, initial.charge_scale
    psi = initial.psi.values.astype(complex)
    phi = potential_arrays(cell, psi, rho_plus, units, scale)[0]
    beta = solver.scf_damping
    deltas: list[float] = []
    growth = 0
    lam = np.nan
    for it in range(solver.scf_max_iters):
        lam, new, _ = lowest_eigenpair(cell, phi, units, psi, Z, tol=solver.eig_tol)
        ov = inner(cell, psi, new)
        if abs(ov) > 0:
            new = new * (np.conj(ov) / abs(ov))
        delta = float(np.sqrt(norm2(cell, new - psi)))
        deltas.append(delta)
        psi = new
        if delta <= solver.grad_tol:
            psi = fix_gauge(cell, psi)
            return initial.with_psi(psi * np.sqrt(Z / norm2(cell, psi))), SCFInfo(it + 1, deltas, lam)
        growth = growth + 1 if len(deltas) > 1 and delta > deltas[-2] else 0
        if growth >= 25 or not np.isfinite(delta):
            raise NotConverged(f"SCF oscillates (damping {beta}, last change {delta:.3e})")
        phi_out = potential_arrays(cell, psi, rho_plus, units, scale)[0]
        phi = (1.0 - beta) * phi + beta * phi_out
    raise NotConverged(f"SCF did not converge in {solver.scf_max_iters} iterations (last change {deltas[-1]:.3e})")
