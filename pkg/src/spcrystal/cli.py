"""Command line front end: ``spcrystal {solve,gradcheck,study,check}``.

Exit codes: 0 ok, 1 invalid input, 2 solver did not converge, 3 a property
check failed.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import sys
from pathlib import Path

import numpy as np
import scipy.fft

from . import __version__
from .config import RunConfig, load_config
from .densities import Gaussian, TabulatedRadial, Uniform, check_condition_infrared, check_resolvable
from .energy import gateaux_table, loglog_slope, make_configuration, random_tangent
from .errors import CheckFailed, LineSearchStalled, NotConverged, SPCrystalError, ValidationError
from .groundstate import (
    growth_diagnostic,
    save_result,
    solve,
    successive_differences,
    truncation_study,
)
from .io import atomic_write_bytes
from .minimizer import initial_guess

log = logging.getLogger("spcrystal")

EXIT_OK, EXIT_INVALID, EXIT_NOT_CONVERGED, EXIT_CHECK = 0, 1, 2, 3
SLOPE_TOL = 0.1
DEFAULT_EPS = (1e-1, 1e-2, 1e-3, 1e-4)


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    atomic_write_bytes(path, buf.getvalue().encode())


def _outdir(args) -> Path:
    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _say(args, msg: str) -> None:
    if not args.quiet:
        print(msg)


# ---------------------------------------------------------------- solve

def _plot_data(result, out: Path) -> None:
    cell = result.cell
    x = cell.positions
    # line cut through the first ion along the last axis
    frac = np.asarray(result.config.ions[0].position) % 1.0
    i = int(round(frac[0] * cell.grid[0])) % cell.grid[0]
    j = int(round(frac[1] * cell.grid[1])) % cell.grid[1]
    rows = [(repr(float(x[i, j, k, 2])), repr(float(result.phi0.values[i, j, k].real)),
             repr(float(abs(result.psi0.values[i, j, k]) ** 2))) for k in range(cell.grid[2])]
    _write_csv(out / "line_x3.csv", ["x3", "phi0", "psi0_sq"], rows)
    if cell.d < 3:
        g = growth_diagnostic(result)
        _write_csv(out / "growth.csv", ["r", "max_abs_phi0"],
                   [(repr(float(r)), repr(float(m))) for r, m in zip(g.radii, g.max_phi)])


def cmd_solve(args, run: RunConfig) -> int:
    problem, solver = run.problem, run.solver
    if problem.d < 3:
        rep = check_condition_infrared(problem.species[0], problem.cell())
        if not rep.passed:
            raise CheckFailed(f"{rep.condition} fails for this ion profile; not solving")
    out = _outdir(args)
    result = solve(problem, solver, args.seed)
    snaps = out / run.outputs.snapshots if run.outputs.snapshots else None
    rec = save_result(result, out / run.outputs.result, snaps)
    result.trace.to_csv(out / run.outputs.trace)
    if run.outputs.emit_plot_data:
        _plot_data(result, out)
    r = rec["residuals"]
    _say(args, f"U0 = {rec['U0']:.15g}  omega0 = {rec['omega0']['real']:.15g}"
               f"{rec['omega0']['imag']:+.3g}i  iterations = {rec['iterations']}")
    _say(args, "residuals: " + "  ".join(f"{k} {v:.3e}" for k, v in r.items()))
    if not result.converged:
        print(f"not converged ({result.trace.reason}); results written to {out}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


# ---------------------------------------------------------------- gradcheck

def cmd_gradcheck(args, run: RunConfig) -> int:
    eps = sorted(set(float(e) for e in (args.eps or DEFAULT_EPS)), reverse=True)
    if len(eps) < 3 or any(not e > 0 for e in eps):
        raise ValidationError("gradcheck needs at least 3 distinct positive eps values for the regression")
    problem = run.problem
    seed = args.seed if args.seed is not None else (run.solver.seed or 0)
    cfg = initial_guess(make_configuration(problem.cell(), problem.species, units=problem.units))
    tau = random_tangent(cfg.psi, np.random.default_rng(seed))
    rows = gateaux_table(cfg, tau, eps)
    out = _outdir(args)
    _write_csv(out / "gradcheck.csv", ["eps", "fd", "analytic", "abs_diff", "remainder"],
               [(repr(r.eps), repr(r.fd), repr(r.analytic), repr(r.diff), repr(r.remainder)) for r in rows])
    # a derivative at roundoff level (e.g. jellium at its minimum) makes the comparison vacuous
    D = rows[0].analytic
    scale = max(1.0, abs(cfg.Z))
    ok = True
    if abs(D) <= 1e-12 * scale:
        _say(args, f"directional derivative {D:.3e} is zero to roundoff: difference check vacuous")
    else:
        s1 = loglog_slope([r.eps for r in rows], [max(r.diff, 1e-300) for r in rows])
        good = abs(s1 - 1.0) <= SLOPE_TOL
        ok &= good
        _say(args, f"finite-difference error slope {s1:.3f} (want 1.0 +- {SLOPE_TOL}): {'pass' if good else 'FAIL'}")
    rem = [r.remainder for r in rows]
    if max(rem) <= 1e-14 * scale:
        _say(args, "remainder vanishes identically: slope check vacuous")
    else:
        s2 = loglog_slope(eps, rem)
        good = abs(s2 - 2.0) <= SLOPE_TOL
        ok &= good
        _say(args, f"remainder slope {s2:.3f} (want 2.0 +- {SLOPE_TOL}): {'pass' if good else 'FAIL'}")
    return EXIT_OK if ok else EXIT_CHECK


# ---------------------------------------------------------------- study

def cmd_study(args, run: RunConfig) -> int:
    problem = run.problem
    if problem.d == 3:
        raise ValidationError("study needs a truncated cell (d = 1 or 2)")
    Ls = args.L or [problem.trunc[0] * f for f in (1, 2, 4)]
    rows = truncation_study(problem, Ls, run.solver, workers=max(1, args.threads or 1))
    diffs = [None] + successive_differences(rows)
    out = _outdir(args)
    fmt = lambda v: "" if v is None else repr(float(v))  # noqa: E731
    _write_csv(out / "study.csv", ["L", "U0", "omega0", "exponent", "converged", "dU0", "error"],
               [(fmt(r.L), fmt(r.U0), fmt(r.omega0), fmt(r.exponent), int(r.converged), fmt(d), r.error)
                for r, d in zip(rows, diffs)])
    for r, d in zip(rows, diffs):
        _say(args, f"L = {r.L:<8g} U0 = {fmt(r.U0):<22} exponent = {fmt(r.exponent):<22} "
                   f"dU0 = {fmt(d)}{'' if r.converged else '  NOT CONVERGED ' + r.error}")
    return EXIT_OK if all(r.converged for r in rows) else EXIT_NOT_CONVERGED


# ---------------------------------------------------------------- check

def _integrability(profile, d: int) -> tuple[bool, str]:
    if isinstance(profile, Gaussian):
        return True, "Gaussian, unit mass"
    if isinstance(profile, TabulatedRadial):
        return bool(np.isfinite(profile.mass) and profile.mass > 0), f"tabulated, raw mass {profile.mass:.6g}"
    if isinstance(profile, Uniform):
        if d == 3:
            return True, "uniform background on a bounded cell"
        return False, "uniform background has infinite mass on an unbounded cell"
    return False, f"unknown profile {type(profile).__name__}"


def cmd_check(args, run: RunConfig) -> int:
    problem = run.problem
    cell = problem.cell()
    lines = [("geometry", True, f"d={cell.d} grid={cell.grid} volume={cell.volume:.6g}")]
    for n, s in enumerate(problem.species):
        try:
            check_resolvable(s, cell)
            lines.append((f"resolution[{n}]", True, "profile resolved by the grid"))
        except ValidationError as exc:
            lines.append((f"resolution[{n}]", False, str(exc)))
        ok, why = _integrability(s.profile, cell.d)
        lines.append((f"Condition I[{n}]", ok, why))
        rep = check_condition_infrared(s, cell)
        if rep.vacuous:
            lines.append((f"Condition II/III[{n}]", True, "vacuous for d = 3"))
        else:
            ratios = ", ".join(f"{r:.4f}" for r in rep.ratios)
            lines.append((f"{rep.condition}[{n}]", rep.passed,
                          f"first moment {rep.moment:.6g} ({'finite' if rep.moment_finite else 'divergent'}); "
                          f"quotient norm {rep.quotient_norm:.6g}; refinement ratios [{ratios}]"))
    for name, ok, why in lines:
        _say(args, f"{'PASS' if ok else 'FAIL'}  {name}: {why}")
    return EXIT_OK if all(ok for _, ok, _ in lines) else EXIT_CHECK


# ---------------------------------------------------------------- entry point

COMMANDS = {"solve": cmd_solve, "gradcheck": cmd_gradcheck, "study": cmd_study, "check": cmd_check}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, help="JSON run configuration")
    common.add_argument("--out", default=None, help="output directory (default: current directory)")
    common.add_argument("--seed", type=int, default=None, help="seed for the start (solve) or tangent (gradcheck)")
    common.add_argument("--threads", type=int, default=None, help="FFT worker threads")
    common.add_argument("--quiet", action="store_true", help="only errors on stderr")

    ap = argparse.ArgumentParser(prog="spcrystal", description="Schroedinger-Poisson crystal ground states")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="minimize the energy and write the result")
    g = sub.add_parser("gradcheck", parents=[common], help="chart finite differences and remainder slopes")
    g.add_argument("--eps", type=float, nargs="+", default=None, help="step sizes (>= 3)")
    s = sub.add_parser("study", parents=[common], help="truncation-length sweep (d = 1, 2)")
    s.add_argument("--L", type=float, nargs="+", default=None, help="half-lengths of the truncated axes")
    sub.add_parser("check", parents=[common], help="report the profile and cell conditions")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_INVALID
    try:
        run = load_config(args.config)
    except (ValidationError, ValueError, TypeError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        with scipy.fft.set_workers(args.threads or 1):
            return COMMANDS[args.command](args, run)
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK if args.command == "check" else EXIT_INVALID
    except (NotConverged, LineSearchStalled) as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except ValidationError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SPCrystalError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
