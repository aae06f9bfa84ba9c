"""Run configuration: a single JSON document, strictly keyed.

Layout::

    {
      "problem": {"d": 3, "periods": [[1,0,0], ...], "trunc": [], "grid": [16,16,16],
                  "species": [{"Z": 1, "sigma": 0.25, "position": [0.5,0.5,0.5]}],
                  "units": {"hbar": 1, "mass_e": 1, "charge_e": -1}},
      "solver": {"grad_tol": 1e-8, ...},
      "outputs": {"result": "result.json", "trace": "trace.csv",
                  "snapshots": "fields", "emit_plot_data": false}
    }

A species gives exactly one profile: ``sigma`` (Gaussian), ``table`` (path to a
two-column radius/density file, relative to the config file) or
``"profile": "uniform"`` (jellium background).  Unknown keys anywhere are errors.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, fields
from pathlib import Path

from .densities import Gaussian, IonSpecies, PhysicalUnits, Uniform, check_resolvable, load_tabulated
from .errors import ValidationError
from .groundstate import Problem
from .minimizer import SolverConfig

_PROBLEM_KEYS = {"d", "periods", "trunc", "grid", "species", "units"}
_SPECIES_KEYS = {"Z", "sigma", "table", "profile", "position", "mass"}
_UNIT_KEYS = {"hbar", "mass_e", "charge_e"}
_OUTPUT_KEYS = {"result", "trace", "snapshots", "emit_plot_data"}
_TOP_KEYS = {"problem", "solver", "outputs"}


@dataclass(frozen=True)
class Outputs:
    result: str = "result.json"
    trace: str = "trace.csv"
    snapshots: str | None = "fields"
    emit_plot_data: bool = False


@dataclass(frozen=True)
class RunConfig:
    problem: Problem
    solver: SolverConfig
    outputs: Outputs
    source: Path | None = None


def _strict(obj, allowed, where):
    if not isinstance(obj, dict):
        raise ValidationError(f"{where}: expected an object")
    extra = sorted(set(obj) - set(allowed))
    if extra:
        raise ValidationError(f"{where}: unknown key(s) {', '.join(extra)}")


def _species(spec: dict, i: int, base: Path) -> IonSpecies:
    where = f"problem.species[{i}]"
    _strict(spec, _SPECIES_KEYS, where)
    chosen = [k for k in ("sigma", "table", "profile") if k in spec]
    if len(chosen) != 1:
        raise ValidationError(f"{where}: give exactly one of sigma, table, profile")
    if "sigma" in spec:
        prof = Gaussian(float(spec["sigma"]))
    elif "table" in spec:
        path = Path(spec["table"])
        prof = load_tabulated(path if path.is_absolute() else base / path)
    elif spec["profile"] == "uniform":
        prof = Uniform()
    else:
        raise ValidationError(f"{where}: profile must be 'uniform' (use sigma or table otherwise)")
    if "Z" not in spec:
        raise ValidationError(f"{where}: missing Z")
    if not float(spec["Z"]) > 0:
        raise ValidationError(f"{where}: Z = {spec['Z']} violates neutrality "
                              "(electron charge must balance a positive ion charge)")
    return IonSpecies(float(spec["Z"]), prof, tuple(spec.get("position", (0.0, 0.0, 0.0))),
                      float(spec.get("mass", 1836.0)))


def parse_problem(obj: dict, base: Path = Path(".")) -> Problem:
    _strict(obj, _PROBLEM_KEYS, "problem")
    for key in ("d", "periods", "grid", "species"):
        if key not in obj:
            raise ValidationError(f"problem: missing {key}")
    units = obj.get("units", {})
    _strict(units, _UNIT_KEYS, "problem.units")
    species = obj["species"]
    if not isinstance(species, list):
        raise ValidationError("problem.species: expected a list")
    if not species:
        raise ValidationError("problem.species is empty: Z = 0 leaves nothing for the electrons "
                              "to neutralize (neutrality needs Z > 0)")
    p = Problem(
        d=int(obj["d"]),
        periods=tuple(tuple(float(v) for v in row) for row in obj["periods"]),
        trunc=tuple(float(v) for v in obj.get("trunc", ())),
        grid=tuple(int(n) for n in obj["grid"]),
        species=tuple(_species(s, i, base) for i, s in enumerate(species)),
        units=PhysicalUnits(**{k: float(v) for k, v in units.items()}),
    )
    # geometry and resolution errors surface before any compute
    cell = p.cell()
    for s in p.species:
        check_resolvable(s, cell)
    return p


def parse_solver(obj: dict) -> SolverConfig:
    names = {f.name: f.type for f in fields(SolverConfig)}
    _strict(obj, names, "solver")
    kw = {}
    for k, v in obj.items():
        default = getattr(SolverConfig, k)
        if k == "seed":
            if v is not None and (isinstance(v, bool) or not isinstance(v, int)):
                raise ValidationError("solver.seed: expected an integer or null")
            kw[k] = v
            continue
        if isinstance(default, bool) and not isinstance(v, bool):
            raise ValidationError(f"solver.{k}: expected true or false")
        if isinstance(v, (bool, str)) != isinstance(default, (bool, str)):
            raise ValidationError(f"solver.{k}: expected a number")
        kw[k] = type(default)(v)
    return SolverConfig(**kw)


def parse_outputs(obj: dict) -> Outputs:
    _strict(obj, _OUTPUT_KEYS, "outputs")
    return Outputs(**obj)


def parse_config(obj: dict, base: Path = Path(".")) -> RunConfig:
    _strict(obj, _TOP_KEYS, "config")
    if "problem" not in obj:
        raise ValidationError("config: missing problem")
    return RunConfig(parse_problem(obj["problem"], base), parse_solver(obj.get("solver", {})),
                     parse_outputs(obj.get("outputs", {})))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except OSError as exc:
        raise ValidationError(f"cannot read config {path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON ({exc})") from exc
    cfg = parse_config(obj, path.parent)
    return RunConfig(cfg.problem, cfg.solver, cfg.outputs, path)
