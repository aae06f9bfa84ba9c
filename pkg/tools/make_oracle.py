"""Regenerate the committed SCF-oracle values for a config file.

    python3 tools/make_oracle.py configs/gaussian3d.json tests/data/gaussian3d_oracle.json
"""
import sys

from spcrystal.config import load_config
from spcrystal.energy import make_configuration
from spcrystal.groundstate import assemble
from spcrystal.io import atomic_write_json
from spcrystal.minimizer import SolverConfig, scf_oracle


def main(cfg_path, out_path):
    run = load_config(cfg_path)
    p = run.problem
    cfg = make_configuration(p.cell(), p.species, units=p.units)
    final, info = scf_oracle(cfg, SolverConfig(grad_tol=1e-10))
    res = assemble(final)
    atomic_write_json(out_path, {
        "config": str(cfg_path),
        "method": "damped SCF, shifted inverse power iteration, grad_tol 1e-10",
        "scf_iterations": info.iterations,
        "U0": res.U0,
        "omega0": res.omega0.real,
    })


if __name__ == "__main__":
    main(*sys.argv[1:3])
