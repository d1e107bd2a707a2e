"""Command-line entry point: ``semistokes run | study | verify``.

Exit codes: 0 success, 1 configuration error, 2 convergence failure,
3 invariant violation, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time

import numpy as np

from . import builtins
from .config import RunConfig, read_config
from .diagnostics import (energy_ledger, flux_pairing, time_continuity_bound,
                          upwind_diffusion_bound)
from .errors import ConfigError, ConvergenceError, InvariantViolation, PreconditionError
from .io import read_force_csv, read_mesh, write_csv, write_manifest, write_vtk
from .mesh import MeshError, unit_square
from .stepper import SimConfig, run
from .verify import SUITES, run_suites

EXIT_OK, EXIT_CONFIG, EXIT_CONVERGENCE, EXIT_INVARIANT, EXIT_IO = 0, 1, 2, 3, 4

STEP_COLUMNS = ["m", "t", "picard_iterations", "residual", "mass", "min_density",
                "positivity_bound", "continuity_residual", "momentum_residual",
                "pairing_residual", "vorticity_residual", "continuation"]


def _phi(x, y):
    # smooth test function for the density diagnostics
    return np.sin(math.pi * x) * y


def _load_run_config(args, default_coupling=None) -> RunConfig:
    if args.config:
        return read_config(args.config, args.couple, default_coupling)
    couple = args.couple if args.couple is not None else default_coupling
    if couple is None:
        return RunConfig(sim=SimConfig())
    return RunConfig(sim=SimConfig(dt=None, c_coupling=couple))


def _mesh_from(args, rc, default_K=16):
    if getattr(args, "mesh", None):
        return read_mesh(args.mesh), {"mesh_file": os.path.basename(args.mesh)}
    if getattr(args, "unit_square", None):
        return unit_square(args.unit_square), {"unit_square": args.unit_square}
    if rc.mesh:
        return read_mesh(rc.mesh), {"mesh_file": os.path.basename(rc.mesh)}
    K = rc.unit_square or default_K
    return unit_square(K), {"unit_square": K}


def _force(rc, mesh, sim):
    if rc.force.endswith(".csv"):
        _, M = sim.time_grid(mesh)
        return read_force_csv(rc.force, mesh, M)
    return builtins.force(rc.force)


def _check_run(traj):
    """Invariants every converged run must satisfy."""
    m0 = traj.states[0].rho.integral()
    for r in traj.reports:
        if abs(r.mass - m0) > 1e-12 * m0:
            raise InvariantViolation(f"step {r.m}: mass drift {abs(r.mass - m0) / m0:.3e}")
        if not r.min_density >= r.positivity_bound:
            raise InvariantViolation(f"step {r.m}: positivity bound violated")
        if max(r.pairing_residual, r.vorticity_residual) > 1e-9:
            raise InvariantViolation(f"step {r.m}: momentum identity residual too large")


def cmd_run(args):
    rc = _load_run_config(args)
    mesh, mesh_src = _mesh_from(args, rc)
    sim = rc.sim
    dt, M = sim.time_grid(mesh)
    traj = run(mesh, builtins.density(rc.rho0), _force(rc, mesh, sim), sim)
    _check_run(traj)
    os.makedirs(args.out, exist_ok=True)
    files = []
    steps = os.path.join(args.out, "steps.csv")
    write_csv([{k: r.as_dict()[k] for k in STEP_COLUMNS} for r in traj.reports], steps, STEP_COLUMNS)
    files.append(steps)
    ledger = energy_ledger(traj)
    energy = os.path.join(args.out, "energy.csv")
    rows = ledger.rows()
    write_csv(rows, energy, list(rows[0]) if rows else ["m"])
    files.append(energy)
    ud, ub = upwind_diffusion_bound(traj, _phi)
    tc, tb = time_continuity_bound(traj, _phi)
    diag_rows = [
        {"diagnostic": "flux_pairing", "value": flux_pairing(traj), "reference": None},
        {"diagnostic": "upwind_diffusion", "value": ud, "reference": ub},
        {"diagnostic": "time_continuity", "value": tc, "reference": tb},
        {"diagnostic": "energy_balance_max_residual",
         "value": float(ledger.balance_residual().max()), "reference": 1e-9},
    ]
    diag = os.path.join(args.out, "diagnostics.csv")
    write_csv(diag_rows, diag, ["diagnostic", "value", "reference"])
    files.append(diag)
    for state in (traj.states[0], traj.states[-1]):
        path = os.path.join(args.out, f"state_{state.m:05d}.vtk")
        write_vtk(state, path, sim.params)
        files.append(path)
    payload = {
        "command": "run",
        "config": rc.echo,
        "rho0": rc.rho0,
        "force": rc.force if not rc.force.endswith(".csv") else os.path.basename(rc.force),
        "mesh": {**mesh.summary(), **mesh_src},
        "time_grid": {"dt": dt, "M": M, "T": sim.T, "dt_over_h": dt / mesh.h},
        "steps": [r.as_dict() for r in traj.reports],
        "diagnostics": diag_rows,
        "status": "ok",
    }
    write_manifest(args.out, payload, files)
    print(f"run: {M} steps, dt={dt:.6g} (dt/h={dt / mesh.h:.4g}), mass={traj.reports[-1].mass!r}, "
          f"min rho={min(r.min_density for r in traj.reports):.6g}")
    print(f"wrote {len(files) + 1} files to {args.out}")
    return EXIT_OK


def cmd_study(args):
    if args.refinements < 1:
        raise ConfigError("--refinements must be at least 1")
    rc = _load_run_config(args, default_coupling=builtins.STANDARD_COUPLING)
    K0 = args.unit_square or rc.unit_square or 8
    rows = []
    for j in range(args.refinements + 1):
        mesh = unit_square(K0 * 2**j)
        traj = run(mesh, builtins.density(rc.rho0), _force(rc, mesh, rc.sim), rc.sim)
        _check_run(traj)
        led = energy_ledger(traj)
        rows.append({"K": K0 * 2**j, "h": mesh.h, "dt": traj.dt, "M": traj.M,
                     "flux_pairing": flux_pairing(traj),
                     "energy_balance_max": float(led.balance_residual().max()),
                     "min_density": min(r.min_density for r in traj.reports)})
    table = []
    for j in range(args.refinements):
        r = dict(rows[j])
        r["cauchy_diff"] = abs(rows[j]["flux_pairing"] - rows[j + 1]["flux_pairing"])
        table.append(r)
    for j, r in enumerate(table):
        prev = table[j - 1]["cauchy_diff"] if j > 0 else float("nan")
        r["diff_ratio"] = r["cauchy_diff"] / prev if j > 0 else float("nan")
        r["order"] = -math.log2(r["diff_ratio"]) if j > 0 and r["diff_ratio"] > 0 else float("nan")
    cols = ["K", "h", "dt", "M", "flux_pairing", "cauchy_diff", "diff_ratio", "order",
            "energy_balance_max", "min_density"]
    print(" ".join(f"{c:>14}" for c in cols))
    for r in table:
        print(" ".join(f"{r[c]:>14.6g}" if isinstance(r[c], float) else f"{r[c]:>14}" for c in cols))
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        path = os.path.join(args.out, "study.csv")
        write_csv(table, path, cols)
        write_manifest(args.out, {"command": "study", "config": rc.echo, "K0": K0,
                                  "refinements": args.refinements, "status": "ok"}, [path])
    return EXIT_OK


def cmd_verify(args):
    names = [args.suite]
    t0 = time.perf_counter()
    checks = []

    def report(c):
        checks.append(c)
        print(c.line(), flush=True)

    try:
        run_suites(names, stop_on_failure=True, report=report)
    finally:
        if args.out:
            os.makedirs(args.out, exist_ok=True)
            path = os.path.join(args.out, "verify.csv")
            write_csv([c.as_row() for c in checks], path,
                      ["suite", "name", "value", "relation", "limit", "passed"])
    print(f"verify {args.suite}: {len(checks)} checks passed in {time.perf_counter() - t0:.1f} s")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="semistokes", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default):
        sp.add_argument("--config", help="key = value configuration file")
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--mesh", help="mesh file (DIM/NV/NC text format)")
        g.add_argument("--unit-square", type=int, metavar="K", help="structured K x K mesh")
        sp.add_argument("--couple", type=float, metavar="c", help="set dt = c h")
        sp.add_argument("--out", default=out_default, help="output directory")

    r = sub.add_parser("run", help="run one simulation")
    common(r, "out")
    r.set_defaults(func=cmd_run)
    s = sub.add_parser("study", help="refinement study of the effective-flux pairing")
    common(s, None)
    s.add_argument("--refinements", type=int, default=3)
    s.set_defaults(func=cmd_study)
    v = sub.add_parser("verify", help="run the property suites")
    v.add_argument("--suite", choices=["all", *SUITES], default="all")
    v.add_argument("--out", default=None)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, PreconditionError, MeshError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"convergence failure: {exc} (last residual {exc.residual:.3e})", file=sys.stderr)
        return EXIT_CONVERGENCE
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
