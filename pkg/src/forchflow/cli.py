"""Command-line entry points.

Subcommands::

    forchflow solve-stationary   --config cfg.yaml
    forchflow solve-transient    --config cfg.yaml [--snapshots K]
    forchflow verify-inequalities [--config cfg.yaml] [--samples N] [--seed S]
                                  [--output DIR]
    forchflow convergence        --config cfg.yaml
    forchflow check-grid         [--output DIR] [--seeds N]

Every run validates its configuration before touching the output directory
(no partial outputs on rejection), writes CSV artifacts plus a manifest with
content hashes, and exits 0 on success.  Failures print a machine-readable
JSON record to stderr and exit 2 (configuration) or 3 (numerics).
"""

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from .config import load_config
from .errors import ConfigurationError, NumericalError
from .grid import BoundaryData, CellField, StaggeredGrid, cell_rows, check_adjointness, face_rows
from .inequalities import InequalityReport, SuiteConfig, run_randomized_suite
from .model import ForchheimerPolynomial
from .reporting import Manifest, write_csv
from .stationary import ContinuationRecord, StationarySpec, solve_stationary
from .transient import RunMonitors, TransientSpec, run
from .verification import registry, run_convergence


def _config_digest(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _emit_state(manifest, out, state, prefix):
    h, rows = cell_rows(state.u)
    manifest.add(write_csv(out / f"{prefix}_u.csv", h, rows))
    for a in range(state.u.grid.dim):
        h, rows = face_rows(state.m, a)
        manifest.add(write_csv(out / f"{prefix}_m_axis{a}.csv", h, rows))


def _cmd_solve_stationary(args):
    cfg = load_config(args.config)
    spec = StationarySpec(
        grid=cfg.grid,
        poly=cfg.poly,
        gas=cfg.gas if cfg.gas is not None else cfg.lam,
        f=cfg.source,
        u_b=cfg.boundary if cfg.boundary else 0.0,
        epsilon_schedule=cfg.epsilon_schedule,
        mode=cfg.mode,
    )
    state, records = solve_stationary(spec, cfg.solver)
    out = Path(cfg.output_dir)
    manifest = Manifest(out, {"config_sha256": _config_digest(args.config), "seed": cfg.seed})
    _emit_state(manifest, out, state, "solution")
    manifest.add(
        write_csv(out / "continuation.csv", ContinuationRecord.header(),
                  [r.row() for r in records])
    )
    manifest.write()
    return 0


def _cmd_solve_transient(args):
    cfg = load_config(args.config)
    if cfg.timegrid is None:
        raise ConfigurationError("transient run needs discretization.T and .J")
    if any(
        (v if isinstance(v, (int, float)) else None) not in (0, 0.0, None)
        for v in cfg.boundary.values()
    ) or any(callable(v) for v in cfg.boundary.values()):
        raise ConfigurationError("transient runs support homogeneous boundaries only")
    spec = TransientSpec(
        grid=cfg.grid,
        poly=cfg.poly,
        gas=cfg.gas if cfg.gas is not None else cfg.lam,
        phi=cfg.porosity_field(),
        f=cfg.source,
        u0=cfg.initial_field(),
        timegrid=cfg.timegrid,
        absorb_gas_constant=cfg.absorb_gas_constant,
    )
    states, monitors = run(spec, cfg.solver)
    out = Path(cfg.output_dir)
    manifest = Manifest(out, {"config_sha256": _config_digest(args.config), "seed": cfg.seed})
    n_snap = args.snapshots if args.snapshots is not None else cfg.snapshots
    picks = sorted({0, len(states) - 1} | set(
        int(i) for i in np.linspace(0, len(states) - 1, max(2, n_snap)).round()
    ))
    for j in picks:
        _emit_state(manifest, out, states[j], f"snapshot_{j:05d}")
    manifest.add(write_csv(out / "monitors.csv", RunMonitors.header(), monitors.rows()))
    manifest.add(
        write_csv(
            out / "summary.csv",
            ["lam", "linear_test_mode", "steps", "diffquot_sum",
             "mass_balance_defect", "mass_balance_scale"],
            [[monitors.lam, monitors.linear_test_mode, len(monitors.steps),
              monitors.diffquot_sum, monitors.mass_balance_defect,
              monitors.mass_balance_scale]],
        )
    )
    manifest.write()
    return 0


def _cmd_verify_inequalities(args):
    if args.config:
        cfg = load_config(args.config)
        polys = {"configured": cfg.poly}
        seed = cfg.seed if args.seed is None else args.seed
        out = Path(args.output or cfg.output_dir)
    else:
        polys = {
            "darcy": ForchheimerPolynomial([0.0], [1.0]),
            "two_term": ForchheimerPolynomial([0.0, 1.0], [1.0, 1.0]),
            "three_term_fractional": ForchheimerPolynomial(
                [0.0, 0.5, 1.0], [1.0, 1.0, 1.0]
            ),
        }
        seed = args.seed if args.seed is not None else 0
        out = Path(args.output or "out")
    rows = []
    ok = True
    for name, poly in polys.items():
        suite = SuiteConfig(samples=args.samples, seed=seed)
        for rep in run_randomized_suite(poly, suite):
            rows.append([name] + rep.row())
            if rep.enforced:
                ok &= rep.passed
    manifest = Manifest(out, {"seed": seed, "samples": args.samples})
    manifest.add(
        write_csv(out / "inequalities.csv", ["polynomial"] + InequalityReport.header(), rows)
    )
    manifest.write()
    if not ok:
        raise NumericalError("inequality suite found a negative margin")
    return 0


def _cmd_convergence(args):
    cfg = load_config(args.config)
    raw = cfg.raw.get("convergence", {})
    name = raw.get("problem", "mms_heat")
    reg = registry()
    if name not in reg:
        raise ConfigurationError(f"unknown manufactured problem {name!r}")
    cells = raw.get("cells", [8, 16, 32])
    steps = raw.get("steps", [64, 64, 64])
    T = float(raw.get("T", 0.25))
    table = run_convergence(reg[name], [tuple([c]) for c in cells], steps, T, cfg.solver)
    out = Path(cfg.output_dir)
    manifest = Manifest(out, {"config_sha256": _config_digest(args.config), "problem": name})
    manifest.add(write_csv(out / "convergence.csv", table.header(), table.table_rows()))
    manifest.write()
    return 0


def _cmd_check_grid(args):
    out = Path(args.output)
    rows = []
    worst = 0.0
    for cells in ((4,), (8,), (16,), (4, 4), (8, 8), (16, 16)):
        grid = StaggeredGrid(cells)
        for seed in range(args.seeds):
            defect = check_adjointness(grid, seed)
            worst = max(worst, defect)
            rows.append([repr(cells), seed, defect])
    manifest = Manifest(out, {"seeds": args.seeds})
    manifest.add(write_csv(out / "adjointness.csv", ["cells", "seed", "defect"], rows))
    manifest.write()
    if worst > 1e-12:
        raise NumericalError(f"adjointness defect {worst} exceeds 1e-12")
    return 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="forchflow",
        description="Porous-media gas flow solvers with built-in verification",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve-stationary", help="steady problem with eps continuation")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=_cmd_solve_stationary)

    p = sub.add_parser("solve-transient", help="implicit Euler time marching")
    p.add_argument("--config", required=True)
    p.add_argument("--snapshots", type=int, default=None)
    p.set_defaults(fn=_cmd_solve_transient)

    p = sub.add_parser("verify-inequalities", help="randomized inequality suite")
    p.add_argument("--config", default=None)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--output", default=None)
    p.set_defaults(fn=_cmd_verify_inequalities)

    p = sub.add_parser("convergence", help="manufactured-solution refinement study")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=_cmd_convergence)

    p = sub.add_parser("check-grid", help="discrete adjointness report")
    p.add_argument("--output", default="out")
    p.add_argument("--seeds", type=int, default=100)
    p.set_defaults(fn=_cmd_check_grid)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigurationError as exc:
        json.dump({"error": "configuration", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    except NumericalError as exc:
        json.dump({"error": "numerical", "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 3


if __name__ == "__main__":
    sys.exit(main())
