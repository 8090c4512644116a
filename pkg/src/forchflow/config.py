"""Run configuration: YAML loading, validation, profile library.

Field expressions are restricted to a small named-profile library plus
tabulated samples; anything fancier (manufactured solutions in particular)
lives in code, keeping configs auditable.  Validation collects every
violation instead of stopping at the first, and reports the governing bound
(for example the time-step gate h < phi_min*lambda/2) alongside the value.

Profiles (the ``profile`` key selects one):

* ``constant``: value
* ``linear``: intercept + slope per axis
* ``gaussian_bump``: baseline + amplitude * exp(-|x-center|^2 / (2 width^2))
* ``sin_product``: amplitude * prod_a sin(mode_a * pi * x_a / L_a)
* ``tabulated``: explicit cell values (must match the grid)
"""

from dataclasses import dataclass, field

import numpy as np
import yaml

from .errors import ConfigurationError
from .grid import CellField, StaggeredGrid
from .model import ForchheimerPolynomial, GasModel, resolve_lambda
from .solver import SolverConfig
from .transient import TimeGrid

__all__ = ["RunConfig", "load_config", "make_provider"]

_TOP_KEYS = {"problem", "discretization", "solver", "output", "seed"}
_PROBLEM_KEYS = {
    "polynomial", "gas", "lambda", "absorb_gas_constant", "porosity",
    "source", "boundary", "initial",
}
_DISC_KEYS = {"dim", "cells", "extents", "T", "J"}
_SOLVER_KEYS = {
    "picard_max", "newton_max", "tol_residual", "delta_smoothing",
    "line_search_factor", "max_backtracks", "linear_solver", "cg_tol",
    "cg_maxiter", "polish_steps", "epsilon_schedule", "mode",
}
_OUTPUT_KEYS = {"directory", "snapshots"}
_PROFILE_KEYS = {
    "constant": {"value"},
    "linear": {"intercept", "slope"},
    "gaussian_bump": {"center", "width", "amplitude", "baseline"},
    "sin_product": {"amplitude", "modes"},
    "tabulated": {"values"},
}


def make_provider(spec, extents, errors, where):
    """Turn a profile dict (or bare number) into a vectorized (pts, t) -> v."""
    if isinstance(spec, (int, float)):
        return lambda pts, t, _v=float(spec): _v
    if not isinstance(spec, dict) or "profile" not in spec:
        errors.append(f"{where}: expected a number or a profile mapping")
        return None
    kind = spec["profile"]
    if kind not in _PROFILE_KEYS:
        errors.append(f"{where}: unknown profile {kind!r}")
        return None
    unknown = set(spec) - _PROFILE_KEYS[kind] - {"profile"}
    if unknown:
        errors.append(f"{where}: unknown keys {sorted(unknown)} for profile {kind!r}")
        return None
    try:
        if kind == "constant":
            v = float(spec["value"])
            return lambda pts, t, _v=v: _v
        if kind == "linear":
            b = float(spec.get("intercept", 0.0))
            slope = np.asarray(spec.get("slope", [0.0] * len(extents)), float)
            return lambda pts, t, _b=b, _s=slope: _b + pts @ _s
        if kind == "gaussian_bump":
            c = np.asarray(spec["center"], float)
            w = float(spec["width"])
            a = float(spec["amplitude"])
            b = float(spec.get("baseline", 0.0))
            return lambda pts, t, _c=c, _w=w, _a=a, _b=b: _b + _a * np.exp(
                -np.sum((pts - _c) ** 2, axis=1) / (2.0 * _w**2)
            )
        if kind == "sin_product":
            a = float(spec["amplitude"])
            modes = np.asarray(spec.get("modes", [1] * len(extents)), float)

            def sinprod(pts, t, _a=a, _m=modes, _e=np.asarray(extents)):
                out = np.full(pts.shape[0], _a)
                for ax in range(pts.shape[1]):
                    out *= np.sin(_m[ax] * np.pi * pts[:, ax] / _e[ax])
                return out

            return sinprod
        if kind == "tabulated":
            vals = np.asarray(spec["values"], float)
            return lambda pts, t, _v=vals: _v
    except (TypeError, ValueError, KeyError) as exc:
        errors.append(f"{where}: bad profile parameters ({exc})")
        return None


@dataclass
class RunConfig:
    raw: dict
    grid: StaggeredGrid
    poly: ForchheimerPolynomial
    gas: GasModel | None
    lam: float
    absorb_gas_constant: bool
    porosity: object
    source: object
    boundary: dict  # (axis, side) -> value/provider, as u_b
    initial: object
    timegrid: TimeGrid | None
    solver: SolverConfig
    epsilon_schedule: tuple
    mode: str
    output_dir: str
    snapshots: int
    seed: int

    def porosity_field(self) -> CellField:
        return CellField.from_function(self.grid, self.porosity, 0.0)

    def initial_field(self) -> CellField:
        return CellField.from_function(self.grid, self.initial, 0.0)


def _reject_unknown(section, allowed, where, errors):
    unknown = set(section) - allowed
    if unknown:
        errors.append(f"{where}: unknown keys {sorted(unknown)}")


def load_config(path) -> RunConfig:
    """Parse and validate a run configuration, reporting all violations."""
    with open(path) as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{path}: top level must be a mapping")

    errors = []
    _reject_unknown(raw, _TOP_KEYS, "top level", errors)
    problem = raw.get("problem", {})
    disc = raw.get("discretization", {})
    solver_raw = dict(raw.get("solver", {}))
    output = raw.get("output", {})
    _reject_unknown(problem, _PROBLEM_KEYS, "problem", errors)
    _reject_unknown(disc, _DISC_KEYS, "discretization", errors)
    _reject_unknown(solver_raw, _SOLVER_KEYS, "solver", errors)
    _reject_unknown(output, _OUTPUT_KEYS, "output", errors)

    # discretization
    grid = None
    try:
        dim = int(disc.get("dim", 1))
        cells = disc.get("cells", [16])
        cells = tuple(int(c) for c in (cells if isinstance(cells, (list, tuple)) else [cells]))
        extents = disc.get("extents", [1.0] * dim)
        extents = tuple(float(e) for e in (extents if isinstance(extents, (list, tuple)) else [extents]))
        if len(cells) != dim:
            errors.append(f"discretization: {len(cells)} cell counts for dim={dim}")
        else:
            grid = StaggeredGrid(cells, extents)
    except (ConfigurationError, TypeError, ValueError) as exc:
        errors.append(f"discretization: {exc}")
    extents = grid.extents if grid else tuple(
        float(e) for e in (disc.get("extents") or [1.0])
    )

    # polynomial
    poly = None
    poly_raw = problem.get("polynomial", {})
    try:
        exps = poly_raw.get("exponents", [0.0])
        coefs = poly_raw.get("coefficients", [1.0])
        coefs = [
            c if isinstance(c, (int, float))
            else make_provider(c, extents, errors, "problem.polynomial")
            for c in coefs
        ]
        if all(c is not None for c in coefs):
            poly = ForchheimerPolynomial(exps, coefs)
    except (ConfigurationError, TypeError, ValueError) as exc:
        errors.append(f"problem.polynomial: {exc}")

    # gas / lambda
    gas = None
    lam = None
    absorb = bool(problem.get("absorb_gas_constant", True))
    if "gas" in problem and "lambda" in problem:
        errors.append("problem: give either gas constants or lambda, not both")
    elif "gas" in problem:
        try:
            gas = GasModel(float(problem["gas"]["c"]), float(problem["gas"]["gamma"]))
            lam = gas.lam
        except (ConfigurationError, TypeError, KeyError, ValueError) as exc:
            errors.append(f"problem.gas: {exc}")
    elif "lambda" in problem:
        try:
            lam = resolve_lambda(float(problem["lambda"]))
        except (ConfigurationError, TypeError, ValueError) as exc:
            errors.append(f"problem.lambda: {exc}")
    else:
        errors.append("problem: needs a gas section or a lambda exponent")

    porosity = make_provider(problem.get("porosity", 1.0), extents, errors, "problem.porosity")
    source = make_provider(problem.get("source", 0.0), extents, errors, "problem.source")
    initial = make_provider(problem.get("initial", 0.0), extents, errors, "problem.initial")

    boundary = {}
    sides = {"left": (0, "lo"), "right": (0, "hi"), "bottom": (1, "lo"), "top": (1, "hi")}
    for name, val in (problem.get("boundary") or {}).items():
        if name not in sides:
            errors.append(f"problem.boundary: unknown side {name!r}")
            continue
        axis, side = sides[name]
        if grid and axis >= grid.dim:
            errors.append(f"problem.boundary: side {name!r} needs dim > {axis}")
            continue
        boundary[(axis, side)] = (
            val if isinstance(val, (int, float))
            else make_provider(val, extents, errors, f"problem.boundary.{name}")
        )

    # time grid and the step gate
    timegrid = None
    if "T" in disc or "J" in disc:
        try:
            timegrid = TimeGrid(float(disc.get("T", 1.0)), int(disc.get("J", 1)))
        except (ConfigurationError, TypeError, ValueError) as exc:
            errors.append(f"discretization: {exc}")
    if timegrid and grid and lam and porosity:
        phi_vals = np.asarray(porosity(grid.cell_centers(), 0.0), dtype=float)
        phi_min = float(np.min(phi_vals))
        if gas is not None and absorb:
            phi_min *= gas.porosity_scale
        if phi_min <= 0:
            errors.append("problem.porosity: must be strictly positive")
        else:
            threshold = 0.5 * phi_min * lam
            if not (timegrid.h < threshold):
                errors.append(
                    f"discretization: time step h={timegrid.h} violates the "
                    f"boundedness gate h < phi_min*lambda/2 = {threshold}"
                )

    # solver section
    eps_schedule = solver_raw.pop("epsilon_schedule", (1e-2, 1e-4, 1e-6, 1e-8, 1e-10))
    mode = solver_raw.pop("mode", "primal")
    try:
        solver = SolverConfig(**solver_raw)
    except (TypeError, ValueError) as exc:
        errors.append(f"solver: {exc}")
        solver = SolverConfig()
    try:
        eps_schedule = tuple(float(e) for e in eps_schedule)
        if any(a <= b for a, b in zip(eps_schedule, eps_schedule[1:])):
            errors.append("solver.epsilon_schedule: must be strictly decreasing")
    except (TypeError, ValueError):
        errors.append("solver.epsilon_schedule: must be a list of numbers")
        eps_schedule = (1e-2, 1e-6, 1e-10)
    if mode not in ("primal", "mixed_regularized"):
        errors.append(f"solver.mode: unknown mode {mode!r}")

    # initial data sign and polynomial bounds on the sampling grid
    if grid and poly is not None:
        try:
            poly.validate_samples(grid.cell_centers(), [0.0] + ([timegrid.T] if timegrid else []))
        except ConfigurationError as exc:
            errors.append(f"problem.polynomial: {exc}")
    if grid and initial and timegrid:
        u0 = np.asarray(initial(grid.cell_centers(), 0.0), dtype=float)
        if np.any(u0 < 0):
            errors.append("problem.initial: must be non-negative for transient runs")

    if errors:
        raise ConfigurationError(
            "invalid configuration:\n  - " + "\n  - ".join(errors)
        )

    return RunConfig(
        raw=raw,
        grid=grid,
        poly=poly,
        gas=gas,
        lam=lam,
        absorb_gas_constant=absorb,
        porosity=porosity,
        source=source,
        boundary=boundary,
        initial=initial,
        timegrid=timegrid,
        solver=solver,
        epsilon_schedule=eps_schedule,
        mode=mode,
        output_dir=str(output.get("directory", "out")),
        snapshots=int(output.get("snapshots", 4)),
        seed=int(raw.get("seed", 0)),
    )
