"""Solvers for generalized Forchheimer flow of isentropic gas in porous media.

The package discretizes the coupled system

    F(x,t,|m|) m = -grad u,      phi(x) d/dt(u**lam) + div m = f

on a staggered grid (u at cell centers, m at faces) and provides steady
solvers with eps-regularized continuation, implicit-Euler time marching with
a-priori-bound monitors, a randomized inequality verification suite, and a
manufactured-solution convergence harness.  See the README for the CLI.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    ConsistencyError,
    DomainError,
    NonConvergenceError,
    NumericalError,
    ShapeError,
)
from .grid import (
    BoundaryData,
    CellField,
    FaceField,
    StaggeredGrid,
    cell_dot,
    cell_norm_p,
    check_adjointness,
    divergence,
    face_dot,
    face_norm_p,
    gradient,
)
from .kernels import BACKEND as KERNEL_BACKEND
from .model import (
    ConductivityValue,
    DerivedExponents,
    ForchheimerPolynomial,
    GasModel,
    conductivity,
    conductivity_with_derivative,
    density_from_pseudo_pressure,
    derive_exponents,
    flux_magnitude,
    invert_flux_relation,
    pseudo_pressure_from_density,
    resolve_lambda,
    signed_power,
)
from .solver import (
    SolveDiagnostics,
    SolverConfig,
    newton_matrix,
    recover_flux,
    residual,
    solve_primal_system,
)
from .stationary import (
    FieldState,
    StationarySpec,
    monitor_stationary_bounds,
    solve_regularized_stationary,
    solve_stationary,
)
from .transient import (
    RunMonitors,
    TimeGrid,
    TransientSpec,
    mixed_residual_check,
    run,
    step,
    validate_step,
)
from .verification import (
    ConvergenceTable,
    ManufacturedProblem,
    brute_force_small_instance,
    exact_flux,
    manufacture_source,
    registry,
    run_convergence,
)

__all__ = [name for name in dir() if not name.startswith("_")]
