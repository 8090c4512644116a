"""Cell-centered nonlinear solver for the primal flux form.

All steady and transient drivers reduce to one finite-dimensional system in
the cell values of u:

    mass_coeff * phi * pi(u) + eps * pi(u) + div( -K(|grad u|) grad u ) = rhs

with pi(u) = sign(u)|u|**lam and Dirichlet trace data entering through the
ghost-value gradient.  The flux relation makes the face response
m = -K(|g|) g strictly monotone in the face gradient g with slope
1/(F(s) + s F'(s)) in (0, 1/a_0], so the Newton matrix is symmetric positive
definite and a damped Picard (frozen conductivity) sweep is globally stable.

Phase schedule: Picard until the residual drops tenfold (or its budget runs
out), then Newton with a backtracking line search; a failed Newton step
falls back to a Picard step.  The accumulation term pi has an unbounded
derivative at u = 0, so Jacobians use the smoothed slope
lam*(u**2 + delta**2)**((lam-1)/2); residuals are never smoothed, hence a
converged iterate solves the exact discrete system.

Intermediate iterates may go negative (pi is extended oddly); transient
drivers check and clamp converged states separately.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .errors import ConsistencyError, NonConvergenceError, NumericalError
from .grid import BoundaryData, CellField, FaceField, divergence, gradient
from .model import resolve_lambda, signed_power, smoothed_power_derivative

__all__ = [
    "SolverConfig",
    "SolveDiagnostics",
    "solve_primal_system",
    "recover_flux",
    "residual",
    "newton_matrix",
    "weighted_norm",
]


@dataclass
class SolverConfig:
    picard_max: int = 30
    newton_max: int = 60
    tol_residual: float = 1e-12  # relative, volume-weighted 2-norm
    delta_smoothing: float | None = None  # default 1e-8 * iterate scale
    line_search_factor: float = 0.5
    max_backtracks: int = 40
    linear_solver: str = "direct"  # or "cg"
    cg_tol: float = 1e-12
    cg_maxiter: int = 2000
    polish_steps: int = 2  # extra Newton steps after hitting the target

    def __post_init__(self):
        if self.tol_residual <= 0:
            raise ValueError("tol_residual must be positive")
        if self.picard_max + self.newton_max < 1:
            raise ValueError("need at least one iteration")
        if not (0.0 < self.line_search_factor < 1.0):
            raise ValueError("line_search_factor must lie in (0, 1)")
        if self.linear_solver not in ("direct", "cg"):
            raise ValueError(f"unknown linear solver {self.linear_solver!r}")


@dataclass
class SolveDiagnostics:
    iterations_picard: int = 0
    iterations_newton: int = 0
    final_residual: float = 0.0
    target: float = 0.0
    history: list = field(default_factory=list)  # (iter, phase, residual, damping)
    derivative_clamped: bool = False
    bracket_fallback_used: bool = False

    def rows(self):
        header = ["iteration", "phase", "residual", "damping"]
        return header, [list(row) for row in self.history]


def weighted_norm(grid, values):
    """Volume-weighted 2-norm of a flat or shaped cell array."""
    return float(np.sqrt(np.sum(np.asarray(values) ** 2) * grid.cell_volume))


class _PrimalSystem:
    """Precomputed geometry/coefficients for one solve at a fixed time."""

    def __init__(self, grid, poly, lam, phi_values, rhs_values, mass_coeff,
                 eps_zero_order, bdata, t):
        self.grid = grid
        self.poly = poly
        self.lam = lam
        self.bdata = bdata
        self.t = t
        self.alphas = poly.exponents
        self.face_coeffs = [
            np.ascontiguousarray(poly.coeffs_on(grid.face_midpoints(a), t))
            for a in range(grid.dim)
        ]
        self.mass_diag = mass_coeff * np.asarray(phi_values).ravel() + eps_zero_order
        self.rhs = np.asarray(rhs_values).ravel()

    def flux_data(self, u_field):
        """Per-axis gradient, inverted magnitude, conductivity and flux."""
        g = gradient(u_field, self.bdata, self.t)
        data = []
        n_bisect = 0
        for a in range(self.grid.dim):
            ga = g.components[a].ravel()
            s, nb = kernels.invert_batch(np.abs(ga), self.face_coeffs[a], self.alphas)
            n_bisect += nb
            f = kernels.poly_value_batch(s, self.face_coeffs[a], self.alphas)
            k = 1.0 / f
            data.append({"grad": ga, "s": s, "F": f, "K": k, "m": -k * ga})
        return data, n_bisect

    def flux_field(self, data):
        return FaceField(
            self.grid,
            tuple(
                data[a]["m"].reshape(self.grid.face_shape(a))
                for a in range(self.grid.dim)
            ),
        )

    def residual(self, u_flat):
        if not np.all(np.isfinite(u_flat)):
            raise NumericalError("non-finite iterate in primal solve")
        u_field = CellField(self.grid, u_flat.reshape(self.grid.shape))
        data, n_bisect = self.flux_data(u_field)
        div = divergence(self.flux_field(data)).values.ravel()
        res = self.mass_diag * signed_power(u_flat, self.lam) + div - self.rhs
        return res, data, n_bisect

    def matrix(self, u_flat, data, scheme, delta):
        """Linearization: frozen-K (picard) or exact flux slope (newton)."""
        grid = self.grid
        n = grid.n_cells
        rows, cols, vals = [], [], []
        for a in range(grid.dim):
            h = grid.spacing[a]
            if scheme == "newton":
                w = 1.0 / kernels.relation_derivative_batch(
                    data[a]["s"], self.face_coeffs[a], self.alphas
                )
            else:
                w = data[a]["K"]
            w = w.reshape(grid.face_shape(a))
            sl = [slice(None)] * grid.dim
            sl[a] = slice(1, -1)
            c = (w[tuple(sl)].ravel()) / h**2
            il, ir = grid.interior_pairs(a)
            rows += [il, ir, il, ir]
            cols += [il, ir, ir, il]
            vals += [c, c, -c, -c]
            for side, pick in (("lo", 0), ("hi", -1)):
                sl[a] = pick
                wb = w[tuple(sl)].ravel()
                adj = grid.boundary_cells(a, side)
                rows.append(adj)
                cols.append(adj)
                vals.append(2.0 * wb / h**2)  # ghost doubles the coupling
        diag = self.mass_diag * smoothed_power_derivative(u_flat, self.lam, delta)
        rows.append(np.arange(n))
        cols.append(np.arange(n))
        vals.append(diag)
        return sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(n, n),
        ).tocsr()


def _linear_solve(matrix, b, cfg):
    if cfg.linear_solver == "direct":
        return spla.spsolve(matrix, b)
    d = matrix.diagonal()
    d = np.where(np.abs(d) > 0, d, 1.0)
    precond = spla.LinearOperator(matrix.shape, matvec=lambda x: x / d)
    x, info = spla.cg(matrix, b, rtol=cfg.cg_tol, atol=0.0,
                      maxiter=cfg.cg_maxiter, M=precond)
    if info != 0:
        raise NonConvergenceError(f"cg did not converge (info={info})")
    return x


def solve_primal_system(grid, poly, gas, phi, rhs, mass_coeff, eps_zero_order,
                        bdata, t, u_init, cfg=None):
    """Solve the primal cell system; returns (u, diagnostics).

    ``gas`` may be a GasModel or a bare lam exponent.  The system is strictly
    monotone, so the discrete solution is unique and the result does not
    depend on ``u_init`` beyond the solver tolerance.
    """
    lam = resolve_lambda(gas)
    cfg = cfg or SolverConfig()
    system = _PrimalSystem(
        grid, poly, lam, phi.values, rhs.values, mass_coeff, eps_zero_order, bdata, t
    )
    u = np.array(u_init.values, dtype=np.float64).ravel().copy()
    delta = cfg.delta_smoothing
    if delta is None:
        delta = 1e-8 * max(1.0, float(np.max(np.abs(u))) if u.size else 1.0)

    diag = SolveDiagnostics()
    target = cfg.tol_residual * (1.0 + weighted_norm(grid, system.rhs))
    diag.target = target

    res, data, nb = system.residual(u)
    diag.bracket_fallback_used |= nb > 0
    r = weighted_norm(grid, res)
    diag.history.append((0, "init", r, 0.0))
    r_start_picard = r
    phase = "picard"
    it = 0

    def try_step(scheme, res, data, r):
        """One damped linearized update; returns None if the search fails."""
        matrix = system.matrix(u, data, scheme, delta)
        direction = _linear_solve(matrix, -res, cfg)
        alpha = 1.0
        for _ in range(cfg.max_backtracks + 1):
            try:
                res_try, data_try, nb = system.residual(u + alpha * direction)
            except NumericalError:
                alpha *= cfg.line_search_factor
                continue
            r_try = weighted_norm(grid, res_try)
            if r_try <= (1.0 - 1e-4 * alpha) * r:
                diag.bracket_fallback_used |= nb > 0
                return alpha, direction, res_try, data_try, r_try
            alpha *= cfg.line_search_factor
        return None

    while r > target:
        if phase == "picard" and (
            diag.iterations_picard >= cfg.picard_max or r <= 0.1 * r_start_picard
        ):
            phase = "newton"
        if phase == "newton" and diag.iterations_newton >= cfg.newton_max:
            diag.final_residual = r
            raise NonConvergenceError(
                f"primal solve stalled at residual {r:.3e} (target {target:.3e})",
                diag,
            )
        step = try_step(phase, res, data, r)
        if step is None and phase == "newton":
            step = try_step("picard", res, data, r)  # damped fallback
        if step is None:
            diag.final_residual = r
            raise NonConvergenceError(
                f"line search failed in {phase} phase at residual {r:.3e}", diag
            )
        alpha, direction, res, data, r = step
        u = u + alpha * direction
        it += 1
        if phase == "picard":
            diag.iterations_picard += 1
        else:
            diag.iterations_newton += 1
        diag.history.append((it, phase, r, alpha))

    # A couple of extra Newton contractions push the residual well under the
    # target, which the mass-balance and equivalence checks rely on.
    for _ in range(cfg.polish_steps):
        if r == 0.0:
            break
        step = try_step("newton", res, data, r)
        if step is None:
            break
        alpha, direction, res, data, r_new = step
        u = u + alpha * direction
        it += 1
        diag.history.append((it, "polish", r_new, alpha))
        improved = r_new < 0.25 * r
        r = r_new
        if not improved:
            break

    res_final, _, _ = system.residual(u)
    diag.final_residual = weighted_norm(grid, res_final)
    return CellField(grid, u.reshape(grid.shape)), diag


def recover_flux(u: CellField, poly, bdata: BoundaryData, t: float) -> FaceField:
    """m = -K(|grad u|) grad u on faces, checked against |m| = inverse(|g|)."""
    grid = u.grid
    comps = []
    g = gradient(u, bdata, t)
    for a in range(grid.dim):
        ga = g.components[a].ravel()
        coeffs = poly.coeffs_on(grid.face_midpoints(a), t)
        xi = np.abs(ga)
        s, _ = kernels.invert_batch(xi, coeffs, poly.exponents)
        f = kernels.poly_value_batch(s, coeffs, poly.exponents)
        m = -ga / f
        err = np.abs(np.abs(m) - s)
        bound = 1e-12 * np.maximum(1.0, s)
        if np.any(err > bound):
            worst = int(np.argmax(err - bound))
            raise ConsistencyError(
                f"flux magnitude identity violated on axis {a}: "
                f"|m|={abs(m[worst])} vs inverse={s[worst]}"
            )
        comps.append(m.reshape(grid.face_shape(a)))
    return FaceField(grid, tuple(comps))


def residual(grid, poly, gas, phi, rhs, mass_coeff, eps_zero_order, bdata, t,
             u: CellField) -> CellField:
    """Defect of the primal system at ``u``; the solver converges on this."""
    lam = resolve_lambda(gas)
    m = recover_flux(u, poly, bdata, t)
    vals = (
        (mass_coeff * phi.values + eps_zero_order) * signed_power(u.values, lam)
        + divergence(m).values
        - rhs.values
    )
    return CellField(grid, vals)


def newton_matrix(grid, poly, gas, phi, mass_coeff, eps_zero_order, bdata, t,
                  u: CellField, delta=1e-8):
    """Assembled Newton matrix at ``u`` (exposed for Jacobian verification)."""
    lam = resolve_lambda(gas)
    system = _PrimalSystem(
        grid, poly, lam, phi.values, np.zeros(grid.shape), mass_coeff,
        eps_zero_order, bdata, t,
    )
    data, _ = system.flux_data(u)
    return system.matrix(u.values.ravel(), data, "newton", delta)
