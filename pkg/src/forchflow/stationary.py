"""Steady-state driver: regularized problems and their eps -> 0 continuation.

The steady system is F(x,|m|) m = -grad u, div m = f with the boundary
condition u = -u_b; the boundary trace handed to the discretization is
therefore g = -u_b, applied literally so the sign convention of the problem
statement survives into the code.

Regularization adds eps*pi(u) to the continuity equation and
eps*|div m|**(r*-2) div m to the momentum equation.  Two solve modes exist:

* ``primal``: eliminate m = -K(|grad u|) grad u and solve the cell system
  eps*pi(u) - div(K grad u) = f.  The div-regularization term is dropped;
  it exists to make the infinite-dimensional operator coercive and the
  finite-dimensional primal system is solvable without it.
* ``mixed_regularized``: keep (m, u) as unknowns and solve the full
  regularized saddle system by Newton, including the div term.  Slower, but
  faithful; used as a cross-check of the primal shortcut.

``solve_stationary`` walks a strictly decreasing epsilon schedule with warm
starts, mirroring the eps = 1/n continuation, then performs one final
eps = 0 solve so the returned state satisfies the limit system to solver
tolerance instead of inheriting an O(eps_last) bias.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .errors import ConfigurationError, NonConvergenceError, NumericalError
from .grid import (
    BoundaryData,
    CellField,
    FaceField,
    StaggeredGrid,
    cell_norm_p,
    divergence,
    face_norm_p,
)
from .model import (
    ForchheimerPolynomial,
    derive_exponents,
    resolve_lambda,
    signed_power,
    smoothed_power_derivative,
)
from .solver import SolverConfig, recover_flux, solve_primal_system, weighted_norm

__all__ = [
    "StationarySpec",
    "FieldState",
    "ContinuationRecord",
    "solve_regularized_stationary",
    "solve_stationary",
    "monitor_stationary_bounds",
]


@dataclass
class FieldState:
    """The staggered unknown pair: flux on faces, pseudo-pressure on cells."""

    m: FaceField
    u: CellField


@dataclass
class StationarySpec:
    grid: StaggeredGrid
    poly: ForchheimerPolynomial
    gas: object  # GasModel or bare lambda
    f: object  # provider (points, t) -> values, or a CellField
    u_b: object  # provider or constant or dict {(axis, side): value/provider}
    epsilon_schedule: tuple = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-9, 1e-10)
    mode: str = "primal"

    def __post_init__(self):
        sched = tuple(float(e) for e in self.epsilon_schedule)
        if not sched or any(e <= 0 for e in sched):
            raise ConfigurationError("epsilon schedule must be positive")
        if not all(a > b for a, b in zip(sched, sched[1:])):
            raise ConfigurationError("epsilon schedule must be strictly decreasing")
        if sched[-1] > 1e-8:
            raise ConfigurationError(
                f"epsilon schedule must end at <= 1e-8, ends at {sched[-1]}"
            )
        if self.mode not in ("primal", "mixed_regularized"):
            raise ConfigurationError(f"unknown mode {self.mode!r}")
        self.epsilon_schedule = sched
        self.lam = resolve_lambda(self.gas)

    def source_field(self) -> CellField:
        if isinstance(self.f, CellField):
            return self.f
        return CellField.from_function(self.grid, self.f, 0.0)

    def boundary_trace(self) -> BoundaryData:
        """g = -u_b on every side."""
        ub = self.u_b
        if isinstance(ub, BoundaryData):
            raise ConfigurationError("pass u_b data, not a prebuilt trace")
        if isinstance(ub, dict):
            provs = {}
            for key, v in ub.items():
                if callable(v):
                    provs[key] = (lambda fn: lambda pts, t: -np.asarray(fn(pts, t)))(v)
                else:
                    provs[key] = -float(v)
            return BoundaryData(provs)
        if callable(ub):
            return BoundaryData.from_function(
                self.grid, lambda pts, t: -np.asarray(ub(pts, t))
            )
        return BoundaryData.constant(self.grid, -float(ub))


@dataclass
class ContinuationRecord:
    eps: float
    delta_u: float
    norm_u_Lr: float
    norm_m_Ls: float
    norm_divm_Lrstar: float
    iterations: int

    @staticmethod
    def header():
        return ["eps", "delta_u", "norm_u_Lr", "norm_m_Ls", "norm_divm_Lrstar", "iterations"]

    def row(self):
        return [self.eps, self.delta_u, self.norm_u_Lr, self.norm_m_Ls,
                self.norm_divm_Lrstar, self.iterations]


def solve_regularized_stationary(spec: StationarySpec, eps: float, u_init: CellField,
                                 cfg: SolverConfig | None = None):
    """Solve the regularized steady problem at a fixed eps > 0."""
    if eps <= 0:
        raise ConfigurationError(f"eps must be positive, got {eps}")
    cfg = cfg or SolverConfig(tol_residual=1e-13)
    bdata = spec.boundary_trace()
    f = spec.source_field()
    if spec.mode == "mixed_regularized":
        return _solve_mixed_regularized(spec, eps, u_init, cfg)
    phi = CellField.zeros(spec.grid)  # no porosity term in the steady system
    u, diag = solve_primal_system(
        spec.grid, spec.poly, spec.lam, phi, f, 0.0, eps, bdata, 0.0, u_init, cfg
    )
    m = recover_flux(u, spec.poly, bdata, 0.0)
    return FieldState(m=m, u=u), diag


def solve_stationary(spec: StationarySpec, cfg: SolverConfig | None = None):
    """Warm-started continuation along the eps schedule plus an eps=0 polish.

    Returns (state, records); ``records[k].delta_u`` is the volume-weighted
    2-norm distance between consecutive continuation solutions.
    """
    cfg = cfg or SolverConfig(tol_residual=1e-13)
    u = CellField.zeros(spec.grid)
    records = []
    prev = None
    state = None
    for eps in spec.epsilon_schedule:
        try:
            state, diag = solve_regularized_stationary(spec, eps, u, cfg)
        except NonConvergenceError as exc:
            raise NonConvergenceError(
                f"stationary continuation failed at eps={eps}: {exc}"
            ) from exc
        u = state.u
        delta = np.nan if prev is None else weighted_norm(
            spec.grid, u.values - prev.values
        )
        norms = monitor_stationary_bounds(state, spec)
        records.append(
            ContinuationRecord(
                eps=eps,
                delta_u=float(delta),
                norm_u_Lr=norms["norm_u_Lr"],
                norm_m_Ls=norms["norm_m_Ls"],
                norm_divm_Lrstar=norms["norm_divm_Lrstar"],
                iterations=diag.iterations_picard + diag.iterations_newton,
            )
        )
        prev = u
    if spec.mode == "primal":
        # terminal limit solve: the eps=0 primal system is well posed
        bdata = spec.boundary_trace()
        f = spec.source_field()
        phi = CellField.zeros(spec.grid)
        u, diag = solve_primal_system(
            spec.grid, spec.poly, spec.lam, phi, f, 0.0, 0.0, bdata, 0.0, u, cfg
        )
        state = FieldState(m=recover_flux(u, spec.poly, bdata, 0.0), u=u)
    return state, records


def monitor_stationary_bounds(state: FieldState, spec: StationarySpec):
    """Discrete norms whose eps-independence the continuation relies on."""
    exps = derive_exponents(spec.poly, spec.lam)
    return {
        "norm_u_Lr": cell_norm_p(state.u, exps.r),
        "norm_m_Ls": face_norm_p(state.m, exps.s),
        "norm_divm_Lrstar": cell_norm_p(divergence(state.m), exps.r_star),
    }


# -- coupled mixed solve ----------------------------------------------------

class _MixedSystem:
    """Newton residual/Jacobian for the regularized (m, u) saddle system.

    Unknown layout: [m_axis0, (m_axis1,) u], all raveled.  The face test
    functions are scaled by the face quadrature weights so the equations are
    the exact discrete counterpart of the variational statement under the
    summation-by-parts identity of the grid module.
    """

    def __init__(self, spec: StationarySpec, eps: float, cfg: SolverConfig):
        grid = spec.grid
        self.grid = grid
        self.spec = spec
        self.eps = eps
        self.cfg = cfg
        self.alphas = spec.poly.exponents
        self.face_coeffs = [
            np.ascontiguousarray(spec.poly.coeffs_on(grid.face_midpoints(a), 0.0))
            for a in range(grid.dim)
        ]
        self.face_weights = [grid.face_weights(a).ravel() for a in range(grid.dim)]
        self.n_faces = [grid.n_faces(a) for a in range(grid.dim)]
        self.offsets = np.concatenate([[0], np.cumsum(self.n_faces)])
        self.n_m = int(self.offsets[-1])
        self.n = self.n_m + grid.n_cells
        self.f_cells = spec.source_field().values.ravel()
        exps = derive_exponents(spec.poly, spec.lam)
        self.r_star = exps.r_star
        self.vol = grid.cell_volume

        # incidence T[c, f] = vol * sigma_cf with sigma = +-1/h so that
        # (T m)_c = vol * (div m)_c; boundary trace loads assembled alongside.
        rows, cols, vals = [], [], []
        trace = np.zeros(self.n_m)
        bdata = spec.boundary_trace()
        for a in range(grid.dim):
            h = grid.spacing[a]
            off = self.offsets[a]
            nshape = grid.face_shape(a)
            fidx = np.arange(self.n_faces[a]).reshape(nshape)
            sl = [slice(None)] * grid.dim
            sl[a] = slice(1, None)
            hi_faces = fidx[tuple(sl)].ravel()  # hi face of each cell, C order
            sl[a] = slice(None, -1)
            lo_faces = fidx[tuple(sl)].ravel()
            cells = np.arange(grid.n_cells)
            rows += [cells, cells]
            cols += [off + hi_faces, off + lo_faces]
            vals += [
                np.full(grid.n_cells, self.vol / h),
                np.full(grid.n_cells, -self.vol / h),
            ]
            area = grid.boundary_face_area(a)
            for side, pick in (("lo", 0), ("hi", -1)):
                sl[a] = pick
                bfaces = fidx[tuple(sl)].ravel()
                # trace pairing <g, v.nu> with the stored trace g = -u_b;
                # this is the sign under which the mixed and primal forms
                # coincide through the summation-by-parts identity
                gvals = np.asarray(bdata.trace(grid, a, side, 0.0)).ravel()
                sign = -1.0 if side == "lo" else 1.0
                trace[off + bfaces] += sign * area * gvals
        self.T = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(grid.n_cells, self.n_m),
        ).tocsr()
        self.trace_load = trace
        self.loads = np.concatenate([trace, self.vol * self.f_cells])

    def split(self, x):
        return x[: self.n_m], x[self.n_m :]

    def m_parts(self, mvec):
        return [mvec[self.offsets[a] : self.offsets[a + 1]] for a in range(self.grid.dim)]

    def residual(self, x):
        if not np.all(np.isfinite(x)):
            raise NumericalError("non-finite iterate in mixed solve")
        mvec, u = self.split(x)
        div = (self.T @ mvec) / self.vol
        dpow = np.abs(div) ** (self.r_star - 2.0) * div
        rf = np.zeros(self.n_m)
        for a in range(self.grid.dim):
            sl = slice(self.offsets[a], self.offsets[a + 1])
            ma = mvec[sl]
            mag = np.abs(ma)
            fval = kernels.poly_value_batch(mag, self.face_coeffs[a], self.alphas)
            rf[sl] = self.face_weights[a] * fval * ma
        rf += self.eps * (self.T.T @ dpow) - self.T.T @ u + self.trace_load
        rc = self.vol * (self.eps * signed_power(u, self.spec.lam) + div - self.f_cells)
        return np.concatenate([rf, rc])

    def jacobian(self, x, delta):
        mvec, u = self.split(x)
        div = (self.T @ mvec) / self.vol
        ddpow = (self.r_star - 1.0) * np.abs(div) ** (self.r_star - 2.0)
        diag_f = np.zeros(self.n_m)
        for a in range(self.grid.dim):
            sl = slice(self.offsets[a], self.offsets[a + 1])
            ma = mvec[sl]
            mag = np.abs(ma)
            fval = kernels.poly_value_batch(mag, self.face_coeffs[a], self.alphas)
            fpz = kernels.poly_slope_times_z_batch(mag, self.face_coeffs[a], self.alphas)
            diag_f[sl] = self.face_weights[a] * (fval + fpz)
        A = sp.diags(diag_f) + self.eps * (
            self.T.T @ sp.diags(ddpow / self.vol) @ self.T
        )
        Dm = sp.diags(
            self.vol * self.eps
            * smoothed_power_derivative(u, self.spec.lam, delta)
        )
        top = sp.hstack([A, -self.T.T])
        bot = sp.hstack([self.T, Dm])
        return sp.vstack([top, bot]).tocsr()


def _solve_mixed_regularized(spec: StationarySpec, eps: float, u_init: CellField,
                             cfg: SolverConfig):
    """Newton with backtracking on the coupled regularized saddle system."""
    system = _MixedSystem(spec, eps, cfg)
    bdata = spec.boundary_trace()
    m0 = recover_flux(u_init, spec.poly, bdata, 0.0)
    x = np.concatenate(
        [np.concatenate([c.ravel() for c in m0.components]), u_init.values.ravel()]
    )
    delta = cfg.delta_smoothing or 1e-8 * max(1.0, float(np.max(np.abs(x))))
    target = cfg.tol_residual * (1.0 + float(np.linalg.norm(system.loads)))
    res = system.residual(x)
    r = float(np.linalg.norm(res))
    from .solver import SolveDiagnostics

    diag = SolveDiagnostics(target=target)
    diag.history.append((0, "init", r, 0.0))
    for it in range(1, cfg.newton_max + 1):
        if r <= target:
            break
        J = system.jacobian(x, delta)
        step = spla.spsolve(J.tocsc(), -res)
        alpha = 1.0
        accepted = False
        for _ in range(cfg.max_backtracks + 1):
            try:
                res_try = system.residual(x + alpha * step)
            except NumericalError:
                alpha *= cfg.line_search_factor
                continue
            r_try = float(np.linalg.norm(res_try))
            if r_try <= (1.0 - 1e-4 * alpha) * r:
                x = x + alpha * step
                res, r = res_try, r_try
                accepted = True
                break
            alpha *= cfg.line_search_factor
        if not accepted:
            raise NonConvergenceError(
                f"mixed solve line search failed at residual {r:.3e}", diag
            )
        diag.iterations_newton += 1
        diag.history.append((it, "newton", r, alpha))
    else:
        if r > target:
            raise NonConvergenceError(
                f"mixed solve stalled at residual {r:.3e} (target {target:.3e})", diag
            )
    diag.final_residual = r
    mvec, u = system.split(x)
    comps = tuple(
        part.reshape(spec.grid.face_shape(a))
        for a, part in enumerate(system.m_parts(mvec))
    )
    return (
        FieldState(m=FaceField(spec.grid, comps), u=CellField(spec.grid, u.reshape(spec.grid.shape))),
        diag,
    )
