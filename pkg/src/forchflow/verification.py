"""Manufactured-solution machinery, brute-force oracles, problem registry.

Sources are manufactured numerically: given a smooth exact u(x, t), the
matching right-hand side  f = phi * d/dt(u^lam) - div(K(|grad u|) grad u)
is evaluated without symbolic algebra (K has no closed form for general
drag polynomials).  The flux divergence is expanded by the chain rule,

    div(K(xi) grad u) = K'(xi) (g^T H g)/xi + K(xi) tr(H),
    g = grad u,  H = Hessian(u),  xi = |g|,

with K and K' exact by implicit differentiation of the flux relation, and
g, H from five-point stencils applied directly to u (first derivatives at
step ~1e-5 of the domain scale, second derivatives at the wider step that
balances their truncation against roundoff).  Differentiating the composed
flux by nested stencils instead loses five digits to roundoff
amplification, which is why the chain-rule split is used.  Stencil windows
shift to one-sided variants within two steps of the boundary, which only
matters for evaluation points on the boundary itself (face midpoints).

``brute_force_small_instance`` is an independent oracle for the per-step
cell systems at desk scale: coordinate-wise bisection sweeps exploiting that
each residual component is strictly increasing in its own unknown.  It
shares nothing with the production solve path (its scalar inversions are
plain bisection), so agreement is meaningful.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, NumericalError
from .grid import BoundaryData, CellField, StaggeredGrid, cell_norm_p
from .model import ForchheimerPolynomial, derive_exponents, signed_power
from .solver import SolverConfig
from .transient import TimeGrid, TransientSpec, run

__all__ = [
    "ManufacturedProblem",
    "ConvergenceTable",
    "manufacture_source",
    "exact_flux",
    "run_convergence",
    "brute_force_small_instance",
    "registry",
]


@lru_cache(maxsize=None)
def _fd_weights(offsets: tuple, order: int):
    """Finite-difference weights on integer offsets for d^order/dx^order.

    Solves the moment conditions sum_i w_i o_i**k / k! = delta_{k,order};
    reproduces the classical five-point formulas for central windows.
    """
    n = len(offsets)
    v = np.array(
        [[o**k / math.factorial(k) for o in offsets] for k in range(n)]
    )
    rhs = np.zeros(n)
    rhs[order] = 1.0
    return np.linalg.solve(v, rhs)


def _window(x, h, lo, hi):
    """Integer stencil offsets for a point, shifted off the boundary."""
    if x - 2.0 * h < lo:
        return (0, 1, 2, 3, 4)
    if x + 2.0 * h > hi:
        return (-4, -3, -2, -1, 0)
    return (-2, -1, 0, 1, 2)


@dataclass
class ManufacturedProblem:
    name: str
    exact_u: object  # (points (n,d), t) -> (n,), smooth, >= 0, zero trace
    poly: ForchheimerPolynomial
    lam: float
    phi: float = 1.0
    extents: tuple = (1.0,)

    @property
    def dim(self):
        return len(self.extents)

    def phi_values(self, points):
        return np.broadcast_to(np.asarray(self.phi, float), (points.shape[0],))

    def validate(self, t_samples=(0.0,)):
        """Non-negativity inside, zero trace on sampled boundary points."""
        n = 33
        axes = [np.linspace(0.0, e, n) for e in self.extents]
        mesh = np.meshgrid(*axes, indexing="ij")
        pts = np.column_stack([m.ravel() for m in mesh])
        on_boundary = np.zeros(pts.shape[0], dtype=bool)
        for a, e in enumerate(self.extents):
            on_boundary |= (pts[:, a] == 0.0) | (pts[:, a] == e)
        for t in t_samples:
            vals = np.asarray(self.exact_u(pts, float(t)), dtype=np.float64)
            if np.any(vals < -1e-12):
                raise ConfigurationError(f"{self.name}: exact solution goes negative")
            if np.any(np.abs(vals[on_boundary]) > 1e-12):
                raise ConfigurationError(f"{self.name}: nonzero boundary trace")


def _axis_derivative(fn, points, t, axis, h, extents, order=1):
    """d^order(fn)/dx_axis^order by five-point stencils, shifted near edges."""
    x = points[:, axis]
    out = np.zeros(points.shape[0])
    windows = [_window(v, h, 0.0, extents[axis]) for v in x]
    for offs in set(windows):
        mask = np.array([w == offs for w in windows])
        wts = _fd_weights(offs, order)
        acc = np.zeros(int(mask.sum()))
        base = points[mask]
        for o, w in zip(offs, wts):
            if w == 0.0:
                continue
            shifted = base.copy()
            shifted[:, axis] += o * h
            acc += w * np.asarray(fn(shifted, t), dtype=np.float64)
        out[mask] = acc / h**order
    return out


def _cross_derivative(fn, points, t, ax_a, ax_b, h, extents):
    """Mixed partial by the tensor product of two five-point windows."""
    out = np.zeros(points.shape[0])
    win_a = [_window(v, h, 0.0, extents[ax_a]) for v in points[:, ax_a]]
    win_b = [_window(v, h, 0.0, extents[ax_b]) for v in points[:, ax_b]]
    for offs_a in set(win_a):
        for offs_b in set(win_b):
            mask = np.array(
                [wa == offs_a and wb == offs_b for wa, wb in zip(win_a, win_b)]
            )
            if not mask.any():
                continue
            wa = _fd_weights(offs_a, 1)
            wb = _fd_weights(offs_b, 1)
            acc = np.zeros(int(mask.sum()))
            base = points[mask]
            for oa, ca in zip(offs_a, wa):
                for ob, cb in zip(offs_b, wb):
                    if ca == 0.0 or cb == 0.0:
                        continue
                    shifted = base.copy()
                    shifted[:, ax_a] += oa * h
                    shifted[:, ax_b] += ob * h
                    acc += ca * cb * np.asarray(fn(shifted, t), dtype=np.float64)
            out[mask] = acc / h**2
    return out


def _time_derivative(fn, points, t, h):
    wts = _fd_weights((-2, -1, 0, 1, 2), 1)
    acc = np.zeros(points.shape[0])
    for o, w in zip((-2, -1, 0, 1, 2), wts):
        if w == 0.0:
            continue
        acc += w * np.asarray(fn(points, t + o * h), dtype=np.float64)
    return acc / h


def _grad_exact(problem, points, t, h):
    return np.column_stack(
        [
            _axis_derivative(problem.exact_u, points, t, a, h, problem.extents)
            for a in range(problem.dim)
        ]
    )


def _conductivity_arrays(problem, points, t, xi):
    """Vectorized K(xi) and K'(xi) via the implicit flux relation."""
    from . import kernels

    coeffs = np.asarray(problem.poly.coeffs_on(points, t))
    alphas = problem.poly.exponents
    s, _ = kernels.invert_batch(xi, coeffs, alphas)
    fval = kernels.poly_value_batch(s, coeffs, alphas)
    k = 1.0 / fval
    fpz = kernels.poly_slope_times_z_batch(s, coeffs, alphas)  # s * F'(s)
    with np.errstate(divide="ignore", invalid="ignore"):
        fprime = np.where(s > 0.0, fpz / np.where(s > 0.0, s, 1.0), 0.0)
    kp = -fprime / (fval**2 * (fval + fpz))
    return k, kp


def exact_flux(problem: ManufacturedProblem, points, t, stencil_scale=1e-5):
    """Continuous flux -K(x,t,|grad u|) grad u at arbitrary points."""
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    h = stencil_scale * max(problem.extents)
    g = _grad_exact(problem, points, t, h)
    xi = np.linalg.norm(g, axis=1)
    k, _ = _conductivity_arrays(problem, points, t, xi)
    return k[:, None] * (-g)


def manufacture_source(problem: ManufacturedProblem, points, t, stencil_scale=1e-5):
    """Source f matching the exact solution.

    First derivatives use step ``stencil_scale * L``; second derivatives use
    the wider ``0.2 * sqrt(stencil_scale) * L`` that balances roundoff
    against truncation for five-point windows.  Where the gradient vanishes
    the K' term is dropped (its limit is zero for alpha_1 >= 1; fractional
    alpha_1 < 1 manufactured problems should avoid interior gradient zeros).
    """
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    scale = max(problem.extents)
    h1 = stencil_scale * scale
    h2 = 0.2 * np.sqrt(stencil_scale) * scale
    ht = stencil_scale * max(1.0, abs(t))
    lam = problem.lam

    def u_pow(pts, tt):
        vals = np.asarray(problem.exact_u(pts, tt), dtype=np.float64)
        return signed_power(vals, lam)

    accumulation = problem.phi_values(points) * _time_derivative(u_pow, points, t, ht)

    d = problem.dim
    g = _grad_exact(problem, points, t, h1)
    hess = np.zeros((points.shape[0], d, d))
    for a in range(d):
        hess[:, a, a] = _axis_derivative(
            problem.exact_u, points, t, a, h2, problem.extents, order=2
        )
        for b in range(a + 1, d):
            hess[:, a, b] = hess[:, b, a] = _cross_derivative(
                problem.exact_u, points, t, a, b, h2, problem.extents
            )
    xi = np.linalg.norm(g, axis=1)
    k, kp = _conductivity_arrays(problem, points, t, xi)
    ghg = np.einsum("na,nab,nb->n", g, hess, g)
    with np.errstate(divide="ignore", invalid="ignore"):
        directional = np.where(xi > 1e-9 * scale, ghg / np.where(xi > 0, xi, 1.0), 0.0)
    trace_h = np.einsum("naa->n", hess)
    return accumulation - (kp * directional + k * trace_h)


@dataclass
class ConvergenceTable:
    rows: list = field(default_factory=list)

    @staticmethod
    def header():
        return ["h_space", "h_time", "error_u", "error_m", "order_u", "order_m"]

    def add(self, h_space, h_time, error_u, error_m):
        self.rows.append(
            {"h_space": h_space, "h_time": h_time, "error_u": error_u,
             "error_m": error_m, "order_u": float("nan"), "order_m": float("nan")}
        )
        if len(self.rows) >= 2:
            prev, cur = self.rows[-2], self.rows[-1]
            ratio = prev["h_space"] / cur["h_space"]
            if ratio == 1.0:
                ratio = prev["h_time"] / cur["h_time"]
            if ratio > 1.0:
                for key in ("u", "m"):
                    e0, e1 = prev[f"error_{key}"], cur[f"error_{key}"]
                    if e0 > 1e-13 and e1 > 1e-13:
                        cur[f"order_{key}"] = float(np.log(e0 / e1) / np.log(ratio))

    def table_rows(self):
        return [[r[k] for k in self.header()] for r in self.rows]

    def orders(self, key="u"):
        return [r[f"order_{key}"] for r in self.rows[1:]]


def run_convergence(problem: ManufacturedProblem, cells_list, steps_list, T,
                    cfg: SolverConfig | None = None) -> ConvergenceTable:
    """Transient refinement study against the manufactured solution.

    ``cells_list`` and ``steps_list`` are matched per level; errors are
    measured at the final time in |u|_{L^r} and |m|_{L^s} with the model
    exponents.
    """
    if len(cells_list) != len(steps_list) or len(cells_list) < 1:
        raise ConfigurationError("need matched nonempty refinement families")
    problem.validate((0.0, T))
    cfg = cfg or SolverConfig()
    exps = derive_exponents(problem.poly, problem.lam)
    table = ConvergenceTable()
    for cells, steps in zip(cells_list, steps_list):
        grid = StaggeredGrid(cells, problem.extents)
        u0 = CellField.from_function(grid, problem.exact_u, 0.0)
        spec = TransientSpec(
            grid=grid,
            poly=problem.poly,
            gas=problem.lam,
            phi=CellField.full(grid, problem.phi),
            f=lambda pts, t: manufacture_source(problem, pts, t),
            u0=u0,
            timegrid=TimeGrid(T, steps),
        )
        states, _ = run(spec, cfg, keep_states=False)
        final = states[-1]
        exact_cells = np.asarray(problem.exact_u(grid.cell_centers(), T))
        err_u = cell_norm_p(
            CellField(grid, final.u.values - exact_cells.reshape(grid.shape)), exps.r
        )
        err_m_p = 0.0
        for a in range(grid.dim):
            mids = grid.face_midpoints(a)
            m_ex = exact_flux(problem, mids, T)[:, a].reshape(grid.face_shape(a))
            w = grid.face_weights(a)
            err_m_p += float(np.sum(w * np.abs(final.m.components[a] - m_ex) ** exps.s))
        table.add(max(grid.spacing), T / steps, err_u, err_m_p ** (1.0 / exps.s))
    return table


# -- desk-scale oracle -------------------------------------------------------

def _bisect_inverse(coeffs, alphas, xi, iters=200):
    """Plain bisection for s*F(s) = xi; independent of the kernel path."""
    if xi <= 0.0:
        return 0.0

    def g(s):
        return float(np.sum(coeffs * s ** (alphas + 1.0))) - xi

    lo, hi = 0.0, max(1.0, xi / coeffs[0])
    while g(hi) < 0.0:
        hi *= 2.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if g(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def brute_force_small_instance(grid: StaggeredGrid, poly, lam, phi: CellField,
                               mass_coeff, eps_zero_order, rhs: CellField,
                               bdata: BoundaryData, t, tol=1e-10,
                               max_sweeps=2000) -> CellField:
    """Coordinate-bisection solve of the per-step system on a tiny 1D grid.

    Residual components are strictly increasing in their own unknown
    (accumulation term and outgoing fluxes both are), so each coordinate has
    a unique root given the others and Gauss-Seidel sweeps contract.
    """
    if grid.dim != 1 or grid.cells[0] > 4:
        raise ConfigurationError("oracle only covers 1d grids with <= 4 cells")
    n = grid.cells[0]
    hx = grid.spacing[0]
    coeffs = poly.coeffs_on(grid.face_midpoints(0), t)
    alphas = poly.exponents
    g_lo = float(np.asarray(bdata.trace(grid, 0, "lo", t)))
    g_hi = float(np.asarray(bdata.trace(grid, 0, "hi", t)))
    phi_v = phi.values.ravel()
    rhs_v = rhs.values.ravel()

    def face_flux(face, grad):
        s = _bisect_inverse(coeffs[face], alphas, abs(grad))
        return -np.sign(grad) * s

    def residual_component(i, u):
        gl = 2.0 * (u[0] - g_lo) / hx if i == 0 else (u[i] - u[i - 1]) / hx
        gr = 2.0 * (g_hi - u[n - 1]) / hx if i == n - 1 else (u[i + 1] - u[i]) / hx
        div = (face_flux(i + 1, gr) - face_flux(i, gl)) / hx
        return (
            (mass_coeff * phi_v[i] + eps_zero_order) * signed_power(u[i], lam)
            + div
            - rhs_v[i]
        )

    u = np.zeros(n)
    for _ in range(max_sweeps):
        biggest = 0.0
        for i in range(n):
            old = u[i]
            lo, hi = -1.0, 1.0
            for _ in range(200):
                u[i] = lo
                if residual_component(i, u) < 0.0:
                    break
                lo *= 2.0
            else:
                raise NumericalError("oracle bracket failure (low side)")
            for _ in range(200):
                u[i] = hi
                if residual_component(i, u) > 0.0:
                    break
                hi *= 2.0
            else:
                raise NumericalError("oracle bracket failure (high side)")
            for _ in range(120):
                mid = 0.5 * (lo + hi)
                u[i] = mid
                if residual_component(i, u) > 0.0:
                    hi = mid
                else:
                    lo = mid
            u[i] = 0.5 * (lo + hi)
            biggest = max(biggest, abs(u[i] - old) + (hi - lo))
        if biggest < 0.01 * tol:
            break
    else:
        raise NumericalError(f"oracle sweeps did not settle below {tol}")
    return CellField(grid, u)


# -- registry ----------------------------------------------------------------

def _two_term_poly():
    return ForchheimerPolynomial([0.0, 1.0], [1.0, 1.0])


def _darcy_poly(a0=1.0):
    return ForchheimerPolynomial([0.0], [a0])


def registry():
    """Named regression problems shared by tests, acceptance and the CLI."""
    reg = {}

    reg["stationary_darcy_linear"] = dict(
        kind="stationary",
        poly=_darcy_poly(),
        lam=0.5,
        f=lambda pts, t: 0.0,
        u_b={(0, "lo"): 0.0, (0, "hi"): -1.0},  # trace g = (0, 1): u = x
        exact_u=lambda pts, t: pts[:, 0],
        exact_m=-1.0,
        cells=(16,),
    )
    reg["stationary_two_term"] = dict(
        kind="stationary",
        poly=_two_term_poly(),
        lam=0.5,
        f=lambda pts, t: 0.0,
        u_b={(0, "lo"): 0.0, (0, "hi"): 6.0},  # trace g = (0, -6): u = -6x
        exact_u=lambda pts, t: -6.0 * pts[:, 0],
        exact_m=2.0,
        cells=(16,),
    )

    reg["mms_heat"] = ManufacturedProblem(
        name="mms_heat",
        exact_u=lambda pts, t: np.exp(-t) * np.sin(np.pi * pts[:, 0]),
        poly=_darcy_poly(),
        lam=1.0,
        phi=1.0,
        extents=(1.0,),
    )
    reg["mms_nonlinear"] = ManufacturedProblem(
        name="mms_nonlinear",
        exact_u=lambda pts, t: (1.0 + 0.5 * t) * np.sin(np.pi * pts[:, 0]) ** 2,
        poly=_two_term_poly(),
        lam=0.5,
        phi=1.0,
        extents=(1.0,),
    )

    # sustained near-steady transient used by the monitor-boundedness checks
    reg["transient_monitor"] = dict(
        kind="transient",
        poly=_two_term_poly(),
        lam=0.5,
        phi=1.0,
        T=0.05,
        u0=lambda pts, t: 1.2 * np.sin(np.pi * pts[:, 0]) ** 2,
        f=lambda pts, t: 8.0 * np.sin(np.pi * np.atleast_2d(pts)[:, 0]) ** 2,
        cells=(64,),
    )

    # small instances for the step-vs-oracle equivalence checks
    for label, poly_fn, lam in (
        ("three_cell_darcy_lam1", _darcy_poly, 1.0),
        ("three_cell_darcy_lam05", _darcy_poly, 0.5),
        ("three_cell_two_term_lam1", _two_term_poly, 1.0),
        ("three_cell_two_term_lam05", _two_term_poly, 0.5),
    ):
        reg[label] = dict(
            kind="small_step",
            poly=poly_fn(),
            lam=lam,
            cells=(3,),
            u_prev=np.array([1.0, 4.0, 1.0]),
            h=0.1,
            phi=1.0,
            f=0.0,
        )
    return reg
