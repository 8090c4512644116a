"""Staggered (Arakawa C style) grid on a box, in one or two dimensions.

Scalars (pseudo-pressure u, porosity, sources) live at cell centers; fluxes
live at faces, one array per axis including boundary faces.  The discrete
gradient uses ghost values 2*g - u_adjacent at the boundary so the Dirichlet
trace g sits exactly on the boundary face, and the face quadrature weights
(full cell volume inside, half on the boundary) make the summation-by-parts
identity

    <m, grad u>_faces + <div m, u>_cells = sum_boundary area * g * (m.nu)

hold to round-off.  That identity is the discrete stand-in for the Green
formula and carries the whole mixed structure of the solvers, so
``check_adjointness`` guards it directly.

Boundary sides are addressed as (axis, "lo"|"hi"); in 2D axis 0 runs along
x (left/right) and axis 1 along y (bottom/top).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ShapeError

__all__ = [
    "StaggeredGrid",
    "CellField",
    "FaceField",
    "BoundaryData",
    "gradient",
    "divergence",
    "cell_dot",
    "face_dot",
    "cell_norm_p",
    "face_norm_p",
    "check_adjointness",
    "cell_rows",
    "face_rows",
]


class StaggeredGrid:
    def __init__(self, cells, extents=None):
        cells = (cells,) if np.isscalar(cells) else tuple(int(c) for c in cells)
        dim = len(cells)
        if dim not in (1, 2):
            raise ConfigurationError(f"grid dimension must be 1 or 2, got {dim}")
        if any(c < 2 for c in cells):
            raise ConfigurationError(f"need at least 2 cells per axis, got {cells}")
        if extents is None:
            extents = (1.0,) * dim
        extents = (extents,) if np.isscalar(extents) else tuple(float(e) for e in extents)
        if len(extents) != dim or any(e <= 0 for e in extents):
            raise ConfigurationError(f"bad extents {extents} for {dim}d grid")
        self.dim = dim
        self.cells = cells
        self.extents = extents
        self.spacing = tuple(e / c for e, c in zip(extents, cells))
        self.shape = cells
        self.n_cells = int(np.prod(cells))
        self.cell_volume = float(np.prod(self.spacing))

    def __repr__(self):
        return f"StaggeredGrid(cells={self.cells}, extents={self.extents})"

    def axes_centers(self):
        return [
            (np.arange(c) + 0.5) * h for c, h in zip(self.cells, self.spacing)
        ]

    def cell_centers(self):
        """(n_cells, dim) coordinates in C order, matching ``ravel()``."""
        axes = self.axes_centers()
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def face_shape(self, axis):
        s = list(self.cells)
        s[axis] += 1
        return tuple(s)

    def n_faces(self, axis):
        return int(np.prod(self.face_shape(axis)))

    def face_midpoints(self, axis):
        """(n_faces, dim) midpoint coordinates of the faces normal to axis."""
        coords = []
        for a in range(self.dim):
            if a == axis:
                coords.append(np.arange(self.cells[a] + 1) * self.spacing[a])
            else:
                coords.append((np.arange(self.cells[a]) + 0.5) * self.spacing[a])
        mesh = np.meshgrid(*coords, indexing="ij")
        return np.column_stack([m.ravel() for m in mesh])

    def face_weights(self, axis):
        """Quadrature weights per face: cell volume inside, half on boundary."""
        w = np.full(self.face_shape(axis), self.cell_volume)
        sl_lo = [slice(None)] * self.dim
        sl_lo[axis] = 0
        w[tuple(sl_lo)] *= 0.5
        sl_hi = [slice(None)] * self.dim
        sl_hi[axis] = -1
        w[tuple(sl_hi)] *= 0.5
        return w

    def boundary_face_area(self, axis):
        """Measure of a single boundary face normal to ``axis``."""
        return self.cell_volume / self.spacing[axis]

    def interior_pairs(self, axis):
        """Flat cell indices (left, right) for the interior faces of an axis,
        in the same C order as the flattened interior slice of a face array."""
        idx = np.arange(self.n_cells).reshape(self.shape)
        sl_l = [slice(None)] * self.dim
        sl_l[axis] = slice(None, -1)
        sl_r = [slice(None)] * self.dim
        sl_r[axis] = slice(1, None)
        return idx[tuple(sl_l)].ravel(), idx[tuple(sl_r)].ravel()

    def boundary_cells(self, axis, side):
        """Flat indices of cells adjacent to one boundary of an axis."""
        idx = np.arange(self.n_cells).reshape(self.shape)
        sl = [slice(None)] * self.dim
        sl[axis] = 0 if side == "lo" else -1
        return idx[tuple(sl)].ravel()

    def boundary_midpoints(self, axis, side):
        pts = self.face_midpoints(axis).reshape(self.face_shape(axis) + (self.dim,))
        sl = [slice(None)] * self.dim
        sl[axis] = 0 if side == "lo" else -1
        return pts[tuple(sl)].reshape(-1, self.dim)


def _check_values(grid, values, shape, what):
    values = np.asarray(values, dtype=np.float64)
    if values.shape != shape:
        values = values.reshape(shape) if values.size == np.prod(shape) else values
    if values.shape != shape:
        raise ShapeError(f"{what} has shape {values.shape}, expected {shape}")
    if not np.all(np.isfinite(values)):
        raise ShapeError(f"{what} contains non-finite entries")
    return values


@dataclass
class CellField:
    grid: StaggeredGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = _check_values(self.grid, self.values, self.grid.shape, "cell field")

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))

    @classmethod
    def from_function(cls, grid, fn, t=0.0):
        vals = np.asarray(fn(grid.cell_centers(), t), dtype=np.float64)
        return cls(grid, np.broadcast_to(vals, (grid.n_cells,)).reshape(grid.shape))

    @classmethod
    def full(cls, grid, value):
        return cls(grid, np.full(grid.shape, float(value)))

    def copy(self):
        return CellField(self.grid, self.values.copy())


@dataclass
class FaceField:
    grid: StaggeredGrid
    components: tuple  # one array per axis, shape grid.face_shape(axis)

    def __post_init__(self):
        comps = []
        for a, comp in enumerate(self.components):
            comps.append(_check_values(self.grid, comp, self.grid.face_shape(a), f"face field axis {a}"))
        self.components = tuple(comps)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, tuple(np.zeros(grid.face_shape(a)) for a in range(grid.dim)))

    def copy(self):
        return FaceField(self.grid, tuple(c.copy() for c in self.components))


class BoundaryData:
    """Dirichlet trace g(x, t) for u, one provider per (axis, side).

    The steady problem prescribes u = -u_b on the boundary; drivers store the
    actual trace g = -u_b here so the sign convention stays at one site.
    Providers follow the coefficient-provider contract: ``g(points, t)`` with
    points (n, d), vectorized, side-effect free.  Numbers are wrapped.
    """

    def __init__(self, providers):
        self._providers = {}
        for key, g in providers.items():
            if callable(g):
                self._providers[key] = g
            else:
                self._providers[key] = (lambda v: lambda pts, t: v)(float(g))

    @classmethod
    def zero(cls, grid):
        return cls.constant(grid, 0.0)

    @classmethod
    def constant(cls, grid, value):
        keys = [(a, s) for a in range(grid.dim) for s in ("lo", "hi")]
        return cls({k: value for k in keys})

    @classmethod
    def from_function(cls, grid, fn):
        keys = [(a, s) for a in range(grid.dim) for s in ("lo", "hi")]
        return cls({k: fn for k in keys})

    def trace(self, grid, axis, side, t):
        """Trace values on one boundary, shaped like that boundary slice."""
        g = self._providers[(axis, side)]
        pts = grid.boundary_midpoints(axis, side)
        vals = np.asarray(g(pts, t), dtype=np.float64)
        out_shape = tuple(c for a, c in enumerate(grid.cells) if a != axis)
        return np.broadcast_to(vals, (pts.shape[0],)).reshape(out_shape or ())


def gradient(u: CellField, bdata: BoundaryData, t: float) -> FaceField:
    """Face-normal gradient; boundary faces use the ghost value 2g - u_adj,
    which pins the trace at the face to second order and keeps adjointness."""
    grid = u.grid
    comps = []
    for a in range(grid.dim):
        h = grid.spacing[a]
        comp = np.empty(grid.face_shape(a))
        ndsl = lambda i: tuple(
            (i if ax == a else slice(None)) for ax in range(grid.dim)
        )
        comp[ndsl(slice(1, -1))] = np.diff(u.values, axis=a) / h
        g_lo = bdata.trace(grid, a, "lo", t)
        g_hi = bdata.trace(grid, a, "hi", t)
        comp[ndsl(0)] = 2.0 * (u.values[ndsl(0)] - g_lo) / h
        comp[ndsl(-1)] = 2.0 * (g_hi - u.values[ndsl(-1)]) / h
        comps.append(comp)
    return FaceField(grid, tuple(comps))


def divergence(m: FaceField) -> CellField:
    grid = m.grid
    out = np.zeros(grid.shape)
    for a in range(grid.dim):
        out += np.diff(m.components[a], axis=a) / grid.spacing[a]
    return CellField(grid, out)


def _same_grid(a, b):
    if a.grid is not b.grid and (
        a.grid.cells != b.grid.cells or a.grid.extents != b.grid.extents
    ):
        raise ShapeError("fields live on different grids")


def cell_dot(a: CellField, b: CellField) -> float:
    _same_grid(a, b)
    return float(np.sum(a.values * b.values) * a.grid.cell_volume)


def face_dot(a: FaceField, b: FaceField) -> float:
    _same_grid(a, b)
    total = 0.0
    for ax in range(a.grid.dim):
        w = a.grid.face_weights(ax)
        total += float(np.sum(w * a.components[ax] * b.components[ax]))
    return total


def cell_norm_p(u: CellField, p: float) -> float:
    """Volume-weighted L^p norm of a cell field."""
    if p < 1.0:
        raise ShapeError(f"norm exponent must be >= 1, got {p}")
    return float(
        (np.sum(np.abs(u.values) ** p) * u.grid.cell_volume) ** (1.0 / p)
    )


def face_norm_p(m: FaceField, p: float) -> float:
    if p < 1.0:
        raise ShapeError(f"norm exponent must be >= 1, got {p}")
    total = 0.0
    for ax in range(m.grid.dim):
        w = m.grid.face_weights(ax)
        total += float(np.sum(w * np.abs(m.components[ax]) ** p))
    return total ** (1.0 / p)


def check_adjointness(grid: StaggeredGrid, seed: int) -> float:
    """Normalized defect of the summation-by-parts identity.

    Draws a random cell field (zero boundary data) and a random face field
    with vanishing boundary faces and returns
    |<m, grad u> + <div m, u>| / (|<m, grad u>| + |<div m, u>|).
    """
    rng = np.random.default_rng(seed)
    u = CellField(grid, rng.standard_normal(grid.shape))
    comps = []
    for a in range(grid.dim):
        c = rng.standard_normal(grid.face_shape(a))
        sl = [slice(None)] * grid.dim
        sl[a] = 0
        c[tuple(sl)] = 0.0
        sl[a] = -1
        c[tuple(sl)] = 0.0
        comps.append(c)
    m = FaceField(grid, tuple(comps))
    t1 = face_dot(m, gradient(u, BoundaryData.zero(grid), 0.0))
    t2 = cell_dot(divergence(m), u)
    return abs(t1 + t2) / (abs(t1) + abs(t2) + 1e-300)


def cell_rows(u: CellField):
    """(header, rows) pairs for CSV export, one row per cell."""
    grid = u.grid
    header = ["x", "y"][: grid.dim] + ["value"]
    pts = grid.cell_centers()
    vals = u.values.ravel()
    rows = [list(pts[i]) + [vals[i]] for i in range(grid.n_cells)]
    return header, rows


def face_rows(m: FaceField, axis: int):
    grid = m.grid
    header = ["x", "y"][: grid.dim] + ["value"]
    pts = grid.face_midpoints(axis)
    vals = m.components[axis].ravel()
    rows = [list(pts[i]) + [vals[i]] for i in range(vals.size)]
    return header, rows
