"""Constitutive model: drag polynomial, isentropic gas law, conductivity.

The momentum law is F(x,t,|m|) m = -grad(u) with a generalized polynomial

    F(x,t,z) = a_0(x,t) + a_1(x,t) z**alpha_1 + ... + a_N(x,t) z**alpha_N,

exponents 0 = alpha_0 < alpha_1 < ... < alpha_N and coefficients bounded
away from zero for a_0 and a_N.  Because s -> s*F(s) is strictly increasing
onto [0, inf), the law inverts to m = -K(x,t,|grad u|) grad u with
K(xi) = 1/F(s(xi)) where s(xi) solves s*F(s) = xi.

The gas law p = c*rho**gamma turns the mass flux relation into the
pseudo-pressure variable u with rho = ((gamma+1)/(c*gamma))**lam * u**lam,
lam = 1/(gamma+1).  Several test and regression configurations use lam
directly (including lam in [0.5, 1] that no gamma > 1 produces), so every
solver entry point accepts either a GasModel or a bare lam value.

Coefficient providers are callables ``a(points, t)`` taking an (n, d) array
of positions and returning a scalar or (n,) array; they must be NumPy
vectorized and side-effect free.  Plain numbers are wrapped automatically.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError, ConsistencyError, DomainError

__all__ = [
    "GasModel",
    "ForchheimerPolynomial",
    "DerivedExponents",
    "ConductivityValue",
    "invert_flux_relation",
    "conductivity",
    "conductivity_with_derivative",
    "flux_magnitude",
    "density_from_pseudo_pressure",
    "pseudo_pressure_from_density",
    "derive_exponents",
    "resolve_lambda",
    "signed_power",
    "smoothed_power_derivative",
]

DERIVATIVE_CLAMP = 1e12


@dataclass(frozen=True)
class GasModel:
    """Isentropic gas p = c*rho**gamma with c, gamma > 1."""

    c: float
    gamma: float

    def __post_init__(self):
        if not (self.c > 1.0 and np.isfinite(self.c)):
            raise ConfigurationError(f"gas constant c must be > 1, got {self.c}")
        if not (self.gamma > 1.0 and np.isfinite(self.gamma)):
            raise ConfigurationError(f"gas exponent gamma must be > 1, got {self.gamma}")

    @property
    def lam(self) -> float:
        """Pseudo-pressure exponent 1/(gamma+1), in (0, 0.5)."""
        return 1.0 / (self.gamma + 1.0)

    @property
    def porosity_scale(self) -> float:
        """Factor ((gamma+1)/(c*gamma))**lam absorbed into the porosity.

        Applying it converts the raw continuity equation in rho to the
        rescaled system in u; controlled by the ``absorb_gas_constant``
        switch of the run configuration (default on).
        """
        return ((self.gamma + 1.0) / (self.c * self.gamma)) ** self.lam


def _as_provider(coef):
    if callable(coef):
        return coef
    value = float(coef)

    def const(points, t, _v=value):
        return _v

    const.constant_value = value
    return const


class ForchheimerPolynomial:
    """Drag polynomial with constant or space/time dependent coefficients."""

    def __init__(self, exponents, coefficients):
        exps = np.asarray(exponents, dtype=np.float64)
        if exps.ndim != 1 or exps.size == 0:
            raise ConfigurationError("exponents must be a non-empty 1d sequence")
        if exps[0] != 0.0:
            raise ConfigurationError(f"first exponent must be 0, got {exps[0]}")
        if not np.all(np.diff(exps) > 0.0):
            raise ConfigurationError("exponents must be strictly increasing")
        if len(coefficients) != exps.size:
            raise ConfigurationError(
                f"{len(coefficients)} coefficients for {exps.size} exponents"
            )
        self.exponents = exps
        self.providers = [_as_provider(c) for c in coefficients]
        self.is_constant = all(hasattr(p, "constant_value") for p in self.providers)
        if self.is_constant:
            self._const = np.array([p.constant_value for p in self.providers])
            self._check_rows(self._const[None, :], "constant coefficients")

    @property
    def degree(self) -> float:
        return float(self.exponents[-1])

    @property
    def n_terms(self) -> int:
        return int(self.exponents.size)

    def _check_rows(self, rows, where):
        if not np.all(np.isfinite(rows)):
            raise ConfigurationError(f"non-finite coefficient in {where}")
        if np.any(rows < 0.0):
            raise ConfigurationError(f"negative coefficient in {where}")
        if np.any(rows[:, 0] <= 0.0):
            raise ConfigurationError(f"a_0 must be strictly positive in {where}")
        if np.any(rows[:, -1] <= 0.0) and self.n_terms > 1:
            raise ConfigurationError(f"a_N must be strictly positive in {where}")

    def coeffs_at(self, x, t):
        """Coefficient row (k,) at a single point."""
        pts = np.atleast_2d(np.asarray(x, dtype=np.float64))
        return self.coeffs_on(pts, t)[0]

    def coeffs_on(self, points, t):
        """Coefficient matrix (n, k) at many points; constant fast path."""
        points = np.asarray(points, dtype=np.float64)
        n = points.shape[0]
        if self.is_constant:
            return np.broadcast_to(self._const, (n, self.n_terms))
        cols = []
        for p in self.providers:
            v = np.asarray(p(points, t), dtype=np.float64)
            cols.append(np.broadcast_to(v, (n,)))
        return np.column_stack(cols)

    def value(self, x, t, z):
        """F(x,t,z) for scalar z >= 0."""
        if z < 0.0:
            raise DomainError(f"drag polynomial argument must be >= 0, got {z}")
        c = self.coeffs_at(x, t)
        return float(kernels.poly_value_batch(np.array([z]), c, self.exponents)[0])

    def validate_samples(self, points, times):
        """Check coefficient bounds on a sampling grid; raises on violation."""
        for t in np.atleast_1d(times):
            rows = self.coeffs_on(points, float(t))
            self._check_rows(np.asarray(rows), f"samples at t={t}")


@dataclass(frozen=True)
class DerivedExponents:
    """Conjugate exponent bookkeeping for the norms used by the estimates."""

    s: float
    s_star: float
    r: float
    r_star: float
    alpha: float
    lam: float
    h3_satisfied: bool


def resolve_lambda(gas_or_lam) -> float:
    """Accept a GasModel or a bare exponent; lam must lie in (0, 1]."""
    lam = gas_or_lam.lam if isinstance(gas_or_lam, GasModel) else float(gas_or_lam)
    if not (0.0 < lam <= 1.0):
        raise ConfigurationError(f"lambda must be in (0, 1], got {lam}")
    return lam


def derive_exponents(poly: ForchheimerPolynomial, gas_or_lam) -> DerivedExponents:
    """Exponents (s, s*, r, r*) driven by the polynomial degree and lam.

    Also evaluates the degree condition deg(F) <= gamma, equivalently
    r <= s*; a violation only triggers a warning because it enters the
    transient estimates, not the solvers themselves.
    """
    lam = resolve_lambda(gas_or_lam)
    deg = poly.degree
    s = deg + 2.0
    alpha = deg / (deg + 1.0)
    s_star = 2.0 - alpha
    r = 1.0 + lam
    r_star = 1.0 + 1.0 / lam
    h3 = r <= s_star
    if not h3:
        warnings.warn(
            f"degree condition violated: r={r} > s*={s_star} "
            f"(polynomial degree {deg} too large for lambda={lam}); "
            "transient a-priori bounds are not covered",
            stacklevel=2,
        )
    return DerivedExponents(
        s=s, s_star=s_star, r=r, r_star=r_star, alpha=alpha, lam=lam, h3_satisfied=h3
    )


def invert_flux_relation(poly: ForchheimerPolynomial, x, t, xi) -> float:
    """The unique s >= 0 with s*F(x,t,s) = xi."""
    if xi < 0.0:
        raise DomainError(f"inversion argument must be >= 0, got {xi}")
    c = poly.coeffs_at(x, t)
    s, _ = kernels.invert_batch(np.array([xi], dtype=np.float64), c, poly.exponents)
    return float(s[0])


def conductivity(poly: ForchheimerPolynomial, x, t, xi) -> float:
    """K(x,t,xi) = 1/F(s(xi)); equals 1/a_0 at xi = 0, non-increasing."""
    if xi < 0.0:
        raise DomainError(f"conductivity argument must be >= 0, got {xi}")
    c = poly.coeffs_at(x, t)
    s, _ = kernels.invert_batch(np.array([xi], dtype=np.float64), c, poly.exponents)
    f = kernels.poly_value_batch(s, c, poly.exponents)
    return float(1.0 / f[0])


@dataclass(frozen=True)
class ConductivityValue:
    k: float
    dk_dxi: float
    clamped: bool


def conductivity_with_derivative(poly: ForchheimerPolynomial, x, t, xi) -> ConductivityValue:
    """K and dK/dxi by implicit differentiation of s*F(s) = xi.

    dK/dxi = -F'(s) / (F(s)**2 * (F(s) + s F'(s))).  At xi = 0 the one-sided
    limit is 0 when alpha_1 > 1, -a_1/a_0**3 when alpha_1 == 1, and -inf when
    alpha_1 < 1; infinite or overlarge values are clamped to +-1e12 with the
    ``clamped`` flag raised so Newton assemblies can drop to Picard there.
    """
    if xi < 0.0:
        raise DomainError(f"conductivity argument must be >= 0, got {xi}")
    c = poly.coeffs_at(x, t)
    alphas = poly.exponents
    s_arr, _ = kernels.invert_batch(np.array([xi], dtype=np.float64), c, alphas)
    s = float(s_arr[0])
    f = float(kernels.poly_value_batch(np.array([s]), c, alphas)[0])
    k = 1.0 / f

    if s > 0.0:
        fprime = float(np.sum(c[1:] * alphas[1:] * s ** (alphas[1:] - 1.0)))
    else:
        fprime = 0.0
        for ck, ak in zip(c[1:], alphas[1:]):
            if ck == 0.0:
                continue
            if ak < 1.0:
                fprime = np.inf
                break
            if ak == 1.0:
                fprime += ck
    denom = f * f * (f + s * fprime) if np.isfinite(fprime) else np.inf
    dk = float(-fprime / denom) if np.isfinite(fprime) else -np.inf
    clamped = bool(not np.isfinite(dk) or abs(dk) > DERIVATIVE_CLAMP)
    if clamped:
        dk = -DERIVATIVE_CLAMP if dk < 0 else DERIVATIVE_CLAMP
    return ConductivityValue(k=k, dk_dxi=dk, clamped=clamped)


def flux_magnitude(poly: ForchheimerPolynomial, x, t, xi) -> float:
    """|m| = K(xi)*xi, asserted against the inverse relation to 1e-12."""
    if xi < 0.0:
        raise DomainError(f"flux magnitude argument must be >= 0, got {xi}")
    s = invert_flux_relation(poly, x, t, xi)
    mag = conductivity(poly, x, t, xi) * xi
    if abs(mag - s) > 1e-12 * max(1.0, abs(s)):
        raise ConsistencyError(
            f"flux identity K(xi)*xi == inverse(xi) violated: {mag} vs {s} at xi={xi}"
        )
    return mag


def density_from_pseudo_pressure(gas: GasModel, u) -> float:
    """rho = ((gamma+1)/(c*gamma))**lam * u**lam, monotone with rho(0)=0."""
    u = np.asarray(u, dtype=np.float64)
    if np.any(u < 0.0):
        raise DomainError("pseudo-pressure must be >= 0")
    out = gas.porosity_scale * u**gas.lam
    return float(out) if out.ndim == 0 else out


def pseudo_pressure_from_density(gas: GasModel, rho) -> float:
    """Inverse map u = c*gamma*rho**(gamma+1)/(gamma+1)."""
    rho = np.asarray(rho, dtype=np.float64)
    if np.any(rho < 0.0):
        raise DomainError("density must be >= 0")
    out = gas.c * gas.gamma * rho ** (gas.gamma + 1.0) / (gas.gamma + 1.0)
    return float(out) if out.ndim == 0 else out


def signed_power(u, lam):
    """Odd extension sign(u)|u|**lam of the accumulation nonlinearity."""
    u = np.asarray(u, dtype=np.float64)
    out = np.sign(u) * np.abs(u) ** lam
    return float(out) if out.ndim == 0 else out


def smoothed_power_derivative(u, lam, delta):
    """Regularized derivative lam*(u**2 + delta**2)**((lam-1)/2).

    Only the Jacobian uses this; residuals keep the exact nonlinearity, so
    converged iterates solve the unmodified system.
    """
    u = np.asarray(u, dtype=np.float64)
    out = lam * (u * u + delta * delta) ** ((lam - 1.0) / 2.0)
    return float(out) if out.ndim == 0 else out
