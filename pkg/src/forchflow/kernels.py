"""Kernel backend selection and batched polynomial helpers.

The only iterative hot loop in the package is the inversion of the monotone
relation s*F(s) = xi, evaluated once per face per nonlinear iteration.  Two
interchangeable implementations exist:

* ``forchflow._fastkernel`` -- Cython, built at install time when a compiler
  is available;
* ``forchflow._kernel_numpy`` -- pure NumPy, always present.

The compiled one wins when importable unless ``FORCHFLOW_KERNEL=python``
forces the fallback (``FORCHFLOW_KERNEL=compiled`` insists on the extension
and raises if it is missing).  ``python -m forchflow.benchmark`` times both.

Plain polynomial evaluations (no iteration) live here as NumPy code shared
by both backends.
"""

import os

import numpy as np

from . import _kernel_numpy
from .errors import NonConvergenceError

_choice = os.environ.get("FORCHFLOW_KERNEL", "").strip().lower()
if _choice in ("python", "numpy"):
    _impl = _kernel_numpy
    BACKEND = "numpy"
elif _choice in ("compiled", "cython", "c"):
    from . import _fastkernel as _impl  # ImportError here is intentional

    BACKEND = "compiled"
else:
    try:
        from . import _fastkernel as _impl

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernel_numpy
        BACKEND = "numpy"


def invert_batch(xi, coeffs, alphas, rtol=1e-13, max_iter=200):
    """Batched root of s*F(s) = xi; returns (s, n_bisect_fallbacks).

    ``coeffs`` may be a single (k,) row (constant coefficients) or (n, k).
    Entries of ``xi`` must be non-negative; the caller validates signs.
    """
    xi = np.ascontiguousarray(xi, dtype=np.float64)
    alphas = np.ascontiguousarray(alphas, dtype=np.float64)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    if coeffs.ndim == 1:
        coeffs = np.broadcast_to(coeffs, (xi.shape[0], coeffs.shape[0]))
    coeffs = np.ascontiguousarray(coeffs)
    try:
        return _impl.invert_batch(xi, coeffs, alphas, rtol, max_iter)
    except RuntimeError as exc:
        raise NonConvergenceError(str(exc)) from exc


def poly_value_batch(z, coeffs, alphas):
    """F(z) = sum_k a_k z**alpha_k elementwise (z >= 0)."""
    z = np.asarray(z, dtype=np.float64)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    out = np.zeros_like(z)
    for k in range(alphas.shape[0]):
        c = coeffs[k] if coeffs.ndim == 1 else coeffs[:, k]
        out += c * z ** alphas[k]
    return out


def poly_slope_times_z_batch(z, coeffs, alphas):
    """z * F'(z) = sum_k a_k alpha_k z**alpha_k; finite at z = 0."""
    z = np.asarray(z, dtype=np.float64)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    out = np.zeros_like(z)
    for k in range(alphas.shape[0]):
        if alphas[k] == 0.0:
            continue
        c = coeffs[k] if coeffs.ndim == 1 else coeffs[:, k]
        out += c * alphas[k] * z ** alphas[k]
    return out


def relation_derivative_batch(s, coeffs, alphas):
    """d(s F(s))/ds = F(s) + s F'(s); bounded below by a_0 > 0."""
    s = np.asarray(s, dtype=np.float64)
    coeffs = np.asarray(coeffs, dtype=np.float64)
    out = np.zeros_like(s)
    for k in range(alphas.shape[0]):
        c = coeffs[k] if coeffs.ndim == 1 else coeffs[:, k]
        out += c * (alphas[k] + 1.0) * s ** alphas[k]
    return out
