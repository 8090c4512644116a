# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled mirror of ``forchflow._kernel_numpy``.

Per-element safeguarded Newton with a maintained bisection bracket for
s * F(s) = xi, F a generalized polynomial with non-negative coefficients.
Elements converge independently, so the scalar loop beats the masked NumPy
iteration once batches stop being tiny.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, pow

cnp.import_array()


cdef inline double _gval(const double* c, const double* a, int k, double s) noexcept nogil:
    cdef double out = 0.0
    cdef int j
    for j in range(k):
        out += c[j] * pow(s, a[j] + 1.0)
    return out


cdef inline double _gder(const double* c, const double* a, int k, double s) noexcept nogil:
    cdef double out = 0.0
    cdef int j
    for j in range(k):
        out += c[j] * (a[j] + 1.0) * pow(s, a[j])
    return out


def invert_batch(const double[::1] xi, const double[:, ::1] coeffs,
                 const double[::1] alphas, double rtol=1e-13, int max_iter=200):
    """Same contract as the NumPy fallback: returns (roots, n_bisect)."""
    cdef Py_ssize_t n = xi.shape[0]
    cdef int k = <int> alphas.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n, dtype=np.float64)
    cdef double[::1] s = out
    cdef Py_ssize_t i
    cdef int it, n_bisect = 0
    cdef double x, lo, hi, cur, g, gp, step, tol
    cdef const double* crow
    cdef const double* ap = &alphas[0]
    cdef bint failed = False
    cdef Py_ssize_t fail_i = 0
    cdef double fail_lo = 0.0, fail_hi = 0.0

    with nogil:
        for i in range(n):
            x = xi[i]
            if x <= 0.0:
                s[i] = 0.0
                continue
            crow = &coeffs[i, 0]
            lo = 0.0
            hi = x / crow[0]
            if hi < 1.0:
                hi = 1.0
            it = 0
            while _gval(crow, ap, k, hi) < x and it < 64:
                hi *= 2.0
                it += 1
            cur = x / crow[0]
            if cur > hi:
                cur = hi
            tol = rtol * x + 1e-300
            for it in range(max_iter):
                g = _gval(crow, ap, k, cur) - x
                if fabs(g) <= tol or (hi - lo) <= 4.0 * 2.220446049250313e-16 * hi:
                    break
                if g > 0.0:
                    hi = cur
                else:
                    lo = cur
                gp = _gder(crow, ap, k, cur)
                step = cur - g / gp
                if step > lo and step < hi:
                    cur = step
                else:
                    cur = 0.5 * (lo + hi)
                    n_bisect += 1
            else:
                failed = True
                fail_i = i
                fail_lo = lo
                fail_hi = hi
                cur = 0.5 * (lo + hi)
            s[i] = cur

    if failed:
        raise RuntimeError(
            "drag-law inversion failed to converge: xi=%r, last bracket "
            "[%r, %r]" % (xi[fail_i], fail_lo, fail_hi)
        )
    return out, n_bisect
