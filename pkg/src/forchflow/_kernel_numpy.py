"""Pure-NumPy fallback for the batched drag-law inversion.

Given a generalized polynomial drag law

    F(z) = sum_k a_k z**alpha_k,   0 = alpha_0 < alpha_1 < ... < alpha_N,

the kernel solves  s * F(s) = xi  for the unique non-negative root s, one
root per batch element.  The left-hand side G(s) = sum_k a_k s**(alpha_k+1)
is strictly increasing and convex (all exponents >= 1), with
G'(s) >= a_0 > 0, so a safeguarded Newton iteration with a maintained
bisection bracket converges unconditionally.

This module is the reference implementation; ``forchflow._fastkernel`` is a
compiled mirror with the same contract.  All vectorization happens over the
batch, with boolean compression so converged elements drop out early.
"""

import numpy as np


def relation_value(s, coeffs, alphas):
    """G(s) = s * F(s), elementwise; ``coeffs`` has one row per element."""
    out = np.zeros_like(s)
    for k in range(alphas.shape[0]):
        out += coeffs[:, k] * s ** (alphas[k] + 1.0)
    return out


def relation_derivative(s, coeffs, alphas):
    """G'(s) = sum_k a_k (alpha_k + 1) s**alpha_k; equals a_0 at s = 0."""
    out = np.zeros_like(s)
    for k in range(alphas.shape[0]):
        out += coeffs[:, k] * (alphas[k] + 1.0) * s ** alphas[k]
    return out


def invert_batch(xi, coeffs, alphas, rtol=1e-13, max_iter=200):
    """Solve s*F(s) = xi elementwise for s >= 0.

    Parameters
    ----------
    xi : (n,) float array, all entries >= 0
    coeffs : (n, k) float array of polynomial coefficients per element
    alphas : (k,) float array of exponents, alphas[0] == 0
    rtol : relative residual tolerance, |G(s) - xi| <= rtol*xi + 1e-300
    max_iter : iteration budget per element

    Returns
    -------
    s : (n,) float array of roots
    n_bisect : int, number of bisection fallback steps taken (diagnostic)

    Raises
    ------
    RuntimeError if some element fails to converge; the message carries the
    last bracket of the worst offender.
    """
    n = xi.shape[0]
    s = np.zeros(n)
    idx = np.flatnonzero(xi > 0.0)
    if idx.size == 0:
        return s, 0

    xw = xi[idx]
    cw = coeffs[idx]
    lo = np.zeros(idx.size)
    # G(s) >= a_0*s makes xi/a_0 an upper bound; doubling is a pure safeguard.
    hi = np.maximum(1.0, xw / cw[:, 0])
    for _ in range(64):
        low = relation_value(hi, cw, alphas) < xw
        if not low.any():
            break
        hi[low] *= 2.0

    cur = np.minimum(xw / cw[:, 0], hi)
    tol = rtol * xw + 1e-300
    n_bisect = 0
    work = np.arange(idx.size)

    for _ in range(max_iter):
        g = relation_value(cur[work], cw[work], alphas) - xw[work]
        stuck = (hi[work] - lo[work]) <= 4.0 * np.spacing(hi[work])
        done = (np.abs(g) <= tol[work]) | stuck
        if done.any():
            keep = ~done
            work = work[keep]
            g = g[keep]
            if work.size == 0:
                break
        above = g > 0.0
        hi[work[above]] = cur[work[above]]
        lo[work[~above]] = cur[work[~above]]
        gp = relation_derivative(cur[work], cw[work], alphas)
        step = cur[work] - g / gp
        inside = (step > lo[work]) & (step < hi[work]) & np.isfinite(step)
        n_bisect += int(np.count_nonzero(~inside))
        cur[work] = np.where(inside, step, 0.5 * (lo[work] + hi[work]))
    else:
        if work.size:
            worst = work[0]
            raise RuntimeError(
                "drag-law inversion failed to converge: xi=%r, last bracket "
                "[%r, %r]" % (xw[worst], lo[worst], hi[worst])
            )

    s[idx] = cur
    return s, n_bisect
