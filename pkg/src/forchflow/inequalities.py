"""Randomized verification of the structural inequalities of the model.

Two families are covered, each with the explicit constants that the
continuity and monotonicity arguments actually produce:

* vector-field bounds for y -> F(|y|) y: a Lipschitz-type bound with
  C1 = 2**aN * (1 + aN) * (N + 1) * max_i a_i, and a coercivity bound
  with C2 = min(a0, aN / (2**(aN+1) * (aN+1))) / 2 for N >= 1.  For the
  pure-Darcy polynomial (N = 0) the sharp constant a0/2 is used instead:
  the two-term lower bound would double-count the single coefficient.
  The trailing /2 on C2 is a deliberate safety margin because the written
  argument is loose about an extra (1 + alpha_1) factor.

* elementary scalar inequalities for a, b >= 0, lam in (0, 1], p > 0:
  power-sum bound, Hoelder continuity of z**lam, the weighted square
  monotonicity bound (with 0/0 := 0 at a = b = 0), and the power-mean
  bound (a**lam - b**lam) a >= (a**r - b**r)/r*.

One correction is baked in.  The weighted square bound is often quoted as

    |a-b|**2 / (a**(1-lam) + b**(1-lam)) <= (a**lam - b**lam)(a - b),

but expanding the right-hand side times the denominator shows this holds
iff lam >= 1/2 (counterexample a=4, b=1, lam=0.1: lhs 2.008, rhs 0.446),
while the physically relevant exponents sit below 1/2.  The mean value
theorem gives the correct factor lam on the left, which is what
``weighted_square_monotonicity`` checks; the uncorrected form is still
evaluated and reported as a non-enforced diagnostic row so the defect
stays visible.

Margins are slack values, sign-normalized so that >= 0 means the
inequality holds; checks tolerate -1e-12 * (1 + |lhs| + |rhs|) of noise.
The randomized driver is deterministic for a fixed seed: samples are
drawn per chunk from spawned child seeds, so chunking (and optional
threading) never changes the stream.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ConfigurationError
from .model import ForchheimerPolynomial

__all__ = [
    "SuiteConfig",
    "InequalityReport",
    "continuity_constant",
    "monotonicity_constant",
    "continuity_margin",
    "monotonicity_margin",
    "elementary_margins",
    "run_randomized_suite",
    "MARGIN_RTOL",
]

MARGIN_RTOL = 1e-12

ELEMENTARY_NAMES = (
    "power_sum_bound",
    "holder_power_continuity",
    "weighted_square_monotonicity",
    "power_mean_bound",
)
AS_STATED_NAME = "weighted_square_monotonicity_as_stated"


@dataclass
class SuiteConfig:
    samples: int = 100_000
    seed: int = 0
    magnitude_range: tuple = (1e-6, 1e3)
    dims: tuple = (2, 3)
    p_max: float = 5.0
    x: tuple = (0.0,)
    t: float = 0.0
    chunk: int = 20_000
    n_jobs: int = 1

    def __post_init__(self):
        if self.samples < 1:
            raise ConfigurationError("samples must be >= 1")


@dataclass
class InequalityReport:
    name: str
    samples: int
    min_margin: float
    min_margin_normalized: float
    worst_case: dict
    constant_used: float
    seed: int
    passed: bool = True
    enforced: bool = True  # diagnostic-only rows never gate a run

    def row(self):
        return [
            self.name,
            self.samples,
            self.min_margin,
            self.min_margin_normalized,
            repr(self.worst_case),
            self.constant_used,
            self.seed,
            self.passed,
            self.enforced,
        ]

    @staticmethod
    def header():
        return [
            "name",
            "samples",
            "min_margin",
            "min_margin_normalized",
            "worst_case",
            "constant_used",
            "seed",
            "passed",
            "enforced",
        ]


def continuity_constant(poly: ForchheimerPolynomial, x, t) -> float:
    a = poly.coeffs_at(x, t)
    deg = poly.degree
    n = poly.n_terms - 1
    return 2.0**deg * (1.0 + deg) * (n + 1) * float(np.max(a))


def monotonicity_constant(poly: ForchheimerPolynomial, x, t) -> float:
    a = poly.coeffs_at(x, t)
    deg = poly.degree
    if poly.n_terms == 1:
        return float(a[0]) / 2.0  # sharp for the constant polynomial
    return min(float(a[0]), float(a[-1]) / (2.0 ** (deg + 1.0) * (deg + 1.0))) / 2.0


def _law_batch(coeffs, alphas, y):
    """F(|y|) y for a batch of vectors y with shape (n, d)."""
    mag = np.linalg.norm(y, axis=1)
    f = kernels.poly_value_batch(mag, coeffs, alphas)
    return f[:, None] * y, mag


def _continuity_margins(poly, x, t, y1, y0):
    c1 = continuity_constant(poly, x, t)
    coeffs = poly.coeffs_at(x, t)
    deg = poly.degree
    f1, m1 = _law_batch(coeffs, poly.exponents, y1)
    f0, m0 = _law_batch(coeffs, poly.exponents, y0)
    lhs = np.linalg.norm(f1 - f0, axis=1)
    rhs = c1 * (1.0 + m1**deg + m0**deg) * np.linalg.norm(y1 - y0, axis=1)
    scale = 1.0 + np.abs(lhs) + np.abs(rhs)
    return rhs - lhs, scale, c1


def _monotonicity_margins(poly, x, t, y1, y0):
    c2 = monotonicity_constant(poly, x, t)
    coeffs = poly.coeffs_at(x, t)
    s = poly.degree + 2.0
    f1, _ = _law_batch(coeffs, poly.exponents, y1)
    f0, _ = _law_batch(coeffs, poly.exponents, y0)
    diff = y1 - y0
    lhs = np.sum((f1 - f0) * diff, axis=1)
    dn = np.linalg.norm(diff, axis=1)
    rhs = c2 * (dn**2 + dn**s)
    scale = 1.0 + np.abs(lhs) + np.abs(rhs)
    return lhs - rhs, scale, c2


def continuity_margin(poly, x, t, y_prime, y) -> float:
    """Slack of the Lipschitz-type bound at a single vector pair."""
    m, _, _ = _continuity_margins(
        poly, x, t, np.atleast_2d(np.asarray(y_prime, float)),
        np.atleast_2d(np.asarray(y, float)),
    )
    return float(m[0])


def monotonicity_margin(poly, x, t, y_prime, y) -> float:
    m, _, _ = _monotonicity_margins(
        poly, x, t, np.atleast_2d(np.asarray(y_prime, float)),
        np.atleast_2d(np.asarray(y, float)),
    )
    return float(m[0])


def elementary_margins(a, b, lam, p):
    """The four scalar margins at (a, b, lam, p); scalars or arrays.

    Returns a dict keyed by ELEMENTARY_NAMES (plus the non-enforced
    AS_STATED_NAME diagnostic) mapping to (margin, scale).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    lam = np.asarray(lam, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if np.any(a < 0) or np.any(b < 0):
        raise ConfigurationError("elementary inequalities need a, b >= 0")

    out = {}
    lhs = (a + b) ** p
    rhs = 2.0 ** np.abs(p - 1.0) * (a**p + b**p)
    out[ELEMENTARY_NAMES[0]] = (rhs - lhs, 1.0 + np.abs(lhs) + np.abs(rhs))

    lhs = np.abs(a**lam - b**lam)
    rhs = np.abs(a - b) ** lam
    out[ELEMENTARY_NAMES[1]] = (rhs - lhs, 1.0 + np.abs(lhs) + np.abs(rhs))

    denom = a ** (1.0 - lam) + b ** (1.0 - lam)
    with np.errstate(invalid="ignore", divide="ignore"):
        quotient = np.where(denom > 0.0, (a - b) ** 2 / denom, 0.0)  # 0/0 := 0
    rhs = (a**lam - b**lam) * (a - b)
    lhs = lam * quotient  # mean-value-theorem factor, see module docstring
    out[ELEMENTARY_NAMES[2]] = (rhs - lhs, 1.0 + np.abs(lhs) + np.abs(rhs))
    out[AS_STATED_NAME] = (rhs - quotient, 1.0 + np.abs(quotient) + np.abs(rhs))

    r = 1.0 + lam
    r_star = 1.0 + 1.0 / lam
    lhs = (a**r - b**r) / r_star
    rhs = (a**lam - b**lam) * a
    out[ELEMENTARY_NAMES[3]] = (rhs - lhs, 1.0 + np.abs(lhs) + np.abs(rhs))
    return out


def _log_uniform(rng, lo, hi, size):
    return np.exp(rng.uniform(np.log(lo), np.log(hi), size=size))


def _vector_chunk(poly, cfg, seed, n, dim, kind):
    rng = np.random.default_rng(seed)
    lo, hi = cfg.magnitude_range
    y1 = _log_uniform(rng, lo, hi, (n, dim)) * rng.choice([-1.0, 1.0], (n, dim))
    y0 = _log_uniform(rng, lo, hi, (n, dim)) * rng.choice([-1.0, 1.0], (n, dim))
    # fold in degenerate pairs so equality cases stay covered
    y0[: max(1, n // 100)] = 0.0
    y1[1 : max(2, n // 50)] = y0[1 : max(2, n // 50)]
    if kind == "continuity":
        return _continuity_margins(poly, cfg.x, cfg.t, y1, y0) + (y1, y0)
    return _monotonicity_margins(poly, cfg.x, cfg.t, y1, y0) + (y1, y0)


def _scalar_chunk(cfg, seed, n):
    rng = np.random.default_rng(seed)
    lo, hi = cfg.magnitude_range
    a = _log_uniform(rng, lo, hi, n)
    b = _log_uniform(rng, lo, hi, n)
    a[: max(1, n // 100)] = 0.0
    b[1 : max(2, n // 50)] = a[1 : max(2, n // 50)]
    lam = rng.uniform(0.0, 1.0, n)
    lam = np.where(lam == 0.0, 1.0, lam)  # lam in (0, 1]
    p = rng.uniform(0.0, cfg.p_max, n)
    p = np.where(p == 0.0, cfg.p_max, p)
    return elementary_margins(a, b, lam, p), (a, b, lam, p)


def _chunk_sizes(total, chunk):
    sizes = [chunk] * (total // chunk)
    if total % chunk:
        sizes.append(total % chunk)
    return sizes


def run_randomized_suite(poly: ForchheimerPolynomial, cfg: SuiteConfig):
    """Run all checks; returns a list of InequalityReport, worst case first
    inside each report.  Deterministic for a fixed seed and sample count."""
    reports = []
    root = np.random.SeedSequence(cfg.seed)

    jobs = []  # (name, constant, chunk evaluator)
    for dim in cfg.dims:
        jobs.append((f"momentum_continuity_d{dim}", "continuity", dim))
        jobs.append((f"momentum_monotonicity_d{dim}", "monotonicity", dim))

    def run_vector_job(args):
        name, kind, dim, seeds = args
        best = None
        const = 0.0
        for seed, n in seeds:
            margins, scale, const, y1, y0 = _vector_chunk(poly, cfg, seed, n, dim, kind)
            norm = margins / scale
            i = int(np.argmin(norm))
            cand = (norm[i], margins[i], {"y_prime": y1[i].tolist(), "y": y0[i].tolist()})
            if best is None or cand[0] < best[0]:
                best = cand
        return name, const, best

    sizes = _chunk_sizes(cfg.samples, cfg.chunk)
    vec_args = []
    for name, kind, dim in jobs:
        child = root.spawn(1)[0]
        seeds = list(zip(child.spawn(len(sizes)), sizes))
        vec_args.append((name, kind, dim, seeds))

    if cfg.n_jobs > 1:
        with ThreadPoolExecutor(cfg.n_jobs) as pool:
            vec_results = list(pool.map(run_vector_job, vec_args))
    else:
        vec_results = [run_vector_job(a) for a in vec_args]

    for name, const, best in vec_results:
        norm_margin, margin, worst = best
        reports.append(
            InequalityReport(
                name=name,
                samples=cfg.samples,
                min_margin=float(margin),
                min_margin_normalized=float(norm_margin),
                worst_case=worst,
                constant_used=float(const),
                seed=cfg.seed,
                passed=bool(norm_margin >= -MARGIN_RTOL),
            )
        )

    # scalar family: one report per inequality over a shared sample stream
    scalar_names = ELEMENTARY_NAMES + (AS_STATED_NAME,)
    child = root.spawn(1)[0]
    seeds = list(zip(child.spawn(len(sizes)), sizes))
    best = {name: None for name in scalar_names}
    for seed, n in seeds:
        margins, inputs = _scalar_chunk(cfg, seed, n)
        a, b, lam, p = inputs
        for name in scalar_names:
            m, scale = margins[name]
            norm = m / scale
            i = int(np.argmin(norm))
            cand = (
                norm[i],
                m[i],
                {"a": float(a[i]), "b": float(b[i]), "lam": float(lam[i]), "p": float(p[i])},
            )
            if best[name] is None or cand[0] < best[name][0]:
                best[name] = cand
    for name in scalar_names:
        norm_margin, margin, worst = best[name]
        reports.append(
            InequalityReport(
                name=name,
                samples=cfg.samples,
                min_margin=float(margin),
                min_margin_normalized=float(norm_margin),
                worst_case=worst,
                constant_used=float("nan"),
                seed=cfg.seed,
                passed=bool(norm_margin >= -MARGIN_RTOL),
                enforced=name != AS_STATED_NAME,
            )
        )
    return reports
