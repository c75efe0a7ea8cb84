"""Numerical kernels: log-domain reductions, SPD factorization, Gaussian
density/sampling, and the standard normal quantile.

Everything here is a pure function of its inputs; random state is always an
explicit ``numpy.random.Generator`` argument.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import erfc, logsumexp

LOG_2PI = float(np.log(2.0 * np.pi))
_SQRT_2PI = float(np.sqrt(2.0 * np.pi))

# Relative diagonal jitter ladder tried when a covariance update produces a
# matrix that is numerically not positive definite.
JITTER_SCALES = (0.0, 1e-10, 1e-8, 1e-6, 1e-4)


def log_sum_exp(values) -> float:
    """Return ``log(sum(exp(values)))`` computed with a max shift.

    Returns -inf iff every entry is -inf. Raises on empty input.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("empty vector")
    return float(logsumexp(v))


@dataclass(frozen=True)
class SpdMatrix:
    """A symmetric positive definite matrix with its cached Cholesky factor.

    Attributes
    ----------
    entries : (p, p) ndarray
        The matrix itself (possibly including the diagonal jitter that was
        needed to factorize it).
    chol : (p, p) ndarray
        Lower-triangular factor L with ``L @ L.T == entries``.
    log_det : float
        ``2 * sum(log(diag(L)))``.
    jitter : float
        Additive diagonal value that was required for factorization
        (0.0 when the input factorized cleanly).
    """

    entries: np.ndarray
    chol: np.ndarray
    log_det: float
    jitter: float = 0.0

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


def cholesky_spd(matrix, jitter_scales=JITTER_SCALES) -> SpdMatrix:
    """Factorize a symmetric matrix, escalating diagonal jitter if needed.

    The jitter ladder adds ``eps * mean(diag(matrix))`` to the diagonal for
    increasing ``eps`` until the factorization succeeds.

    Raises
    ------
    ValueError
        If the input is not square or not symmetric (1e-12 relative).
    numpy.linalg.LinAlgError
        If factorization still fails at the largest jitter.
    """
    a = np.asarray(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = 1.0 + np.max(np.abs(a)) if a.size else 1.0
    if np.max(np.abs(a - a.T)) > 1e-12 * scale:
        raise ValueError("matrix is not symmetric")

    mean_diag = float(np.mean(np.diag(a)))
    for eps in jitter_scales:
        jitter = eps * mean_diag
        try:
            chol = np.linalg.cholesky(a + jitter * np.eye(a.shape[0]))
        except np.linalg.LinAlgError:
            continue
        log_det = 2.0 * float(np.sum(np.log(np.diag(chol))))
        return SpdMatrix(
            entries=a + jitter * np.eye(a.shape[0]),
            chol=chol,
            log_det=log_det,
            jitter=jitter,
        )
    raise np.linalg.LinAlgError("not positive definite")


def mvn_log_pdf(points, mean, cov: SpdMatrix):
    """Log density of N(mean, cov) at one point ``(p,)`` or a batch ``(N, p)``.

    Solved by triangular substitution against the cached Cholesky factor;
    no explicit inverse is formed.
    """
    x = np.asarray(points, dtype=float)
    mu = np.asarray(mean, dtype=float)
    p = cov.dim
    if mu.shape != (p,):
        raise ValueError(f"mean has dimension {mu.shape}, covariance is {p}x{p}")
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    if x2.ndim != 2 or x2.shape[1] != p:
        raise ValueError(f"points have dimension {x.shape[-1]}, expected {p}")
    sol = solve_triangular(cov.chol, (x2 - mu).T, lower=True)
    with np.errstate(over="ignore"):  # far points overflow to -inf density
        quad = np.sum(sol * sol, axis=0)
    out = -0.5 * (p * LOG_2PI + cov.log_det + quad)
    return float(out[0]) if single else out


def mvn_sample(mean, cov: SpdMatrix, rng: np.random.Generator, size: int | None = None):
    """Draw from N(mean, cov): ``mean + L z`` with z standard normal.

    Returns a ``(p,)`` vector when ``size`` is None, else ``(size, p)``.
    """
    mu = np.asarray(mean, dtype=float)
    if size is None:
        z = rng.standard_normal(cov.dim)
        return mu + cov.chol @ z
    z = rng.standard_normal((size, cov.dim))
    return mu + z @ cov.chol.T


def std_normal_cdf(x):
    """Standard normal CDF via the complementary error function."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * erfc(-x / np.sqrt(2.0))
    return float(out) if out.ndim == 0 else out


# Coefficients of Acklam's rational approximation to the normal quantile.
_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def _acklam(u: np.ndarray) -> np.ndarray:
    x = np.empty_like(u)
    lo = u < _P_LOW
    hi = u > 1.0 - _P_LOW
    mid = ~(lo | hi)
    if np.any(mid):
        q = u[mid] - 0.5
        r = q * q
        num = ((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]
        den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
        x[mid] = q * num / den
    if np.any(lo):
        q = np.sqrt(-2.0 * np.log(u[lo]))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        x[lo] = num / den
    if np.any(hi):
        q = np.sqrt(-2.0 * np.log(1.0 - u[hi]))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        x[hi] = -num / den
    return x


def std_normal_quantile(u):
    """Inverse standard normal CDF, accurate to well below 1e-9 absolute.

    Acklam's rational approximation refined by one Newton step against the
    erfc-based CDF. Accepts scalars or arrays; arguments must lie in (0, 1).
    """
    arr = np.asarray(u, dtype=float)
    if arr.size and not np.all((arr > 0.0) & (arr < 1.0)):
        raise ValueError("quantile argument must lie in (0, 1)")
    flat = np.atleast_1d(arr).astype(float)
    x = _acklam(flat)
    pdf = np.exp(-0.5 * x * x) / _SQRT_2PI
    # Newton refinement. The residual is formed against whichever of the CDF
    # and the survival function is small at the working point, where erfc
    # carries full relative precision; 1 - u is exact for u >= 1/2.
    upper = flat > 0.5
    resid = np.where(
        upper,
        0.5 * erfc(x / np.sqrt(2.0)) - (1.0 - flat),  # S(x) - (1 - u)
        0.5 * erfc(-x / np.sqrt(2.0)) - flat,          # CDF(x) - u
    )
    # Where the density underflows (|x| > 38) the rational tail branch is
    # already the best available; skip the correction there.
    safe = pdf > 0.0
    corr = np.zeros_like(x)
    corr[safe] = resid[safe] / pdf[safe]
    x = x + np.where(upper, corr, -corr)
    if np.ndim(u) == 0:
        return float(x[0])
    return x.reshape(arr.shape)
