"""Random-intercept logistic regression with a pseudo-marginal likelihood.

Each individual i contributes binary responses over T time points with a
shared Gaussian random intercept. The intractable per-individual likelihood
is estimated unbiasedly by averaging the conditional likelihood over
``inner_draws`` fresh intercept draws; the model likelihood estimate is the
product over individuals, carried in log domain (it spans hundreds of log
units for realistic data sizes).

Parameters are unconstrained: ``theta = (b1, b2, b3, log tau^2)`` with
intercept variance ``tau^2``. Priors: each slope ~ N(0, 50), tau ~ Gamma(1,
rate 0.1), with the change-of-variables Jacobian for log tau^2 included.

The inner average is the hot loop of the whole package. It is evaluated in
linear domain per individual, which is safe because every per-draw value is
a product of Bernoulli probabilities in (0, 1]: with E = exp(alpha) and
b_t = exp(c_t), the conditional likelihood equals
``prod_t b_t^{y_t} * E^{m} / prod_t (1 + b_t E)`` with  m = sum_t y_t, so a
draw costs one exp and a handful of multiplies instead of T softplus calls.
Draws default to float32 (the box this ships on is memory-bound; float64 is
available through ``dtype``); means and logs accumulate in float64, and any
overflowed entry is recomputed exactly in float64 log domain.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .base import TargetModel

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

_VAR_BETA = 50.0
_GAMMA_RATE = 0.1
_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class GlmmData:
    """Binary panel data: one row per individual, one column per time point."""

    responses: np.ndarray  # (n, T) in {0, 1}
    age: np.ndarray        # (n, T) centered age covariate
    smoking: np.ndarray    # (n,) in {0, 1}

    def __post_init__(self):
        y = np.asarray(self.responses)
        a = np.asarray(self.age, dtype=float)
        s = np.asarray(self.smoking)
        if y.ndim != 2 or a.shape != y.shape or s.shape != (y.shape[0],):
            raise ValueError("responses (n,T), age (n,T) and smoking (n,) must agree")
        if not np.isin(y, (0, 1)).all():
            raise ValueError("responses must be binary")
        object.__setattr__(self, "responses", y.astype(np.int8))
        object.__setattr__(self, "age", a)
        object.__setattr__(self, "smoking", s.astype(np.int8))

    @property
    def n_individuals(self) -> int:
        return self.responses.shape[0]

    @property
    def n_timepoints(self) -> int:
        return self.responses.shape[1]


def synthesize_glmm_data(n: int, n_timepoints: int, beta, tau2: float,
                         rng: np.random.Generator,
                         smoking_rate: float = 0.5) -> GlmmData:
    """Generate a data set at known slopes and intercept variance.

    Age is centered at the third time point (``A_ij = j - 3`` for j = 1..T).
    """
    beta = np.asarray(beta, dtype=float)
    age = np.tile(np.arange(1, n_timepoints + 1, dtype=float) - 3.0, (n, 1))
    smoking = (rng.random(n) < smoking_rate).astype(np.int8)
    intercepts = np.sqrt(tau2) * rng.standard_normal(n)
    lin = beta[0] + beta[1] * age + beta[2] * smoking[:, None] + intercepts[:, None]
    prob = 1.0 / (1.0 + np.exp(-lin))
    responses = (rng.random((n, n_timepoints)) < prob).astype(np.int8)
    return GlmmData(responses=responses, age=age, smoking=smoking)


def write_glmm_csv(data: GlmmData, path) -> None:
    """Write the long-format CSV: ``id,timepoint,wheeze,age_centered,smoking``."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "timepoint", "wheeze", "age_centered", "smoking"])
        for i in range(data.n_individuals):
            for j in range(data.n_timepoints):
                writer.writerow([
                    i + 1, j + 1, int(data.responses[i, j]),
                    repr(float(data.age[i, j])), int(data.smoking[i]),
                ])


def read_glmm_csv(path) -> GlmmData:
    """Read the long-format CSV; ids must be contiguous from 1."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        expected = ["id", "timepoint", "wheeze", "age_centered", "smoking"]
        if reader.fieldnames != expected:
            raise ValueError(f"expected header {expected}, got {reader.fieldnames}")
        for row in reader:
            rows.append((int(row["id"]), int(row["timepoint"]), int(row["wheeze"]),
                         float(row["age_centered"]), int(row["smoking"])))
    if not rows:
        raise ValueError("empty data file")
    ids = sorted({r[0] for r in rows})
    if ids != list(range(1, len(ids) + 1)):
        raise ValueError("ids must be contiguous from 1")
    tps = sorted({r[1] for r in rows})
    n, T = len(ids), len(tps)
    if tps != list(range(1, T + 1)) or len(rows) != n * T:
        raise ValueError("every id needs one row per timepoint 1..T")
    responses = np.zeros((n, T), dtype=np.int8)
    age = np.zeros((n, T))
    smoking = np.zeros(n, dtype=np.int8)
    for i_id, tp, wheeze, a, s in rows:
        responses[i_id - 1, tp - 1] = wheeze
        age[i_id - 1, tp - 1] = a
        smoking[i_id - 1] = s
    return GlmmData(responses=responses, age=age, smoking=smoking)


def glmm_log_prior(theta):
    """Log prior: slopes ~ N(0, 50) and tau ~ Gamma(1, 0.1) expressed for
    ``theta_4 = log tau^2`` (Jacobian included)."""
    t = np.asarray(theta, dtype=float)
    single = t.ndim == 1
    t2 = t[None, :] if single else t
    beta_part = -1.5 * (_LOG_2PI + np.log(_VAR_BETA)) \
        - np.sum(t2[:, :3] ** 2, axis=1) / (2.0 * _VAR_BETA)
    tau_part = np.log(_GAMMA_RATE) - _GAMMA_RATE * np.exp(0.5 * t2[:, 3]) \
        + 0.5 * t2[:, 3] + np.log(0.5)
    out = beta_part + tau_part
    return float(out[0]) if single else out


if _HAVE_NUMBA:

    @njit(cache=True, nogil=True, fastmath=False)
    def _inner_log_means_kernel(z, tau, b, lin, m, out):  # pragma: no cover
        """log of the per-individual inner averages, draws in registers.

        The denominator product is always >= 1, so the only hazard is
        float64 overflow at absurd parameter values; those draws fall back
        to a log-domain evaluation in place.
        """
        n, n_inner = z.shape
        n_t = b.shape[1]
        for i in range(n):
            acc = 0.0
            mi = m[i]
            for j in range(n_inner):
                a = tau * np.float64(z[i, j])
                e = np.exp(a)
                p = 1.0
                for t in range(n_t):
                    p *= 1.0 + b[i, t] * e
                num = 1.0
                for _ in range(mi):
                    num *= e
                x = num / p
                if np.isfinite(x):
                    acc += x
                else:
                    s = mi * a
                    for t in range(n_t):
                        li = lin[i, t] + a
                        if li > 0.0:
                            s -= li + np.log1p(np.exp(-li))
                        else:
                            s -= np.log1p(np.exp(li))
                    acc += np.exp(s)
            out[i] = np.log(acc / n_inner)


def log_psi_reference(data: GlmmData, theta, z: np.ndarray) -> float:
    """Slow, obviously-correct likelihood estimate given intercept draws.

    ``z`` is an (n, inner_draws) matrix of standard normals; the estimate is
    formed per draw in float64 log domain with softplus terms. Used to
    validate the production kernel and its algebra.
    """
    theta = np.asarray(theta, dtype=float)
    z = np.asarray(z, dtype=float)
    tau = np.exp(0.5 * theta[3])
    n_inner = z.shape[1]
    total = 0.0
    for i in range(data.n_individuals):
        alpha = tau * z[i]
        lin = (theta[0] + theta[1] * data.age[i][:, None]
               + theta[2] * float(data.smoking[i]) + alpha[None, :])
        loglik = np.sum(data.responses[i][:, None] * lin - np.logaddexp(0.0, lin),
                        axis=0)
        m = np.max(loglik)
        if not np.isfinite(m):
            total += -np.inf
            continue
        total += m + np.log(np.sum(np.exp(loglik - m))) - np.log(n_inner)
    return float(total)


class GlmmModel(TargetModel):
    """Pseudo-marginal target for the random-intercept logistic regression."""

    psi_chunk_size = 64

    def __init__(self, data: GlmmData, inner_draws: int, dtype=np.float32):
        if inner_draws < 1:
            raise ValueError("inner_draws must be at least 1")
        self.data = data
        self.inner_draws = int(inner_draws)
        self.dtype = np.dtype(dtype)
        if self.dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
            raise ValueError("dtype must be float32 or float64")
        y = data.responses
        # Response statistics that enter the estimate outside the inner
        # average: m_i = sum_t y_it and the data scalars multiplying beta.
        self._m = y.sum(axis=1).astype(np.int64)
        self._rows_by_m = tuple(np.where(self._m == m)[0]
                                for m in range(data.n_timepoints + 1))
        self._max_m = int(self._m.max())
        self._sum_m = float(self._m.sum())
        self._sum_age_y = float(np.sum(y * data.age))
        self._sum_smoke_m = float(np.sum(self._m * data.smoking))

    @property
    def dim(self) -> int:
        return 4

    def log_prior(self, theta):
        return glmm_log_prior(theta)

    def _log_psi_one(self, theta: np.ndarray, z: np.ndarray) -> float:
        """Likelihood estimate at one parameter point given draws ``z``."""
        data = self.data
        tau = np.exp(0.5 * theta[3])
        if not np.isfinite(tau):
            return -np.inf
        lin = (theta[0] + theta[1] * data.age
               + theta[2] * data.smoking[:, None].astype(float))
        with np.errstate(over="ignore"):
            b = np.exp(lin).astype(self.dtype)              # (n, T)
            alpha = (z * self.dtype.type(tau))               # (n, n_inner)
            e = np.exp(alpha)
            prod = 1.0 + b[:, 0:1] * e
            for t in range(1, data.n_timepoints):
                prod *= 1.0 + b[:, t:t + 1] * e
            ratio = np.empty_like(e)
            ok = np.isfinite(prod)
            e_pow = {1: e}
            for m in range(2, self._max_m + 1):
                e_pow[m] = e_pow[m - 1] * e
            for m, rows in enumerate(self._rows_by_m):
                if rows.size == 0:
                    continue
                if m == 0:
                    ratio[rows] = 1.0 / prod[rows]
                else:
                    ratio[rows] = e_pow[m][rows] / prod[rows]
                    ok[rows] &= np.isfinite(e_pow[m][rows])
            inner_mean = ratio.mean(axis=1, dtype=np.float64)  # (n,)
        bad = (~ok.all(axis=1)) | (inner_mean == 0.0) | ~np.isfinite(inner_mean)
        with np.errstate(divide="ignore"):
            log_mean = np.log(np.where(bad, 1.0, inner_mean))
        if np.any(bad):
            # Overflow or underflow in the linear-domain fast path (huge
            # |linear predictor|); redo those individuals exactly in float64
            # log domain with the same draws.
            for i in np.where(bad)[0]:
                alpha_i = float(tau) * z[i].astype(np.float64)
                li = (theta[0] + theta[1] * data.age[i][:, None]
                      + theta[2] * float(data.smoking[i]) + alpha_i[None, :])
                ll = np.sum(-np.logaddexp(0.0, li), axis=0) + self._m[i] * alpha_i
                mx = np.max(ll)
                if not np.isfinite(mx):
                    log_mean[i] = -np.inf
                else:
                    log_mean[i] = mx + np.log(np.mean(np.exp(ll - mx)))
        const = (theta[0] * self._sum_m + theta[1] * self._sum_age_y
                 + theta[2] * self._sum_smoke_m)
        return float(np.sum(log_mean) + const)

    def log_psi_batch(self, thetas, rng):
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        n, n_inner = self.data.n_individuals, self.inner_draws
        out = np.empty(thetas.shape[0])
        for c in range(thetas.shape[0]):
            z = rng.standard_normal((n, n_inner), dtype=self.dtype)
            out[c] = self._log_psi_one(thetas[c], z)
        return out
