"""The Gaussian-mixture variational family: evaluation, sampling,
responsibilities, and structural edits (add / remove a component).

``MixtureParams`` is immutable after construction; every edit returns a new
value. Components with zero weight are kept in place until explicitly
removed, and the density code skips them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .linalg import SpdMatrix, cholesky_spd, mvn_log_pdf, mvn_sample

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class MixtureParams:
    """Weights, means and covariances of a D-component Gaussian mixture."""

    weights: np.ndarray            # (D,)
    means: np.ndarray              # (D, p)
    covs: tuple[SpdMatrix, ...]    # length D

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        m = np.asarray(self.means, dtype=float)
        if m.ndim != 2:
            raise ValueError("means must be a (D, p) array")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", m)
        if w.ndim != 1 or w.shape[0] != m.shape[0] or len(self.covs) != w.shape[0]:
            raise ValueError("weights, means and covs must agree on D")
        if np.any(w < 0.0):
            raise ValueError("weights must be nonnegative")
        if abs(float(w.sum()) - 1.0) > 1e-12:
            raise ValueError("weights must sum to 1")
        p = m.shape[1]
        if any(c.dim != p for c in self.covs):
            raise ValueError("covariance dimensions must match the means")

    @property
    def n_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def to_json_dict(self) -> dict:
        """Snapshot as ``{D, weights, means, covs}`` (field order fixed)."""
        return {
            "D": self.n_components,
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covs": [c.entries.tolist() for c in self.covs],
        }

    @staticmethod
    def from_json_dict(obj: dict) -> "MixtureParams":
        covs = tuple(cholesky_spd(np.asarray(c, dtype=float)) for c in obj["covs"])
        return MixtureParams(
            weights=np.asarray(obj["weights"], dtype=float),
            means=np.asarray(obj["means"], dtype=float),
            covs=covs,
        )


def single_component(mean, cov) -> MixtureParams:
    """A D=1 mixture at the given mean and covariance (matrix or SpdMatrix)."""
    mu = np.asarray(mean, dtype=float)
    spd = cov if isinstance(cov, SpdMatrix) else cholesky_spd(cov)
    return MixtureParams(np.array([1.0]), mu[None, :], (spd,))


def component_log_densities(params: MixtureParams, points) -> np.ndarray:
    """Matrix of ``log(alpha_d) + log N(points | mu_d, Sigma_d)``, shape (N, D).

    Zero-weight components are skipped and contribute -inf columns.
    """
    x = np.asarray(points, dtype=float)
    single = x.ndim == 1
    x2 = x[None, :] if single else x
    n, d = x2.shape[0], params.n_components
    out = np.full((n, d), -np.inf)
    with np.errstate(divide="ignore"):
        log_w = np.log(params.weights)
    for j in range(d):
        if params.weights[j] == 0.0:
            continue
        out[:, j] = log_w[j] + mvn_log_pdf(x2, params.means[j], params.covs[j])
    return out


def mixture_log_density(params: MixtureParams, points):
    """Log of the mixture density at one point ``(p,)`` or a batch ``(N, p)``."""
    x = np.asarray(points, dtype=float)
    single = x.ndim == 1
    comp = component_log_densities(params, x)
    out = logsumexp(comp, axis=1)
    return float(out[0]) if single else out


def mixture_sample(params: MixtureParams, n: int, rng: np.random.Generator):
    """Draw ``n`` points; returns ``(points (n, p), component_ids (n,))``.

    Component ids are 0-based. Deterministic given the generator state.
    """
    if n < 1:
        raise ValueError("need at least one draw")
    ids = rng.choice(params.n_components, size=n, p=params.weights)
    z = rng.standard_normal((n, params.dim))
    points = np.empty((n, params.dim))
    for j in range(params.n_components):
        mask = ids == j
        if not np.any(mask):
            continue
        points[mask] = params.means[j] + z[mask] @ params.covs[j].chol.T
    return points, ids


def responsibilities(params: MixtureParams, points) -> np.ndarray:
    """Per-point mixture posterior probabilities, shape (N, D).

    Computed in log domain; rows are renormalized to sum to exactly 1.
    A point where every component density underflows gets a uniform row.
    """
    x = np.asarray(points, dtype=float)
    x2 = x[None, :] if x.ndim == 1 else x
    comp = component_log_densities(params, x2)
    norm = logsumexp(comp, axis=1)
    underflow = ~np.isfinite(norm)
    if np.any(underflow):
        logger.warning(
            "responsibilities: %d point(s) underflowed in every component; "
            "assigning uniform rows", int(underflow.sum()),
        )
    rho = np.exp(comp - np.where(underflow, 0.0, norm)[:, None])
    rho[underflow] = 1.0 / params.n_components
    rho /= rho.sum(axis=1, keepdims=True)
    return rho


def add_component(params: MixtureParams, new_mean, new_cov: SpdMatrix,
                  alpha_add: float) -> MixtureParams:
    """Append a component with weight ``alpha_add``; old weights scale by
    ``1 - alpha_add``."""
    if not 0.0 < alpha_add < 1.0:
        raise ValueError("alpha_add must lie in (0, 1)")
    mu = np.asarray(new_mean, dtype=float)
    if mu.shape != (params.dim,) or new_cov.dim != params.dim:
        raise ValueError("new component dimension mismatch")
    weights = np.concatenate([(1.0 - alpha_add) * params.weights, [alpha_add]])
    means = np.vstack([params.means, mu[None, :]])
    return MixtureParams(weights, means, params.covs + (new_cov,))


def remove_component(params: MixtureParams, index: int) -> MixtureParams:
    """Drop component ``index`` (0-based); remaining weights are divided by
    ``1 - alpha_r``."""
    d = params.n_components
    if d < 2:
        raise ValueError("cannot remove last component")
    if not 0 <= index < d:
        raise IndexError(f"component index {index} out of range for D={d}")
    a_r = float(params.weights[index])
    if a_r >= 1.0:
        raise ValueError("cannot remove a component carrying all the weight")
    keep = np.arange(d) != index
    weights = params.weights[keep] / (1.0 - a_r)
    covs = tuple(c for j, c in enumerate(params.covs) if keep[j])
    return MixtureParams(weights, params.means[keep], covs)
