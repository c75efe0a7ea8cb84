"""One full update cycle of the mixture fit.

Each iteration draws particles from the current mixture, draws one
likelihood-estimate realization per particle, forms self-normalized
importance weights and responsibilities, and produces the weighted-moment
parameter update together with an estimate of the objective (the weighted
mean log mixture density, i.e. the quantity whose population version the
update ascends).

Reductions use numpy's pairwise summation in fixed index order, so results
are identical across thread counts; parallelism only distributes the
per-particle likelihood draws over fixed-size chunks with chunk-addressed
random substreams.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .linalg import cholesky_spd, log_sum_exp
from .mixture import MixtureParams, mixture_log_density, mixture_sample, responsibilities
from .models.base import TargetModel
from .rng import StreamKey

# A component whose updated weight falls below this is left frozen at its
# previous mean and covariance (the moment ratios are 0/0 there).
WEIGHT_FREEZE_EPS = 1e-12


@dataclass
class IterationBatch:
    """One iteration's particles and derived quantities."""

    particles: np.ndarray           # (N, p)
    log_psi: np.ndarray             # (N,)
    log_prior: np.ndarray           # (N,)
    log_proposal: np.ndarray        # (N,)
    log_unnorm_weights: np.ndarray  # (N,)
    norm_weights: np.ndarray        # (N,)
    responsibilities: np.ndarray    # (N, D)
    ess: float


class ZeroTotalWeightError(RuntimeError):
    """Every likelihood estimate in a batch was zero.

    Carries the offending batch (and, when raised through the adaptive
    driver, the partial run trace) for diagnostics.
    """

    def __init__(self, message: str, batch: IterationBatch | None = None):
        super().__init__(message)
        self.batch = batch
        self.trace = None


def _chunked_log_psi(model: TargetModel, particles: np.ndarray, key: StreamKey,
                     n_threads: int = 1) -> np.ndarray:
    """Evaluate one likelihood-estimate draw per particle.

    Chunk boundaries and chunk substreams depend only on the model's fixed
    chunk size, never on ``n_threads``.
    """
    n = particles.shape[0]
    size = model.psi_chunk_size
    starts = range(0, n, size)
    out = np.empty(n)

    def run_chunk(c: int, lo: int):
        hi = min(lo + size, n)
        gen = key.child(c).generator()
        out[lo:hi] = model.log_psi_batch(particles[lo:hi], gen)

    if n_threads <= 1:
        for c, lo in enumerate(starts):
            run_chunk(c, lo)
    else:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            futures = [pool.submit(run_chunk, c, lo) for c, lo in enumerate(starts)]
            for f in futures:
                f.result()
    return out


def sample_batch(params: MixtureParams, model: TargetModel, n: int,
                 key: StreamKey, n_threads: int = 1) -> IterationBatch:
    """Draw a batch from the mixture and weight it against the target.

    Raises ``ZeroTotalWeightError`` if every weight is zero (all likelihood
    estimates vanished); the exception carries the batch.
    """
    if n < 2:
        raise ValueError("need at least two particles per iteration")
    particles, _ = mixture_sample(params, n, key.child(0).generator())
    log_proposal = mixture_log_density(params, particles)
    log_prior = np.atleast_1d(np.asarray(model.log_prior(particles), dtype=float))
    log_psi = _chunked_log_psi(model, particles, key.child(1), n_threads)

    with np.errstate(invalid="ignore"):
        log_w = log_prior + log_psi - log_proposal
    # a -inf prior or psi must yield weight zero, never nan
    log_w = np.where(np.isneginf(log_prior) | np.isneginf(log_psi), -np.inf, log_w)

    total = log_sum_exp(log_w)
    rho = responsibilities(params, particles)
    if np.isneginf(total):
        raise ZeroTotalWeightError(
            "zero total weight: every likelihood estimate in the batch was zero",
            batch=IterationBatch(particles, log_psi, log_prior, log_proposal,
                                 log_w, np.zeros(n), rho, 0.0),
        )
    w = np.exp(log_w - total)
    w /= w.sum()
    ess = 1.0 / float(np.sum(w * w))
    return IterationBatch(particles, log_psi, log_prior, log_proposal,
                          log_w, w, rho, ess)


def update_parameters(batch: IterationBatch, params: MixtureParams) -> MixtureParams:
    """Weighted-moment update of (weights, means, covariances).

    New weights are the responsibility-weighted importance weights and sum
    to one by construction. Components whose new weight collapses below
    ``WEIGHT_FREEZE_EPS`` keep their previous mean and covariance, as does a
    component whose new covariance cannot be factorized even with jitter
    (e.g. an exact point mass).
    """
    w = batch.norm_weights
    rho = batch.responsibilities
    theta = batch.particles
    wr = w[:, None] * rho                      # (N, D)
    new_w = wr.sum(axis=0)
    new_w = new_w / new_w.sum()

    new_means = params.means.copy()
    new_covs = list(params.covs)
    for d in range(params.n_components):
        if new_w[d] < WEIGHT_FREEZE_EPS:
            continue
        mu = wr[:, d] @ theta / new_w[d]
        new_means[d] = mu
        diff = theta - mu
        cov = (diff * wr[:, d, None]).T @ diff / new_w[d]
        try:
            new_covs[d] = cholesky_spd(cov)
        except np.linalg.LinAlgError:
            pass  # degenerate spread (e.g. a point mass); keep the previous one
    return MixtureParams(new_w, new_means, tuple(new_covs))


def estimate_objective(batch: IterationBatch, params: MixtureParams) -> float:
    """Weighted mean of the log mixture density over the batch particles.

    Particles with zero weight contribute nothing even where the log density
    is -inf.
    """
    log_q = mixture_log_density(params, batch.particles)
    w = batch.norm_weights
    return float(np.sum(w * np.where(w > 0.0, log_q, 0.0)))


def trapezoid_grid(lo: float, hi: float, n_nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Quadrature nodes and trapezoid weights on [lo, hi]."""
    x = np.linspace(lo, hi, n_nodes)
    w = np.full(n_nodes, x[1] - x[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return x, w


def quadrature_objective_1d(params: MixtureParams, density, nodes, weights) -> float:
    """Deterministic objective: integral of log q against the (normalized)
    target over the grid."""
    x = np.asarray(nodes, dtype=float)
    gw = np.asarray(weights, dtype=float)
    pi = np.asarray(density(x), dtype=float) * gw
    pi = pi / pi.sum()
    log_q = mixture_log_density(params, x[:, None])
    return float(np.sum(pi * log_q))


def exact_em_step_1d(params: MixtureParams, density, nodes, weights) -> MixtureParams:
    """One population-level update computed by quadrature (no sampling).

    ``density`` maps grid nodes to (possibly unnormalized) target values;
    the grid must capture at least 99.9% of a normalized target's mass.
    Used to verify that the population update never decreases the objective.
    """
    if params.dim != 1:
        raise ValueError("quadrature update only supports 1-D parameters")
    x = np.asarray(nodes, dtype=float)
    gw = np.asarray(weights, dtype=float)
    dens = np.asarray(density(x), dtype=float)
    mass = float(np.sum(dens * gw))
    if mass < 0.999:
        raise ValueError("grid too narrow")
    pi = dens * gw / mass
    rho = responsibilities(params, x[:, None])   # (K, D)
    new_w = pi @ rho
    new_w = new_w / new_w.sum()
    new_means = params.means.copy()
    new_covs = list(params.covs)
    for d in range(params.n_components):
        if new_w[d] < WEIGHT_FREEZE_EPS:
            continue
        pr = pi * rho[:, d]
        mu = float(pr @ x / new_w[d])
        var = float(pr @ (x - mu) ** 2 / new_w[d])
        new_means[d] = [mu]
        new_covs[d] = cholesky_spd(np.array([[var]]))
    return MixtureParams(new_w, new_means, tuple(new_covs))
