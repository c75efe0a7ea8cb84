"""Reference samplers and distance metrics for validating fitted mixtures:
an exact acceptance-rejection benchmark for the kernel-smoothed posterior,
the two-sample Kolmogorov-Smirnov distance, and weighted moments.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .engine import _chunked_log_psi
from .mixture import MixtureParams, mixture_sample
from .models.gk import GkAbcModel
from .rng import StreamKey


@dataclass(frozen=True)
class ReferenceSample:
    """Draws from a benchmark sampler."""

    draws: np.ndarray                  # (M, p)
    method: str                        # "abc_rejection" | "exact_mixture"
    acceptance_rate: Optional[float] = None


def abc_rejection(model: GkAbcModel, m_proposals: int, key: StreamKey) -> ReferenceSample:
    """Exact acceptance-rejection draws from the kernel-smoothed posterior.

    Proposes from the prior and accepts with probability
    ``exp(log_psi - log_kernel_max)``; the Gaussian kernel never exceeds its
    analytic maximum, so accepted draws are exact.
    """
    if m_proposals < 1:
        raise ValueError("need at least one proposal")
    rng = key.generator()
    thetas, _ = mixture_sample(model.prior, m_proposals, rng)
    log_psi = _chunked_log_psi(model, thetas, key.child(1))
    u = rng.random(m_proposals)
    with np.errstate(divide="ignore"):
        accept = np.log(u) < (log_psi - model.log_kernel_max)
    rate = float(accept.sum()) / m_proposals
    if not np.any(accept):
        raise RuntimeError(
            f"rejection sampler accepted nothing in {m_proposals} proposals "
            f"(acceptance rate {rate})")
    return ReferenceSample(draws=thetas[accept], method="abc_rejection",
                           acceptance_rate=rate)


def ks_distance(a, b) -> float:
    """Exact two-sample Kolmogorov-Smirnov statistic (sup-norm distance
    between the empirical CDFs)."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("both samples must be non-empty")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.max(np.abs(cdf_a - cdf_b)))


def weighted_moments(points, weights) -> tuple[np.ndarray, np.ndarray]:
    """Weighted mean and central covariance of a normalized-weight sample."""
    x = np.asarray(points, dtype=float)
    w = np.asarray(weights, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if abs(float(w.sum()) - 1.0) > 1e-8:
        raise ValueError("weights must be normalized")
    mean = w @ x
    diff = x - mean
    cov = (diff * w[:, None]).T @ diff
    return mean, cov


def mixture_marginal_sample(params: MixtureParams, coordinate: int, m: int,
                            rng: np.random.Generator) -> np.ndarray:
    """Sample the mixture and project onto one coordinate."""
    if not 0 <= coordinate < params.dim:
        raise IndexError(f"coordinate {coordinate} out of range for p={params.dim}")
    points, _ = mixture_sample(params, m, rng)
    return points[:, coordinate]


def write_reference_csv(sample: ReferenceSample, path) -> None:
    """One row per draw, one column per coordinate."""
    p = sample.draws.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"theta_{j}" for j in range(p)])
        for row in sample.draws:
            writer.writerow([repr(float(v)) for v in row])


def read_reference_csv(path) -> np.ndarray:
    """Read draws written by ``write_reference_csv``; returns (M, p)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header:
            raise ValueError("empty reference file")
        rows = [[float(v) for v in row] for row in reader if row]
    if not rows:
        raise ValueError("reference file has no draws")
    return np.asarray(rows, dtype=float)
