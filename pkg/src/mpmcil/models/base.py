"""Pluggable posterior specification.

A target model is a prior log-density plus a stochastic nonnegative unbiased
likelihood-estimate generator: ``exp(log_psi(theta, rng))`` has expectation
equal to the (intractable) likelihood at ``theta``. A value of -inf encodes
an estimate of exactly zero; values encoding negative estimates are
structurally impossible for every shipped model.
"""

from __future__ import annotations

import abc

import numpy as np


class TargetModel(abc.ABC):
    """Interface every built-in model provides."""

    #: Number of particles evaluated per likelihood-estimate call. Fixed per
    #: model (never per thread count) so that chunked evaluation is
    #: reproducible across serial and parallel execution.
    psi_chunk_size: int = 4096

    @property
    @abc.abstractmethod
    def dim(self) -> int:
        """Dimension p of the parameter space."""

    @abc.abstractmethod
    def log_prior(self, theta):
        """Log prior density at ``(p,)`` or ``(N, p)`` parameters."""

    @abc.abstractmethod
    def log_psi_batch(self, thetas: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """One log likelihood-estimate realization per row of ``thetas``."""

    def log_psi(self, theta, rng: np.random.Generator) -> float:
        """One log likelihood-estimate realization at a single point."""
        theta = np.asarray(theta, dtype=float)
        return float(self.log_psi_batch(theta[None, :], rng)[0])
