"""Tractable test target: a known Gaussian mixture observed through unit-mean
multiplicative noise.

With a flat prior over a box, the posterior is proportional to the mixture
density itself, which makes the unbiasedness contract and the fitted
approximation directly checkable.
"""

from __future__ import annotations

import numpy as np

from ..mixture import MixtureParams, mixture_log_density
from .base import TargetModel


class TractableMixtureTarget(TargetModel):
    """Flat-prior target whose likelihood estimate is the true mixture density
    times log-normal noise with unit mean and coefficient of variation
    ``noise_cv`` (``noise_cv = 0`` gives the exact density)."""

    psi_chunk_size = 8192

    def __init__(self, true_mixture: MixtureParams, noise_cv: float = 0.0,
                 box_lower=-20.0, box_upper=20.0):
        if noise_cv < 0.0:
            raise ValueError("noise_cv must be nonnegative")
        self.true_mixture = true_mixture
        self.noise_cv = float(noise_cv)
        p = true_mixture.dim
        self.box_lower = np.broadcast_to(np.asarray(box_lower, dtype=float), (p,)).copy()
        self.box_upper = np.broadcast_to(np.asarray(box_upper, dtype=float), (p,)).copy()
        if np.any(self.box_lower >= self.box_upper):
            raise ValueError("box_lower must be strictly below box_upper")
        # sigma of log(noise) for a unit-mean log-normal with the given CV
        self._log_sigma = float(np.sqrt(np.log1p(self.noise_cv ** 2)))

    @property
    def dim(self) -> int:
        return self.true_mixture.dim

    def true_log_density(self, theta):
        return mixture_log_density(self.true_mixture, theta)

    def log_prior(self, theta):
        x = np.asarray(theta, dtype=float)
        single = x.ndim == 1
        x2 = x[None, :] if single else x
        inside = np.all((x2 >= self.box_lower) & (x2 <= self.box_upper), axis=1)
        out = np.where(inside, 0.0, -np.inf)
        return float(out[0]) if single else out

    def log_psi_batch(self, thetas, rng):
        base = mixture_log_density(self.true_mixture, np.asarray(thetas, dtype=float))
        base = np.atleast_1d(np.asarray(base, dtype=float))
        if self.noise_cv == 0.0:
            return base
        s = self._log_sigma
        return base + s * rng.standard_normal(base.shape[0]) - 0.5 * s * s


def tractable_mixture_target(true_mixture: MixtureParams, noise_cv: float,
                             box_lower=-20.0, box_upper=20.0) -> TractableMixtureTarget:
    return TractableMixtureTarget(true_mixture, noise_cv, box_lower, box_upper)
