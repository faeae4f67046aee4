"""Gaussian-process log-conductivity fields by dense Cholesky factorisation."""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import Field


class FactorizationError(np.linalg.LinAlgError):
    pass


@dataclass(frozen=True)
class GpConfig:
    sigma: float = 1.0
    lam: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.sigma <= 0 or self.lam <= 0:
            raise ValueError("sigma and lambda must be positive")


def squared_exponential(points, sigma, lam):
    d2 = np.sum((points[:, None, :] - points[None, :, :]) ** 2, axis=-1)
    return sigma**2 * np.exp(-d2 / (2.0 * lam**2))


@lru_cache(maxsize=8)
def gp_cholesky(grid, sigma, lam):
    """Lower Cholesky factor of the centroid covariance, with jitter.

    The jitter starts at 1e-12 sigma^2 and grows tenfold up to 1e-6 sigma^2.
    """
    cov = squared_exponential(grid.centroids(), sigma, lam)
    jitter = 1e-12 * sigma**2
    while jitter <= 1e-6 * sigma**2 * (1 + 1e-9):
        try:
            L = np.linalg.cholesky(cov + jitter * np.eye(len(cov)))
            L.setflags(write=False)
            return L
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise FactorizationError("covariance not positive definite even with 1e-6 sigma^2 jitter")


def sample_gp_lnk(grid, config, n_samples=None):
    """ln K at cell centroids; ``n_samples`` stacks independent draws as rows."""
    L = gp_cholesky(grid, float(config.sigma), float(config.lam))
    rng = np.random.default_rng(config.seed)
    if n_samples is None:
        return Field(grid, L @ rng.standard_normal(grid.n_cells))
    xi = rng.standard_normal((grid.n_cells, n_samples))
    return (L @ xi).T
