"""Measurement/collocation locations and observation noise."""

import numpy as np
from scipy.stats import qmc

SCHEMES = ("random-centroids", "latin-hypercube")


def sample_measurement_locations(grid, n, seed, scheme="random-centroids"):
    """``n`` points in the domain.

    ``random-centroids`` draws distinct cell centroids; ``latin-hypercube``
    places exactly one point in each of the ``n`` equal strata of both axes.
    """
    rng = np.random.default_rng(seed)
    if scheme == "random-centroids":
        if n > grid.n_cells:
            raise ValueError(f"cannot pick {n} distinct centroids from {grid.n_cells} cells")
        cells = rng.choice(grid.n_cells, size=n, replace=False)
        return grid.centroids()[cells]
    if scheme == "latin-hypercube":
        if n == 0:
            return np.zeros((0, 2))
        unit = qmc.LatinHypercube(d=2, seed=rng).random(n)
        return unit * np.array([grid.lx, grid.ly])
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {SCHEMES}")


def snap_to_centroids(grid, points):
    """Centroids of the cells containing ``points`` (duplicates kept)."""
    return grid.centroids()[grid.cell_of(points)]


def add_noise(values, level, seed, kind="multiplicative"):
    """Perturb observations.

    ``multiplicative``: ``v (1 + level xi)``, xi standard normal.
    ``additive``: ``v + level xi``.
    ``multiplicative-uniform``: as multiplicative with xi uniform of unit variance.
    """
    if level < 0:
        raise ValueError("noise level must be non-negative")
    values = np.asarray(values, dtype=float)
    rng = np.random.default_rng(seed)
    if kind == "multiplicative":
        return values * (1.0 + level * rng.standard_normal(values.shape))
    if kind == "additive":
        return values + level * rng.standard_normal(values.shape)
    if kind == "multiplicative-uniform":
        return values * (1.0 + level * rng.uniform(-np.sqrt(3.0), np.sqrt(3.0), values.shape))
    raise ValueError(f"unknown noise kind {kind!r}")
