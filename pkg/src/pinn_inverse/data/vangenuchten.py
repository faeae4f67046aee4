"""van Genuchten saturation and unsaturated conductivity."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class VanGenuchtenParams:
    """Closure parameters plus the boundary data of the unsaturated test case.

    ``ks`` saturated conductivity [m/s], ``alpha`` [1/m], ``m`` in (0, 1),
    ``ug`` gas-pressure head [m], ``u0`` Dirichlet head [m], ``q`` inflow
    flux [m/s].  Defaults are the values of the reference scenario.
    """

    ks: float = 8.25e-4
    alpha: float = 0.1
    m: float = 0.469
    ug: float = 0.0
    u0: float = -10.0
    q: float = 8.25e-5

    def __post_init__(self):
        if self.ks <= 0:
            raise ValueError("ks must be positive")
        if not 0 < self.m < 1:
            raise ValueError("m must lie in (0, 1)")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")


def saturation(u, vg):
    u = np.asarray(u, dtype=float)
    suction = np.maximum(vg.alpha * (vg.ug - u), 0.0)
    return (1.0 + suction ** (1.0 / (1.0 - vg.m))) ** (-vg.m)


def van_genuchten_k(u, vg):
    """K(u); equals ``ks`` for ``u >= ug``."""
    s = saturation(u, vg)
    k = vg.ks * np.sqrt(s) * (1.0 - (1.0 - s ** (1.0 / vg.m)) ** vg.m) ** 2
    return k if k.ndim else float(k)
