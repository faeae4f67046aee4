"""Reference data: GP conductivity fields, FV solutions, sampling, noise."""

from .fv import (
    BoundarySpec,
    Dirichlet,
    NeumannFlux,
    NoFlow,
    PicardConfig,
    SolverError,
    fv_solve_linear,
    fv_solve_vangenuchten,
    picard_solve,
)
from .gp import GpConfig, sample_gp_lnk
from .grid import Field, Grid2D, read_field, read_points, write_field, write_points
from .sampling import add_noise, sample_measurement_locations, snap_to_centroids
from .vangenuchten import VanGenuchtenParams, saturation, van_genuchten_k

__all__ = [
    "BoundarySpec",
    "Dirichlet",
    "Field",
    "GpConfig",
    "Grid2D",
    "NeumannFlux",
    "NoFlow",
    "PicardConfig",
    "SolverError",
    "VanGenuchtenParams",
    "add_noise",
    "fv_solve_linear",
    "fv_solve_vangenuchten",
    "picard_solve",
    "read_field",
    "read_points",
    "sample_gp_lnk",
    "sample_measurement_locations",
    "saturation",
    "snap_to_centroids",
    "van_genuchten_k",
    "write_field",
    "write_points",
]
