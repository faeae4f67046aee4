"""Reference data sets and PINN training for the two inverse problems.

Linear problem: K(x) is a log-normal GP field on the unit square, u solves
``div(K grad u) = 0`` with u = 1 at x2 = 0, u = 0 at x2 = 1 and no flow on
the sides.  Both K and u are observed at cell centroids.

Nonlinear problem: K(u) follows the van Genuchten model, u is fixed on
x1 = L1, a flux q enters through x1 = 0 and the remaining edges are sealed.
Only u is observed.  Training happens in nondimensional variables

    x~ = x / L,   u~ = (u - u_mid) / u_half,   K~ = K / K_ref,
    K_ref = q L1 / u_half,

which leaves the PDE unchanged and turns the inflow condition into
``-K~ du~/dx~1 = 1``.  Without this rescaling the flux terms are about
1e-8 of the data term and the optimiser ignores them.
"""

from dataclasses import dataclass, field

import numpy as np

from .data import (
    BoundarySpec,
    Field,
    GpConfig,
    Grid2D,
    PicardConfig,
    VanGenuchtenParams,
    add_noise,
    fv_solve_linear,
    fv_solve_vangenuchten,
    sample_gp_lnk,
    sample_measurement_locations,
    snap_to_centroids,
    van_genuchten_k,
)
from .network import init_xavier
from .optim import LbfgsConfig, lbfgs_minimize
from .problems import (
    CollocationSet,
    ErrorReport,
    LossSpec,
    MeasurementSet,
    PinnProblem,
    error_report,
    k_of_u,
    k_value_linear,
    make_objective,
    relative_error,
    u_value,
)

__all__ = [
    "LinearSetup",
    "LinearReference",
    "NonlinearSetup",
    "NonlinearReference",
    "TrainConfig",
    "PinnFit",
    "NonlinearFit",
    "linear_reference",
    "linear_measurements",
    "edge_points",
    "collocation_points",
    "train_linear",
    "predict_linear",
    "evaluate_linear",
    "nonlinear_reference",
    "nonlinear_measurements",
    "train_nonlinear",
    "predict_k_of_u",
    "evaluate_nonlinear",
]

DEFAULT_LAYERS = (2, 50, 50, 1)


@dataclass(frozen=True)
class TrainConfig:
    """Network architectures, initialisation seed and optimiser settings."""

    u_layers: tuple = DEFAULT_LAYERS
    k_layers: tuple = DEFAULT_LAYERS
    seed: int = 0
    lbfgs: LbfgsConfig = LbfgsConfig(max_iterations=20000)
    k_output: str = "raw"
    loss_spec: LossSpec = field(default_factory=LossSpec)

    def initial_weights(self):
        """Xavier draw for both nets; the K net uses the next seed."""
        u0 = init_xavier(self.u_layers, self.seed)
        k0 = init_xavier(self.k_layers, self.seed + 1_000_003)
        return np.concatenate([u0.flatten(), k0.flatten()])


def edge_points(grid, edge, n):
    """``n`` evenly spaced points at the midpoints of equal edge segments."""
    t = (np.arange(n) + 0.5) / n
    if edge == "left":
        return np.column_stack([np.zeros(n), t * grid.ly])
    if edge == "right":
        return np.column_stack([np.full(n, grid.lx), t * grid.ly])
    if edge == "bottom":
        return np.column_stack([t * grid.lx, np.zeros(n)])
    if edge == "top":
        return np.column_stack([t * grid.lx, np.full(n, grid.ly)])
    raise ValueError(f"unknown edge {edge!r}")


def collocation_points(grid, n, seed=0, scheme="latin-hypercube"):
    """Interior collocation points.

    ``centroids`` needs ``n == grid.n_cells``; ``latin-hypercube`` draws a
    fresh stratified design from ``seed``.
    """
    if n == 0:
        return CollocationSet()
    if scheme == "centroids":
        if n != grid.n_cells:
            raise ValueError("the centroid scheme uses every cell centroid")
        return CollocationSet(grid.centroids())
    pts = sample_measurement_locations(grid, n, seed, "latin-hypercube")
    # LHS can land on the closed boundary only with probability zero, but
    # nudge anyway so the residual set is strictly interior
    eps = 1e-9 * np.array([grid.lx, grid.ly])
    return CollocationSet(np.clip(pts, eps, np.array([grid.lx, grid.ly]) - eps))


# -- linear problem --------------------------------------------------------


@dataclass(frozen=True)
class LinearSetup:
    nx: int = 32
    ny: int = 32
    sigma: float = 1.0
    lam: float = 0.15
    gp_seed: int = 0
    n_boundary: int = 32


@dataclass(frozen=True)
class LinearReference:
    grid: Grid2D
    log_k: Field
    k: Field
    u: Field
    n_boundary: int = 32


def linear_reference(setup=LinearSetup()):
    grid = Grid2D(setup.nx, setup.ny)
    log_k = sample_gp_lnk(grid, GpConfig(setup.sigma, setup.lam, setup.gp_seed))
    k = log_k.map(np.exp)
    u = fv_solve_linear(grid, k, BoundarySpec.linear_default())
    return LinearReference(grid, log_k, k, u, setup.n_boundary)


def _observe(grid, field_values, n, seed, scheme):
    pts = sample_measurement_locations(grid, n, seed, scheme)
    if scheme != "random-centroids":
        pts = snap_to_centroids(grid, pts)
    return pts, field_values[grid.cell_of(pts)] if n else np.zeros(0)


def linear_measurements(ref, n_k, n_u, seed, scheme="random-centroids", u_seed=None):
    """K and u observations at centroids plus the boundary samples.

    K locations use ``seed``; u locations use ``u_seed`` (default
    ``seed + 1``).  Dirichlet samples sit on the bottom (u = 1) and top
    (u = 0) edges, zero-flux samples on the two sides.
    """
    grid = ref.grid
    u_seed = seed + 1 if u_seed is None else u_seed
    kp, kv = _observe(grid, ref.k.values, n_k, seed, scheme)
    up, uv = _observe(grid, ref.u.values, n_u, u_seed, scheme)
    nb = ref.n_boundary
    bottom, top = edge_points(grid, "bottom", nb), edge_points(grid, "top", nb)
    left, right = edge_points(grid, "left", nb), edge_points(grid, "right", nb)
    return MeasurementSet(
        k_points=kp,
        k_values=kv,
        u_points=up,
        u_values=uv,
        dirichlet_points=np.vstack([bottom, top]),
        dirichlet_values=np.concatenate([np.ones(nb), np.zeros(nb)]),
        neumann_points=np.vstack([left, right]),
        neumann_values=np.zeros(2 * nb),
        neumann_axes=np.zeros(2 * nb, dtype=int),
    )


@dataclass
class PinnFit:
    problem: PinnProblem
    u_net: object
    k_net: object
    report: object


def _train(problem, measurements, collocation, config, callback=None):
    sizes = (config.u_layers, config.k_layers)
    objective = make_objective(problem, sizes, measurements, collocation, config.loss_spec)
    w, report = lbfgs_minimize(objective, config.initial_weights(), config.lbfgs, callback)
    u_net, k_net = objective.split(w)
    return u_net, k_net, report


def train_linear(ref, measurements, collocation, config=TrainConfig(), callback=None):
    problem = PinnProblem.linear((ref.grid.lx, ref.grid.ly), k_output=config.k_output)
    measurements.check_domain(problem.domain)
    collocation.check_domain(problem.domain)
    u_net, k_net, report = _train(problem, measurements, collocation, config, callback)
    return PinnFit(problem, u_net, k_net, report)


def predict_linear(fit, grid):
    c = grid.centroids()
    u = u_value(fit.problem, fit.u_net, c)
    k = k_value_linear(fit.problem, fit.k_net, c)
    return Field(grid, np.asarray(u)), Field(grid, np.asarray(k))


def evaluate_linear(fit, ref):
    u_hat, k_hat = predict_linear(fit, ref.grid)
    return error_report(u_hat, ref.u, k_hat, ref.k, ref.grid)


# -- nonlinear problem -----------------------------------------------------


@dataclass(frozen=True)
class NonlinearSetup:
    nx: int = 32
    ny: int = 32
    lx: float = 10.0
    ly: float = 10.0
    vg: VanGenuchtenParams = VanGenuchtenParams()
    picard: PicardConfig = PicardConfig()
    n_boundary: int = 32


@dataclass(frozen=True)
class NonlinearReference:
    grid: Grid2D
    u: Field
    vg: VanGenuchtenParams
    n_boundary: int = 32

    @property
    def u_range(self):
        return float(self.u.values.min()), float(self.u.values.max())


def nonlinear_reference(setup=NonlinearSetup()):
    grid = Grid2D(setup.nx, setup.ny, setup.lx, setup.ly)
    bc = BoundarySpec.unsaturated(setup.vg.u0, setup.vg.q)
    u = fv_solve_vangenuchten(grid, setup.vg, bc, setup.picard)
    return NonlinearReference(grid, u, setup.vg, setup.n_boundary)


def nonlinear_measurements(ref, n_u, seed, scheme="random-centroids", noise=0.0, noise_kind="multiplicative"):
    """u observations (optionally noisy) plus Dirichlet and flux samples.

    Values are in physical units; scaling happens in :func:`train_nonlinear`.
    """
    grid, vg, nb = ref.grid, ref.vg, ref.n_boundary
    up, uv = _observe(grid, ref.u.values, n_u, seed, scheme)
    if noise > 0:
        uv = add_noise(uv, noise, seed + 7919, noise_kind)
    left = edge_points(grid, "left", nb)
    sealed = np.vstack([edge_points(grid, "bottom", nb), edge_points(grid, "top", nb)])
    return MeasurementSet(
        u_points=up,
        u_values=uv,
        dirichlet_points=edge_points(grid, "right", nb),
        dirichlet_values=np.full(nb, vg.u0),
        neumann_points=np.vstack([left, sealed]),
        neumann_values=np.concatenate([np.full(nb, vg.q), np.zeros(2 * nb)]),
        neumann_axes=np.concatenate([np.zeros(nb, int), np.ones(2 * nb, int)]),
    )


@dataclass(frozen=True)
class Scaling:
    """Map between physical and nondimensional variables."""

    length: float
    u_mid: float
    u_half: float
    k_ref: float

    @classmethod
    def from_data(cls, domain, u_values, q):
        lo, hi = float(np.min(u_values)), float(np.max(u_values))
        if not hi > lo:
            raise ValueError("u observations must span a nonzero range")
        half = 0.5 * (hi - lo)
        return cls(float(domain[0]), 0.5 * (lo + hi), half, abs(q) * domain[0] / half if q else 1.0)

    def u_to(self, u):
        return (np.asarray(u, float) - self.u_mid) / self.u_half

    def u_from(self, u):
        return np.asarray(u, float) * self.u_half + self.u_mid

    def flux_to(self, q):
        return np.asarray(q, float) * self.length / (self.k_ref * self.u_half)


@dataclass
class NonlinearFit:
    problem: PinnProblem
    u_net: object
    k_net: object
    report: object
    scaling: Scaling


def train_nonlinear(ref, measurements, collocation, config=None, callback=None):
    """Fit u(x) and K(u) from u observations; see the module docstring."""
    config = config or TrainConfig(k_layers=(1, 50, 50, 1))
    grid, vg = ref.grid, ref.vg
    domain = (grid.lx, grid.ly)
    measurements.check_domain(domain)
    collocation.check_domain(domain)
    observed = np.concatenate([measurements.u_values, measurements.dirichlet_values])
    sc = Scaling.from_data(domain, observed, vg.q)
    L = sc.length
    scaled = MeasurementSet(
        u_points=measurements.u_points / L,
        u_values=sc.u_to(measurements.u_values),
        dirichlet_points=measurements.dirichlet_points / L,
        dirichlet_values=sc.u_to(measurements.dirichlet_values),
        neumann_points=measurements.neumann_points / L,
        neumann_values=sc.flux_to(measurements.neumann_values),
        neumann_axes=measurements.neumann_axes,
    )
    coll = CollocationSet(collocation.interior / L)
    problem = PinnProblem.nonlinear((grid.lx / L, grid.ly / L), (-1.0, 1.0), k_output=config.k_output)
    u_net, k_net, report = _train(problem, scaled, coll, config, callback)
    return NonlinearFit(problem, u_net, k_net, report, sc)


def predict_u_nonlinear(fit, points):
    sc = fit.scaling
    return sc.u_from(u_value(fit.problem, fit.u_net, np.asarray(points, float) / sc.length))


def predict_k_of_u(fit, u):
    """Learned K at physical pressures ``u``."""
    sc = fit.scaling
    k, _ = k_of_u(fit.problem, fit.k_net, np.atleast_1d(sc.u_to(u)))
    return np.asarray(k) * sc.k_ref


def evaluate_nonlinear(fit, ref, n_curve=1000):
    """Relative errors of u on the grid and of K(u) over the traversed range.

    The K error integrates over a uniform grid of ``n_curve`` pressures
    between the minimum and maximum of the reference solution.
    """
    grid = ref.grid
    u_hat = Field(grid, predict_u_nonlinear(fit, grid.centroids()))
    lo, hi = ref.u_range
    us = np.linspace(lo, hi, n_curve)
    k_ref = van_genuchten_k(us, ref.vg)
    k_hat = predict_k_of_u(fit, us)
    return ErrorReport(
        eps_u=relative_error(u_hat, ref.u, grid),
        eps_k=relative_error(k_hat, k_ref),
        abs_error_u=np.abs(u_hat.values - ref.u.values),
        abs_error_k=np.abs(k_hat - k_ref),
    )
