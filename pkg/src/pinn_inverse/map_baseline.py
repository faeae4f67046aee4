"""Regularised least-squares (MAP) estimate of cell-wise ln K.

The forward model is the harmonic-mean TPFA discretisation of
``div(K grad u) = 0`` (see :mod:`pinn_inverse.data.fv`).  The estimate minimises

    |u* - H_u u(k)|^2 + |ln k* - H_K ln k|^2 + gamma |L ln k|^2

over ``ln k`` with Levenberg-Marquardt.  Sensitivities of ``u`` are never
formed explicitly: Jacobian products cost one forward-sensitivity or one
adjoint solve with the factorised system matrix.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .data.fv import BoundarySpec, Dirichlet, assemble_tpfa, linear_transmissibilities
from .data.grid import Field

__all__ = [
    "MapConfig",
    "ObservationOperators",
    "MapResult",
    "TpfaModel",
    "discrete_gradient_operator",
    "adjoint_gradient",
    "levenberg_marquardt",
    "map_estimate",
]


@dataclass(frozen=True)
class MapConfig:
    gamma_reg: float = 1e-6
    damping: float = 1e-3
    damping_increase: float = 10.0
    damping_decrease: float = 10.0
    damping_max: float = 1e16
    max_iterations: int = 200
    tolerance: float = 1e-10
    jacobian: str = "matrix-free"
    cg_tolerance: float = 1e-10
    cg_max_iterations: int = 5000

    def __post_init__(self):
        if self.gamma_reg < 0:
            raise ValueError("gamma_reg must be non-negative")
        if self.damping <= 0:
            raise ValueError("damping must be positive")
        if self.jacobian not in ("matrix-free", "dense"):
            raise ValueError("jacobian must be 'matrix-free' or 'dense'")


@dataclass(frozen=True)
class ObservationOperators:
    """Cell-selection operators, rows in canonical (cell, value) order.

    The canonical order makes the estimate independent of the order in which
    observations were listed.
    """

    n_cells: int
    u_cells: np.ndarray
    u_values: np.ndarray
    k_cells: np.ndarray
    log_k_values: np.ndarray

    @classmethod
    def from_measurements(cls, grid, measurements, tol=1e-9):
        def cells_of(points, values):
            points = np.asarray(points, float).reshape(-1, 2)
            values = np.asarray(values, float).ravel()
            cells = grid.cell_of(points) if len(points) else np.zeros(0, int)
            if len(points) and np.max(np.abs(grid.centroids()[cells] - points)) > tol * max(grid.lx, grid.ly):
                raise ValueError("MAP observations must sit at cell centroids")
            order = np.lexsort((values, cells))
            return cells[order], values[order]

        u_cells, u_vals = cells_of(measurements.u_points, measurements.u_values)
        k_vals = np.asarray(measurements.k_values, float)
        if np.any(k_vals <= 0):
            raise ValueError("K observations must be positive")
        k_cells, log_k = cells_of(measurements.k_points, np.log(k_vals) if len(k_vals) else k_vals)
        return cls(grid.n_cells, u_cells, u_vals, k_cells, log_k)

    def _select(self, cells):
        n = len(cells)
        return sp.csr_matrix((np.ones(n), (np.arange(n), cells)), shape=(n, self.n_cells))

    @property
    def H_u(self):
        return self._select(self.u_cells)

    @property
    def H_k(self):
        return self._select(self.k_cells)


def discrete_gradient_operator(grid):
    """One row per interior face: (v_neighbour - v_cell) / spacing."""
    a, b, _, _, dist = grid.interior_faces()
    n = len(a)
    rows = np.concatenate([np.arange(n), np.arange(n)])
    cols = np.concatenate([b, a])
    vals = np.concatenate([1.0 / dist, -1.0 / dist])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, grid.n_cells))


class TpfaModel:
    """Forward map ``ln k -> u`` with sensitivities; counts linear solves."""

    def __init__(self, grid, bc=None):
        self.grid = grid
        self.bc = BoundarySpec.linear_default() if bc is None else bc
        if not self.bc.has_dirichlet():
            raise ValueError("the forward problem needs a Dirichlet edge")
        self.n_solves = 0
        self._faces = grid.interior_faces()

    def linearize(self, log_k):
        """Solve the forward problem at ``log_k``; returns a :class:`_State`."""
        k = np.exp(np.asarray(log_k, float))
        t_int, t_bnd = linear_transmissibilities(self.grid, k, self.bc)
        A, rhs = assemble_tpfa(self.grid, t_int, t_bnd, self.bc)
        lu = spla.splu(A.tocsc())
        state = _State(self, k, A, lu)
        state.u = state.solve(rhs)
        state.B = self._sensitivity_matrix(k, state.u, t_bnd)
        return state

    def _sensitivity_matrix(self, k, u, t_bnd):
        """d(A(k) u - rhs(k)) / d ln k at fixed ``u``."""
        a, b, _, area, dist = self._faces
        ka, kb = k[a], k[b]
        denom = (ka + kb) ** 2
        dt_a = area / dist * 2.0 * kb * kb / denom * ka
        dt_b = area / dist * 2.0 * ka * ka / denom * kb
        du = u[a] - u[b]
        rows = [a, a, b, b]
        cols = [a, b, a, b]
        vals = [dt_a * du, dt_b * du, -dt_a * du, -dt_b * du]
        for edge, cond in self.bc.items():
            if isinstance(cond, Dirichlet):
                cells, pts = self.grid.boundary_cells(edge)
                rows.append(cells)
                cols.append(cells)
                vals.append(t_bnd[edge] * (u[cells] - cond.values_at(pts)))
        n = self.grid.n_cells
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))

    def solve_u(self, log_k):
        return self.linearize(log_k).u


@dataclass
class _State:
    model: TpfaModel
    k: np.ndarray
    A: object
    lu: object
    u: np.ndarray = None
    B: object = None

    def solve(self, rhs):
        self.model.n_solves += 1
        return self.lu.solve(np.asarray(rhs, float))

    def jvp(self, v):
        """du/dln k . v (one solve)."""
        return -self.solve(self.B @ v)

    def vjp(self, w):
        """(du/dln k)^T w (one adjoint solve; the TPFA matrix is symmetric)."""
        return -(self.B.T @ self.solve(w))


def _observations(grid, measurements):
    if isinstance(measurements, ObservationOperators):
        return measurements
    return ObservationOperators.from_measurements(grid, measurements)


def adjoint_gradient(grid, k, bc, measurements, include_k_term=True, model=None):
    """Gradient of the data misfit with respect to ``ln k``.

    Costs one forward and one adjoint solve.  Returns ``(gradient, misfit)``.
    """
    obs = _observations(grid, measurements)
    k = np.asarray(getattr(k, "values", k), dtype=float)
    if np.any(k <= 0):
        raise ValueError("conductivity must be positive")
    model = model or TpfaModel(grid, bc)
    log_k = np.log(k)
    state = model.linearize(log_k)
    ru = state.u[obs.u_cells] - obs.u_values
    misfit = float(ru @ ru)
    w = np.zeros(grid.n_cells)
    np.add.at(w, obs.u_cells, ru)
    grad = 2.0 * state.vjp(w)
    if include_k_term and len(obs.k_cells):
        rk = log_k[obs.k_cells] - obs.log_k_values
        misfit += float(rk @ rk)
        np.add.at(grad, obs.k_cells, 2.0 * rk)
    return grad, misfit


@dataclass
class Linearization:
    """Residual and Jacobian products at one point."""

    residual: np.ndarray
    matvec: object
    rmatvec: object
    dense: np.ndarray = None


def _lm_step(lin, mu, n, config):
    g = lin.rmatvec(lin.residual)
    if lin.dense is not None:
        J = lin.dense
        M = J.T @ J + mu * np.eye(n)
        return np.linalg.solve(M, -g) if mu > 0 else np.linalg.lstsq(J, -lin.residual, rcond=None)[0]
    op = spla.LinearOperator((n, n), matvec=lambda v: lin.rmatvec(lin.matvec(v)) + mu * v, dtype=float)
    step, info = spla.cg(op, -g, rtol=config.cg_tolerance, atol=0.0, maxiter=config.cg_max_iterations)
    return step


@dataclass
class LmResult:
    x: np.ndarray
    objective: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    stagnated: bool = False
    damping: list = field(default_factory=list)


def levenberg_marquardt(linearize, x0, config=MapConfig()):
    """Minimise ``|r(x)|^2``; ``linearize(x)`` returns a :class:`Linearization`.

    Damping is divided by ``damping_decrease`` after an accepted step and
    multiplied by ``damping_increase`` after a rejected one.
    """
    x = np.array(x0, dtype=float)
    lin = linearize(x)
    obj = float(lin.residual @ lin.residual)
    result = LmResult(x, [obj])
    mu = config.damping
    n = len(x)
    for it in range(config.max_iterations):
        step = _lm_step(lin, mu, n, config)
        x_new = x + step
        lin_new = linearize(x_new)
        obj_new = float(lin_new.residual @ lin_new.residual)
        if np.isfinite(obj_new) and obj_new < obj:
            decrease = obj - obj_new
            x, lin, obj = x_new, lin_new, obj_new
            result.objective.append(obj)
            result.damping.append(mu)
            result.iterations = it + 1
            mu = mu / config.damping_decrease
            if decrease <= config.tolerance * max(obj + decrease, np.finfo(float).tiny):
                result.converged = True
                break
            if obj == 0.0:
                result.converged = True
                break
        else:
            mu *= config.damping_increase
            if mu > config.damping_max:
                result.stagnated = True
                break
    result.x = x
    return result


@dataclass
class MapResult:
    k_hat: Field
    objective: list
    iterations: int
    converged: bool
    stagnated: bool
    n_solves: int


def map_estimate(grid, measurements, bc=None, config=MapConfig(), log_k0=None):
    """MAP estimate of cell-wise K (returned as ``exp`` of the ln K optimum)."""
    obs = _observations(grid, measurements)
    model = TpfaModel(grid, bc)
    L = discrete_gradient_operator(grid)
    sq_gamma = np.sqrt(config.gamma_reg)
    H_u, H_k = obs.H_u, obs.H_k
    n = grid.n_cells
    if log_k0 is None:
        start = float(np.mean(obs.log_k_values)) if len(obs.log_k_values) else 0.0
        log_k0 = np.full(n, start)

    def linearize(log_k):
        state = model.linearize(log_k)
        r = np.concatenate([
            H_u @ state.u - obs.u_values,
            H_k @ log_k - obs.log_k_values,
            sq_gamma * (L @ log_k),
        ])
        nu, nk = H_u.shape[0], H_k.shape[0]

        def matvec(v):
            return np.concatenate([H_u @ state.jvp(v), H_k @ v, sq_gamma * (L @ v)])

        def rmatvec(w):
            return state.vjp(H_u.T @ w[:nu]) + H_k.T @ w[nu : nu + nk] + sq_gamma * (L.T @ w[nu + nk :])

        dense = None
        if config.jacobian == "dense":
            rows = np.array([state.vjp(h) for h in H_u.toarray()]).reshape(nu, n)
            dense = np.vstack([rows, H_k.toarray(), sq_gamma * L.toarray()])
        return Linearization(r, matvec, rmatvec, dense)

    lm = levenberg_marquardt(linearize, log_k0, config)
    return MapResult(Field(grid, np.exp(lm.x)), lm.objective, lm.iterations, lm.converged, lm.stagnated, model.n_solves)
