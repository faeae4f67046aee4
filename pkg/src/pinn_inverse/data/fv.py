"""Two-point flux approximation (TPFA) solvers for steady diffusion.

Both solvers discretise ``div(K grad u) = 0`` on a :class:`Grid2D` with one
unknown per cell.  The discrete equation of a cell is the balance of the
outward fluxes ``T_f (u_c - u_neighbour)`` over its faces, with boundary
faces contributing through :class:`BoundarySpec`.
"""

from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import EDGES, Field


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Dirichlet:
    """Prescribed ``u``; ``value`` is a constant or a function of face points."""

    value: Union[float, Callable]

    def values_at(self, points):
        if callable(self.value):
            return np.asarray(self.value(points), dtype=float)
        return np.full(len(points), float(self.value))


@dataclass(frozen=True)
class NeumannFlux:
    """Prescribed normal flux ``n . K grad u = q`` (``n`` outward).

    Positive ``q`` drives fluid into the domain.
    """

    q: float


@dataclass(frozen=True)
class NoFlow:
    q: float = field(default=0.0, init=False)


@dataclass(frozen=True)
class BoundarySpec:
    left: object = NoFlow()
    right: object = NoFlow()
    bottom: object = NoFlow()
    top: object = NoFlow()

    def __post_init__(self):
        for edge in EDGES:
            if not isinstance(getattr(self, edge), (Dirichlet, NeumannFlux, NoFlow)):
                raise TypeError(f"{edge}: unsupported boundary condition {getattr(self, edge)!r}")

    def items(self):
        return [(edge, getattr(self, edge)) for edge in EDGES]

    def has_dirichlet(self):
        return any(isinstance(c, Dirichlet) for _, c in self.items())

    @classmethod
    def linear_default(cls):
        """u = 1 at x2 = 0, u = 0 at x2 = L2, no flow through the sides."""
        return cls(bottom=Dirichlet(1.0), top=Dirichlet(0.0))

    @classmethod
    def unsaturated(cls, u0, q):
        """Inflow ``q`` at x1 = 0, ``u = u0`` at x1 = L1, closed top/bottom."""
        return cls(left=NeumannFlux(q), right=Dirichlet(u0))


def harmonic_mean(a, b):
    return 2.0 * a * b / (a + b)


def assemble_tpfa(grid, t_interior, t_boundary, bc):
    """Sparse system ``A u = b`` from face transmissibilities.

    ``t_boundary`` maps each Dirichlet edge to the transmissibility of each
    of its faces (ordered as :meth:`Grid2D.boundary_cells`).
    """
    a, b, _, _, _ = grid.interior_faces()
    n = grid.n_cells
    rows = [a, b, a, b]
    cols = [a, b, b, a]
    vals = [t_interior, t_interior, -t_interior, -t_interior]
    rhs = np.zeros(n)
    for edge, cond in bc.items():
        cells, pts = grid.boundary_cells(edge)
        area, _ = grid.face_geometry(edge)
        if isinstance(cond, Dirichlet):
            t = t_boundary[edge]
            rows.append(cells)
            cols.append(cells)
            vals.append(t)
            np.add.at(rhs, cells, t * cond.values_at(pts))
        elif cond.q != 0.0:
            np.add.at(rhs, cells, cond.q * area)
    A = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return A, rhs


def linear_transmissibilities(grid, k, bc):
    """Harmonic-mean interior and half-cell Dirichlet transmissibilities."""
    a, b, _, area, dist = grid.interior_faces()
    t_int = harmonic_mean(k[a], k[b]) * area / dist
    t_bnd = {}
    for edge, cond in bc.items():
        if isinstance(cond, Dirichlet):
            cells, _ = grid.boundary_cells(edge)
            farea, half = grid.face_geometry(edge)
            t_bnd[edge] = k[cells] * farea / half
    return t_int, t_bnd


def _solve(A, rhs, rtol=1e-12):
    u = spla.spsolve(A.tocsc(), rhs)
    scale = max(np.linalg.norm(rhs), np.finfo(float).tiny)
    res = rhs - A @ u
    for _ in range(3):
        if np.linalg.norm(res) <= rtol * scale:
            break
        u = u + spla.spsolve(A.tocsc(), res)
        res = rhs - A @ u
    if not np.all(np.isfinite(u)):
        raise SolverError("linear solve produced non-finite values")
    return u


def _values(k, grid):
    k = k.values if isinstance(k, Field) else np.asarray(k, dtype=float).ravel()
    if k.shape != (grid.n_cells,):
        raise ValueError(f"expected {grid.n_cells} cell values, got {k.shape}")
    return k


def fv_solve_linear(grid, k_field, bc=None):
    """Solve ``div(K grad u) = 0`` for cell-wise constant ``K > 0``."""
    bc = BoundarySpec.linear_default() if bc is None else bc
    k = _values(k_field, grid)
    if np.any(~np.isfinite(k)) or np.any(k <= 0):
        raise ValueError("conductivity must be finite and strictly positive")
    if not bc.has_dirichlet():
        raise SolverError("pure-Neumann problem is singular: add a Dirichlet edge")
    A, rhs = assemble_tpfa(grid, *linear_transmissibilities(grid, k, bc), bc)
    return Field(grid, _solve(A, rhs))


def face_fluxes(grid, u, t_interior, t_boundary, bc):
    """Outward-oriented fluxes: interior (a -> b) and per-edge boundary arrays."""
    a, b, _, _, _ = grid.interior_faces()
    interior = t_interior * (u[a] - u[b])
    boundary = {}
    for edge, cond in bc.items():
        cells, pts = grid.boundary_cells(edge)
        area, _ = grid.face_geometry(edge)
        if isinstance(cond, Dirichlet):
            boundary[edge] = t_boundary[edge] * (u[cells] - cond.values_at(pts))
        else:
            boundary[edge] = np.full(len(cells), -cond.q * area)
    return interior, boundary


def cell_flux_balance(grid, u, t_interior, t_boundary, bc):
    """Net outward flux of every cell (zero for an exact discrete solution)."""
    a, b, _, _, _ = grid.interior_faces()
    interior, boundary = face_fluxes(grid, u, t_interior, t_boundary, bc)
    net = np.zeros(grid.n_cells)
    np.add.at(net, a, interior)
    np.add.at(net, b, -interior)
    for edge, flux in boundary.items():
        cells, _ = grid.boundary_cells(edge)
        np.add.at(net, cells, flux)
    return net


def linear_flux_balance(grid, k_field, u_field, bc=None):
    bc = BoundarySpec.linear_default() if bc is None else bc
    k, u = _values(k_field, grid), _values(u_field, grid)
    return cell_flux_balance(grid, u, *linear_transmissibilities(grid, k, bc), bc)


@dataclass(frozen=True)
class PicardConfig:
    damping: float = 0.5
    tol: float = 1e-8
    max_iter: int = 500


@dataclass
class PicardResult:
    u: Field
    iterations: int
    residual_norms: list
    updates: list


def nonlinear_transmissibilities(grid, u, conductivity, bc):
    """Arithmetic-mean face conductivities of ``K(u)`` frozen at ``u``."""
    a, b, _, area, dist = grid.interior_faces()
    kc = conductivity(u)
    t_int = 0.5 * (kc[a] + kc[b]) * area / dist
    t_bnd = {}
    for edge, cond in bc.items():
        if isinstance(cond, Dirichlet):
            cells, pts = grid.boundary_cells(edge)
            farea, half = grid.face_geometry(edge)
            kf = 0.5 * (kc[cells] + conductivity(cond.values_at(pts)))
            t_bnd[edge] = kf * farea / half
    return t_int, t_bnd


def picard_solve(grid, conductivity, bc, config=PicardConfig(), u_init=None):
    """Damped Picard iteration for ``div(K(u) grad u) = 0``.

    Each sweep freezes ``K`` at the current iterate, solves the linear TPFA
    system and moves a fraction ``config.damping`` of the way towards it.
    """
    if not bc.has_dirichlet():
        raise SolverError("pure-Neumann problem is singular: add a Dirichlet edge")
    if u_init is None:
        dvals = [c.values_at(grid.boundary_cells(e)[1]) for e, c in bc.items() if isinstance(c, Dirichlet)]
        u = np.full(grid.n_cells, float(np.mean(np.concatenate(dvals))))
    else:
        u = _values(u_init, grid).copy()
    residuals, updates = [], []
    for it in range(1, config.max_iter + 1):
        if not np.any(conductivity(u) > 0):
            raise SolverError("K(u) vanished everywhere")
        A, rhs = assemble_tpfa(grid, *nonlinear_transmissibilities(grid, u, conductivity, bc), bc)
        residuals.append(float(np.linalg.norm(A @ u - rhs)))
        u_lin = _solve(A, rhs)
        step = config.damping * (u_lin - u)
        u = u + step
        updates.append(float(np.max(np.abs(step))))
        if updates[-1] <= config.tol:
            return PicardResult(Field(grid, u), it, residuals, updates)
    raise SolverError(f"Picard iteration did not converge in {config.max_iter} sweeps (last update {updates[-1]:.3e})")


def fv_solve_vangenuchten(grid, vg, bc=None, solver_config=PicardConfig()):
    """Steady unsaturated pressure head under the van Genuchten ``K(u)``."""
    from .vangenuchten import van_genuchten_k

    bc = BoundarySpec.unsaturated(vg.u0, vg.q) if bc is None else bc
    return picard_solve(grid, lambda u: van_genuchten_k(u, vg), bc, solver_config).u
