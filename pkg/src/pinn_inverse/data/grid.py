"""Regular cell-centred grids, cell fields and their text formats."""

from dataclasses import dataclass
from pathlib import Path

import numpy as np

EDGES = ("left", "right", "bottom", "top")


@dataclass(frozen=True)
class Grid2D:
    """Uniform ``nx`` x ``ny`` cells on ``[0, lx] x [0, ly]``.

    Cells are numbered row-major with ``j`` (the x2 index) outer:
    ``cell = j * nx + i``.
    """

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if self.nx <= 0 or self.ny <= 0:
            raise ValueError("cell counts must be positive")
        if self.lx <= 0 or self.ly <= 0:
            raise ValueError("domain extents must be positive")

    @property
    def dx(self):
        return self.lx / self.nx

    @property
    def dy(self):
        return self.ly / self.ny

    @property
    def n_cells(self):
        return self.nx * self.ny

    @property
    def cell_area(self):
        return self.dx * self.dy

    def cell_areas(self):
        return np.full(self.n_cells, self.cell_area)

    def index(self, i, j):
        return np.asarray(j) * self.nx + np.asarray(i)

    def centroids(self):
        """(n_cells, 2) array of cell centres in cell order."""
        x = (np.arange(self.nx) + 0.5) * self.lx / self.nx
        y = (np.arange(self.ny) + 0.5) * self.ly / self.ny
        X, Y = np.meshgrid(x, y)
        return np.column_stack([X.ravel(), Y.ravel()])

    def cell_of(self, points):
        """Index of the cell containing each point (closed domain)."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        i = np.clip(np.floor(points[:, 0] / self.dx).astype(int), 0, self.nx - 1)
        j = np.clip(np.floor(points[:, 1] / self.dy).astype(int), 0, self.ny - 1)
        return self.index(i, j)

    def interior_faces(self):
        """Interior faces as ``(cell_a, cell_b, axis, area, distance)``.

        ``cell_b`` is the neighbour in the positive ``axis`` direction.
        Faces normal to x come first.
        """
        jj, ii = np.meshgrid(np.arange(self.ny), np.arange(self.nx - 1), indexing="ij")
        ax = self.index(ii.ravel(), jj.ravel())
        jj, ii = np.meshgrid(np.arange(self.ny - 1), np.arange(self.nx), indexing="ij")
        ay = self.index(ii.ravel(), jj.ravel())
        a = np.concatenate([ax, ay])
        b = np.concatenate([ax + 1, ay + self.nx])
        axis = np.concatenate([np.zeros(len(ax), int), np.ones(len(ay), int)])
        area = np.where(axis == 0, self.dy, self.dx)
        dist = np.where(axis == 0, self.dx, self.dy)
        return a, b, axis, area, dist

    def boundary_cells(self, edge):
        """Cells adjacent to ``edge`` and the centres of their boundary faces."""
        if edge == "left":
            j = np.arange(self.ny)
            cells, pts = self.index(0, j), np.column_stack([np.zeros(self.ny), (j + 0.5) * self.dy])
        elif edge == "right":
            j = np.arange(self.ny)
            cells, pts = self.index(self.nx - 1, j), np.column_stack([np.full(self.ny, self.lx), (j + 0.5) * self.dy])
        elif edge == "bottom":
            i = np.arange(self.nx)
            cells, pts = self.index(i, 0), np.column_stack([(i + 0.5) * self.dx, np.zeros(self.nx)])
        elif edge == "top":
            i = np.arange(self.nx)
            cells, pts = self.index(i, self.ny - 1), np.column_stack([(i + 0.5) * self.dx, np.full(self.nx, self.ly)])
        else:
            raise ValueError(f"unknown edge {edge!r}; expected one of {EDGES}")
        return cells, pts

    def face_geometry(self, edge):
        """(face area, centre-to-face distance) for faces on ``edge``."""
        if edge in ("left", "right"):
            return self.dy, 0.5 * self.dx
        return self.dx, 0.5 * self.dy


@dataclass(frozen=True)
class Field:
    """One value per cell of ``grid``, stored in cell order."""

    grid: Grid2D
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64).ravel()
        if values.shape != (self.grid.n_cells,):
            raise ValueError(f"field has {values.size} values for {self.grid.n_cells} cells")
        object.__setattr__(self, "values", values)

    def as_image(self):
        """(ny, nx) view, row ``j`` = cells at height ``(j + 1/2) dy``."""
        return self.values.reshape(self.grid.ny, self.grid.nx)

    def map(self, fn):
        return Field(self.grid, fn(self.values))


def write_field(path, field):
    g = field.grid
    lines = [f"{g.nx} {g.ny} {g.lx:.17g} {g.ly:.17g}"]
    for row in field.as_image():
        lines.append(" ".join(f"{v:.17g}" for v in row))
    Path(path).write_text("\n".join(lines) + "\n")


def read_field(path):
    text = Path(path).read_text().split("\n", 1)
    nx, ny, lx, ly = text[0].split()
    grid = Grid2D(int(nx), int(ny), float(lx), float(ly))
    values = np.array(text[1].split(), dtype=np.float64)
    return Field(grid, values)


def write_points(path, points, values):
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    values = np.asarray(values, dtype=float).ravel()
    lines = [f"{x:.17g} {y:.17g} {v:.17g}" for (x, y), v in zip(points, values)]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_points(path):
    """Inverse of :func:`write_points`: ``(points (N, 2), values (N,))``."""
    data = np.loadtxt(path, ndmin=2)
    if data.size == 0:
        return np.zeros((0, 2)), np.zeros(0)
    return data[:, :2].copy(), data[:, 2].copy()
