"""Influence coefficients of the hypersingular elasticity operator.

Piecewise-constant openings on rectangular cells give the net pressure as
p = G w with a dense coefficient matrix.  The kernel depends only on the
index offset between receiver and source, so the full matrix is assembled
from a (2nx-1) x (2ny-1) offset table.  Normalized units: E' = 1,
compression-positive pressure; the self-coefficient is positive.

A plane-strain segment kernel (for straight 1-D fractures) is included:
p_i = sum_k L(i-k) w_k with L(m) = 1 / (pi dx (1 - 4 m^2)).
"""

from __future__ import annotations

import numpy as np

from .mesh import Classification, Grid


def _corner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.sqrt(a * a + b * b) / (a * b)


def influence_coefficient(di, dj, dx: float, dy: float):
    """Pressure at a cell center due to unit opening at offset (di, dj).

    Evaluates the four-corner closed form of the rectangular-patch finite
    part of the 1/R^3 kernel; finite for all integer offsets including 0.
    """
    if dx <= 0.0 or dy <= 0.0:
        raise ValueError("cell sizes must be positive")
    ax = np.asarray(di, dtype=float) * dx
    by = np.asarray(dj, dtype=float) * dy
    ap = ax - 0.5 * dx  # x_i - x_{k+1/2}
    am = ax + 0.5 * dx  # x_i - x_{k-1/2}
    bp = by - 0.5 * dy
    bm = by + 0.5 * dy
    val = (_corner(ap, bp) + _corner(am, bm) - _corner(am, bp) - _corner(ap, bm))
    return val / (8.0 * np.pi)


def offset_table(nx: int, ny: int, dx: float, dy: float) -> np.ndarray:
    """Kernel values for all offsets; entry [dj+ny-1, di+nx-1] = G(di, dj)."""
    di = np.arange(-(nx - 1), nx)
    dj = np.arange(-(ny - 1), ny)
    DI, DJ = np.meshgrid(di, dj)
    t = influence_coefficient(DI, DJ, dx, dy)
    # the kernel is even in the offset; enforce it exactly so the condensed
    # matrix is symmetric to the bit
    return 0.5 * (t + t[::-1, ::-1])


class InfluenceMatrix:
    """Dense influence matrix condensed to the fracture cells of a
    classification; rows and columns follow cls.fracture ordering."""

    def __init__(self, grid: Grid, cells: np.ndarray, table: np.ndarray | None = None):
        self.grid = grid
        self.cells = np.asarray(cells, dtype=int)
        if table is None:
            table = offset_table(grid.nx, grid.ny, grid.dx, grid.dy)
        self.table = table
        js, is_ = np.divmod(self.cells, grid.nx)
        di = is_[:, None] - is_[None, :]
        dj = js[:, None] - js[None, :]
        self.matrix = table[dj + grid.ny - 1, di + grid.nx - 1]

    def matvec(self, w: np.ndarray) -> np.ndarray:
        return self.matrix @ w


def assemble_influence(grid: Grid, cls: Classification,
                       table: np.ndarray | None = None) -> InfluenceMatrix:
    return InfluenceMatrix(grid, cls.fracture, table=table)


def pressure(cls: Classification, G: InfluenceMatrix, w: np.ndarray,
             stress_contrast=0.0) -> np.ndarray:
    """Net pressure p = G w + stress contrast on the fracture cells.

    w is the opening vector ordered like cls.fracture; stress_contrast is a
    scalar or a per-fracture-cell vector (compression positive).
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (len(G.cells),):
        raise ValueError(
            f"opening vector length {w.shape} does not match the "
            f"{len(G.cells)} fracture cells")
    dsig = np.asarray(stress_contrast, dtype=float)
    if dsig.ndim and dsig.shape != w.shape:
        raise ValueError("stress contrast shape mismatch")
    if not np.all(np.isfinite(dsig)):
        raise ValueError("stress contrast must be finite")
    return G.matvec(w) + dsig


# --- plane-strain segment kernel (straight 1-D fracture) -------------------

def line_influence_coefficient(m, dx: float):
    """Plane-strain pressure at offset m cells from a unit-opening segment."""
    if dx <= 0.0:
        raise ValueError("cell size must be positive")
    m = np.asarray(m, dtype=float)
    return 1.0 / (np.pi * dx * (1.0 - 4.0 * m * m))


def line_offset_table(ncells: int, dx: float) -> np.ndarray:
    """Kernel values for offsets -(ncells-1) .. ncells-1."""
    return line_influence_coefficient(np.arange(-(ncells - 1), ncells), dx)


def line_matrix(idx: np.ndarray, table: np.ndarray, ncells: int) -> np.ndarray:
    """Dense plane-strain matrix for the cell subset idx (absolute indices)."""
    idx = np.asarray(idx, dtype=int)
    off = idx[:, None] - idx[None, :]
    return table[off + ncells - 1]
