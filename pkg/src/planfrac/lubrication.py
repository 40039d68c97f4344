"""Poiseuille-type side velocities, discrete continuity, source regularization.

Side-flux array conventions on an (ny, nx) grid:
    qx[j, i]  flux through the vertical side between cells (i-1, j) and (i, j)
              (left side of cell (i, j)), i = 0..nx;  positive along +x
    qy[j, i]  flux through the horizontal side below cell (i, j), j = 0..ny;
              positive along +y

The discrete divergence built from these arrays telescopes exactly, so the
total fluid volume obeys dV/dt = Q0 f(t) - sum(leakoff) identically for any
side-flux assignment with zero fluxes on outer borders.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .mesh import Grid

GRAD_FLOOR = 1e-30  # |grad p| below this is treated as no driving force


@dataclass
class FluidModel:
    """Power-law fluid in normalized units (consistency mu' = 1)."""

    n: float = 1.0
    q0: float = 1.0
    source_cell: int | None = None
    leakoff: np.ndarray | float = 0.0
    profile: Callable[[float], float] = field(default=lambda t: 1.0)

    def __post_init__(self):
        if not 0.0 < self.n <= 1.0:
            raise ValueError(f"fluid behavior index must be in (0,1], got {self.n}")
        if self.q0 <= 0.0:
            raise ValueError("source intensity must be positive")
        if np.any(np.asarray(self.leakoff) < 0.0):
            raise ValueError("leak-off must be non-negative")


def side_velocity(w_side, grad_x, grad_y, n: float, component: str = "x"):
    """Particle velocity on a cell side from the discretized Poiseuille law.

    v = -{ w^(n+1) [gx^2 + gy^2]^((1-n)/2) }^(1/n) * (component gradient).
    For n = 1 the bracket is exactly 1 and v = -w^2 * grad.
    """
    w = np.asarray(w_side, dtype=float)
    gx = np.asarray(grad_x, dtype=float)
    gy = np.asarray(grad_y, dtype=float)
    g = gx if component == "x" else gy
    if n == 1.0:
        return -w * w * g
    mag2 = gx * gx + gy * gy
    mag = np.sqrt(mag2)
    # the full expression vanishes with the gradient even though the
    # |grad|^((1-n)/n) factor alone diverges; floor avoids 0 * inf
    mag = np.where(mag < GRAD_FLOOR, GRAD_FLOOR, mag)
    fac = (np.maximum(w, 0.0) ** (n + 1.0) * mag ** (1.0 - n)) ** (1.0 / n)
    out = -fac * g
    return np.where(np.sqrt(mag2) < GRAD_FLOOR, 0.0, out)


def continuity_rhs(grid: Grid, qx: np.ndarray, qy: np.ndarray,
                   fluid: FluidModel, t: float = 0.0,
                   source_override: bool = False) -> np.ndarray:
    """dw/dt per cell from side fluxes, leak-off and the point source.

    Returns an (ny, nx) array.  When source_override is set the source cell
    is handled by prescribed side fluxes and its own rate is zeroed (the
    regularized treatment); otherwise the pumped rate enters the source cell
    as Q0 f(t) / (dx dy).
    """
    if qx.shape != (grid.ny, grid.nx + 1) or qy.shape != (grid.ny + 1, grid.nx):
        raise ValueError("side-flux array shapes do not match the grid")
    dwdt = (qx[:, :-1] - qx[:, 1:]) / grid.dx + (qy[:-1, :] - qy[1:, :]) / grid.dy
    leak = np.asarray(fluid.leakoff, dtype=float)
    if leak.ndim:
        dwdt = dwdt - leak.reshape(grid.ny, grid.nx)
    elif leak != 0.0:
        dwdt = dwdt - leak
    if fluid.source_cell is not None:
        j, i = divmod(fluid.source_cell, grid.nx)
        if source_override:
            dwdt[j, i] = 0.0
        else:
            dwdt[j, i] += fluid.q0 * fluid.profile(t) / (grid.dx * grid.dy)
    return dwdt


def source_side_fluxes(dx: float, dy: float, q0: float = 1.0):
    """Averaged near-source fluxes on the four sides of the source cell.

    q_xav = Q0/(pi dy) atan(dy/dx) on the vertical sides, q_yav likewise on
    the horizontal ones; 2 q_xav dy + 2 q_yav dx = Q0 identically.
    """
    if dx <= 0.0 or dy <= 0.0:
        raise ValueError("cell sizes must be positive")
    q_xav = q0 / (np.pi * dy) * np.arctan(dy / dx)
    q_yav = q0 / (np.pi * dx) * np.arctan(dx / dy)
    return q_xav, q_yav


def apply_source_regularization(grid: Grid, qx: np.ndarray, qy: np.ndarray,
                                fluid: FluidModel, t: float = 0.0):
    """Override the four sides of the source cell with the averaged fluxes."""
    if fluid.source_cell is None:
        raise ValueError("fluid model has no source cell")
    j, i = divmod(fluid.source_cell, grid.nx)
    amp = fluid.q0 * fluid.profile(t)
    q_xav, q_yav = source_side_fluxes(grid.dx, grid.dy, amp)
    qx[j, i] = -q_xav       # left side, outflow along -x
    qx[j, i + 1] = q_xav    # right side, outflow along +x
    qy[j, i] = -q_yav       # bottom side
    qy[j + 1, i] = q_yav    # top side


def extrapolate_source_opening(w2d: np.ndarray, j: int, i: int) -> float:
    """Opening of the dropped source cell from its neighbours.

    Biquadratic (separable quadratic) extrapolation from the 8-neighbourhood
    when available, else the 4-neighbour average.
    """
    ny, nx = w2d.shape
    if 2 <= i < nx - 2 and 2 <= j < ny - 2:
        along_x = (4.0 * (w2d[j, i - 1] + w2d[j, i + 1])
                   - (w2d[j, i - 2] + w2d[j, i + 2])) / 6.0
        along_y = (4.0 * (w2d[j - 1, i] + w2d[j + 1, i])
                   - (w2d[j - 2, i] + w2d[j + 2, i])) / 6.0
        return 0.5 * (along_x + along_y)
    return 0.25 * (w2d[j, i - 1] + w2d[j, i + 1] + w2d[j - 1, i] + w2d[j + 1, i])
