"""Uniform rectangular grid and classification of cells against a front.

Cells are indexed (i, j) with i along x and j along y, 0-based; flat indices
are row-major (j * nx + i).  A cell is a tip cell when the closed front
polyline crosses its closed boundary (corner touches count); fracture cells
not intersected are internal or ribbon depending on tip adjacency.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EXTERNAL, TIP, RIBBON, INTERNAL = 0, 1, 2, 3


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    dx: float
    dy: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.dx <= 0.0 or self.dy <= 0.0:
            raise ValueError("cell sizes must be positive")

    def centers(self):
        x = self.origin[0] + np.arange(self.nx) * self.dx
        y = self.origin[1] + np.arange(self.ny) * self.dy
        return np.meshgrid(x, y)  # shape (ny, nx)

    def center_of(self, flat):
        j, i = divmod(int(flat), self.nx)
        return (self.origin[0] + i * self.dx, self.origin[1] + j * self.dy)

    def flat(self, i, j):
        return j * self.nx + i

    def cell_of_point(self, x, y):
        i = int(round((x - self.origin[0]) / self.dx))
        j = int(round((y - self.origin[1]) / self.dy))
        if not (0 <= i < self.nx and 0 <= j < self.ny):
            raise ValueError("point outside the grid")
        return self.flat(i, j)


@dataclass
class Classification:
    grid: Grid
    codes: np.ndarray  # (ny*nx,) int8
    internal: np.ndarray = field(default=None)
    ribbon: np.ndarray = field(default=None)
    tip: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.internal is None:
            self.internal = np.flatnonzero(self.codes == INTERNAL)
        if self.ribbon is None:
            self.ribbon = np.flatnonzero(self.codes == RIBBON)
        if self.tip is None:
            self.tip = np.flatnonzero(self.codes == TIP)

    @property
    def fracture(self):
        return np.flatnonzero(self.codes != EXTERNAL)

    @property
    def channel(self):
        return np.flatnonzero((self.codes == INTERNAL) | (self.codes == RIBBON))

    def counts(self):
        return dict(internal=len(self.internal), ribbon=len(self.ribbon),
                    tip=len(self.tip),
                    fracture=len(self.internal) + len(self.ribbon) + len(self.tip))


def _segments_self_intersect(pts) -> bool:
    """Check a closed polyline for self intersection (brute force)."""
    n = len(pts)
    a = pts
    b = np.roll(pts, -1, axis=0)
    d = b - a
    for i in range(n):
        # skip the segment itself and its two neighbours
        js = [j for j in range(i + 2, n) if not (i == 0 and j == n - 1)]
        if not js:
            continue
        js = np.array(js)
        r = d[i]
        s = d[js]
        qp = a[js] - a[i]
        denom = r[0] * s[:, 1] - r[1] * s[:, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]) / denom
            u = (qp[:, 0] * r[1] - qp[:, 1] * r[0]) / denom
        hit = (np.abs(denom) > 1e-14) & (t > 1e-12) & (t < 1 - 1e-12) \
            & (u > 1e-12) & (u < 1 - 1e-12)
        if np.any(hit):
            return True
    return False


def _point_in_polygon(px, py, pts):
    """Vectorized even-odd rule for arrays of points against a closed polyline."""
    x0 = pts[:, 0]
    y0 = pts[:, 1]
    x1 = np.roll(x0, -1)
    y1 = np.roll(y0, -1)
    inside = np.zeros(px.shape, dtype=bool)
    for k in range(len(pts)):
        cond = (y0[k] > py) != (y1[k] > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (x1[k] - x0[k]) * (py - y0[k]) / (y1[k] - y0[k]) + x0[k]
        inside ^= cond & (px < xint)
    return inside


def _segment_crosses_cells(grid: Grid, p, q, hit):
    """Mark cells whose closed boundary the segment [p, q] crosses."""
    ox, oy = grid.origin
    dx, dy = grid.dx, grid.dy
    # cell (i,j) spans [ox+(i-1/2)dx, ox+(i+1/2)dx] x [...]
    i_lo = int(np.floor((min(p[0], q[0]) - ox) / dx - 0.5))
    i_hi = int(np.ceil((max(p[0], q[0]) - ox) / dx + 0.5))
    j_lo = int(np.floor((min(p[1], q[1]) - oy) / dy - 0.5))
    j_hi = int(np.ceil((max(p[1], q[1]) - oy) / dy + 0.5))
    eps = 1e-11 * (dx + dy)  # keep exact corner touches conservative
    for j in range(max(j_lo, 0), min(j_hi + 1, grid.ny)):
        ylo = oy + (j - 0.5) * dy - eps
        yhi = ylo + dy + 2 * eps
        for i in range(max(i_lo, 0), min(i_hi + 1, grid.nx)):
            xlo = ox + (i - 0.5) * dx - eps
            xhi = xlo + dx + 2 * eps
            if _segment_touches_rect(p, q, xlo, xhi, ylo, yhi):
                hit[j * grid.nx + i] = True


def _segment_touches_rect(p, q, xlo, xhi, ylo, yhi) -> bool:
    """Liang-Barsky style overlap test, closed rectangle (touch counts)."""
    t0, t1 = 0.0, 1.0
    dx = q[0] - p[0]
    dy = q[1] - p[1]
    for d, lo, hi, c in ((dx, xlo, xhi, p[0]), (dy, ylo, yhi, p[1])):
        if abs(d) < 1e-300:
            if c < lo or c > hi:
                return False
            continue
        ta = (lo - c) / d
        tb = (hi - c) / d
        if ta > tb:
            ta, tb = tb, ta
        t0 = max(t0, ta)
        t1 = min(t1, tb)
        if t0 > t1:
            return False
    return True


def classify(grid: Grid, front: np.ndarray) -> Classification:
    """Partition all cells into internal/ribbon/tip/external for a front.

    front: (S, 2) array of closed-polyline vertices (last joins first).
    """
    pts = np.asarray(front, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ValueError("front must be a closed polyline with >= 3 vertices")
    if _segments_self_intersect(pts):
        raise ValueError("front polyline is self-intersecting")

    ncell = grid.nx * grid.ny
    hit = np.zeros(ncell, dtype=bool)
    for k in range(len(pts)):
        _segment_crosses_cells(grid, pts[k], pts[(k + 1) % len(pts)], hit)

    X, Y = grid.centers()
    inside = _point_in_polygon(X.ravel(), Y.ravel(), pts)

    codes = np.full(ncell, EXTERNAL, dtype=np.int8)
    codes[inside] = INTERNAL  # provisional; refined below
    codes[hit] = TIP

    # ribbon: fracture (non-tip) cells sharing a side with a tip cell
    tipmask = hit.reshape(grid.ny, grid.nx)
    nb = np.zeros_like(tipmask)
    nb[:, 1:] |= tipmask[:, :-1]
    nb[:, :-1] |= tipmask[:, 1:]
    nb[1:, :] |= tipmask[:-1, :]
    nb[:-1, :] |= tipmask[1:, :]
    ribbon = (codes.reshape(grid.ny, grid.nx) == INTERNAL) & nb
    codes[ribbon.ravel()] = RIBBON

    cls = Classification(grid, codes)
    _validate(grid, cls)
    return cls


def _validate(grid: Grid, cls: Classification):
    frac = cls.fracture
    if len(frac) == 0:
        raise ValueError("front encloses no cells")
    js, is_ = np.divmod(frac, grid.nx)
    if is_.min() < 1 or is_.max() > grid.nx - 2 or js.min() < 1 or js.max() > grid.ny - 2:
        raise ValueError("front touches the grid boundary; domain too small")
    if is_.max() - is_.min() < 2 or js.max() - js.min() < 2:
        raise ValueError("fracture smaller than a 3x3 cell footprint")
    if len(cls.internal) == 0:
        raise ValueError("fracture has no internal cell; refine the grid")


def update_collections(grid: Grid, old: Classification,
                       front: np.ndarray) -> Classification:
    """Reclassify for an advanced front, enforcing monotone growth.

    The front must have moved outward by less than one cell pitch since the
    classification `old` was computed.
    """
    new = classify(grid, front)
    reverted = (old.codes != EXTERNAL) & (new.codes == EXTERNAL)
    if np.any(reverted):
        raise ValueError("cells reverted to external; front is not expanding")
    born = (old.codes == EXTERNAL) & (new.codes != EXTERNAL)
    if np.any(born):
        oldfrac = (old.codes != EXTERNAL).reshape(grid.ny, grid.nx)
        near = np.zeros_like(oldfrac)
        near |= oldfrac
        near[:, 1:] |= oldfrac[:, :-1]
        near[:, :-1] |= oldfrac[:, 1:]
        near[1:, :] |= oldfrac[:-1, :]
        near[:-1, :] |= oldfrac[1:, :]
        # allow diagonal growth too (corner-adjacent)
        near[1:, 1:] |= oldfrac[:-1, :-1]
        near[1:, :-1] |= oldfrac[:-1, 1:]
        near[:-1, 1:] |= oldfrac[1:, :-1]
        near[:-1, :-1] |= oldfrac[1:, 1:]
        if np.any(born & ~near.ravel()):
            raise ValueError("front advanced more than one cell pitch "
                             "between collection updates")
    return new
