"""Front reconstruction: envelope-of-circles tangents and marker advection.

The envelope construction builds, for every pair of successive ribbon-cell
circles (ordered counter-clockwise), the external tangent line; the front
polyline connects the intersections of consecutive tangent lines.  The
tangent angle follows from the circle geometry as

    alpha = gamma_d - arccos((r1 - r2) / d)

which resolves the sign branches of the tan/cos/sin forms in one expression
and degenerates smoothly to alpha = gamma_d - pi/2 for equal radii.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Grid, Classification, _segments_self_intersect

_PARALLEL_TOL = 1e-12


@dataclass
class FrontPolyline:
    """Closed counter-clockwise polyline with outward vertex normals."""

    points: np.ndarray  # (n, 2)

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=float)
        if self.points.ndim != 2 or len(self.points) < 3:
            raise ValueError("need at least three points")

    def vertex_normals(self) -> np.ndarray:
        """Outward unit normals by the central-difference formula."""
        p = self.points
        nxt = np.roll(p, -1, axis=0)
        prv = np.roll(p, 1, axis=0)
        tx = nxt[:, 0] - prv[:, 0]
        ty = nxt[:, 1] - prv[:, 1]
        ds = np.hypot(tx, ty)
        if np.any(ds == 0.0):
            raise ValueError("repeated marker points")
        return np.stack([ty / ds, -tx / ds], axis=1)

    def segment_normals(self) -> np.ndarray:
        p = self.points
        nxt = np.roll(p, -1, axis=0)
        tx = nxt[:, 0] - p[:, 0]
        ty = nxt[:, 1] - p[:, 1]
        ds = np.hypot(tx, ty)
        return np.stack([ty / ds, -tx / ds], axis=1)

    def is_simple(self) -> bool:
        return not _segments_self_intersect(self.points)

    def signed_area(self) -> float:
        p = self.points
        q = np.roll(p, -1, axis=0)
        return 0.5 * float(np.sum(p[:, 0] * q[:, 1] - q[:, 0] * p[:, 1]))

    def to_csv(self, path):
        n = self.vertex_normals()
        data = np.column_stack([self.points, n])
        np.savetxt(path, data, delimiter=",", header="x,y,nx,ny", comments="")


def envelope_tangent(c1, r1: float, c2, r2: float):
    """External tangent to two circles, front oriented counter-clockwise.

    Returns (alpha, tau1, tau2): the angle of the outward normal with the
    x-axis and the tangent points on each circle.
    """
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    if r1 <= 0.0 or r2 <= 0.0:
        raise ValueError("circle radii must be positive")
    dvec = c2 - c1
    d = float(np.hypot(*dvec))
    if d <= abs(r1 - r2):
        raise ValueError(
            f"no external tangent: center distance {d:.3g} <= |r1-r2| "
            f"= {abs(r1 - r2):.3g} (one circle contains the other)")
    gamma_d = np.arctan2(dvec[1], dvec[0])
    alpha = gamma_d - np.arccos((r1 - r2) / d)
    n = np.array([np.cos(alpha), np.sin(alpha)])
    return alpha, c1 + n * r1, c2 + n * r2


def _order_ring(centers: np.ndarray) -> np.ndarray:
    """Counter-clockwise ordering of ribbon centers about their centroid."""
    ctr = centers.mean(axis=0)
    ang = np.arctan2(centers[:, 1] - ctr[1], centers[:, 0] - ctr[0])
    return np.argsort(ang)


def reconstruct_envelope(centers, radii):
    """Piecewise-linear envelope of the ribbon distance-circles.

    centers: (m, 2) ribbon-cell centers; radii: per-cell front distances.
    Vertices are intersections of tangent lines of successive circle pairs.
    """
    centers = np.asarray(centers, dtype=float)
    radii = np.asarray(radii, dtype=float)
    m = len(centers)
    if m < 3:
        raise ValueError("need at least three ribbon circles")
    if np.any(radii <= 0.0):
        raise ValueError("all ribbon distances must be positive")
    order = _order_ring(centers)
    cs = centers[order]
    rs = radii[order]

    taus = []
    normals = []
    for k in range(m):
        k2 = (k + 1) % m
        try:
            alpha, t1, t2 = envelope_tangent(cs[k], rs[k], cs[k2], rs[k2])
        except ValueError as exc:
            raise ValueError(
                f"inconsistent ribbon radii between cells {k} and {k2}: {exc}"
            ) from exc
        taus.append((t1, t2))
        normals.append((np.cos(alpha), np.sin(alpha)))

    verts = np.empty((m, 2))
    for k in range(m):
        kp = (k - 1) % m
        v = _line_intersection(taus[kp][0], normals[kp], taus[k][0], normals[k])
        if v is None:  # parallel tangents: join at the shared tangent point
            v = 0.5 * (taus[kp][1] + taus[k][0])
        verts[k] = v

    poly = FrontPolyline(verts)
    if poly.signed_area() < 0.0:
        poly = FrontPolyline(verts[::-1])
    if not poly.is_simple():
        worst = int(np.argmax(np.abs(np.diff(rs, append=rs[0]))))
        raise ValueError(
            f"envelope self-intersects; ribbon radii inconsistent near pair "
            f"({worst}, {(worst + 1) % m})")
    return poly


def _line_intersection(p1, n1, p2, n2):
    """Intersection of lines {x: (x-p)?n = 0}; None when nearly parallel."""
    a = np.array([[n1[0], n1[1]], [n2[0], n2[1]]])
    det = a[0, 0] * a[1, 1] - a[0, 1] * a[1, 0]
    if abs(det) < _PARALLEL_TOL:
        return None
    b = np.array([p1[0] * n1[0] + p1[1] * n1[1],
                  p2[0] * n2[0] + p2[1] * n2[1]])
    return np.linalg.solve(a, b)


def advance_markers(front: FrontPolyline, speeds, dt: float) -> FrontPolyline:
    """Move each marker along its current outward normal by speed * dt."""
    speeds = np.asarray(speeds, dtype=float)
    if speeds.shape != (len(front.points),):
        raise ValueError("one speed per marker required")
    if np.any(speeds < 0.0):
        raise ValueError("marker speeds must be non-negative")
    n = front.vertex_normals()
    moved = FrontPolyline(front.points + speeds[:, None] * n * dt)
    if not moved.is_simple():
        raise ValueError("advanced front folds over itself")
    return moved


def tip_geometry(grid: Grid, cls: Classification, front: FrontPolyline):
    """Per-tip-cell front normal and activation flag.

    The normal comes from the front segment crossing the cell (longest chord
    wins when several cross); activation means the cell center lies behind
    the front.
    """
    from .mesh import _point_in_polygon, _segment_touches_rect

    pts = front.points
    segn = front.segment_normals()
    nseg = len(pts)
    normals = {}
    anchors = {}
    for k in cls.tip:
        cx, cy = grid.center_of(k)
        xlo, xhi = cx - grid.dx / 2, cx + grid.dx / 2
        ylo, yhi = cy - grid.dy / 2, cy + grid.dy / 2
        best = -1.0
        for s in range(nseg):
            p, q = pts[s], pts[(s + 1) % nseg]
            chord = _chord_length(p, q, xlo, xhi, ylo, yhi)
            if chord > best:
                best = chord
                normals[k] = segn[s]
                anchors[k] = p
        if best <= 0.0:
            # pick the nearest segment when the polyline only grazes the cell
            mid = 0.5 * (pts + np.roll(pts, -1, axis=0))
            s = int(np.argmin((mid[:, 0] - cx) ** 2 + (mid[:, 1] - cy) ** 2))
            normals[k] = segn[s]
            anchors[k] = pts[s]
    centers = np.array([grid.center_of(k) for k in cls.tip], dtype=float)
    if len(centers):
        act = _point_in_polygon(centers[:, 0], centers[:, 1], pts)
    else:
        act = np.zeros(0, dtype=bool)
    activated = {k: bool(a) for k, a in zip(cls.tip, act)}
    return normals, anchors, activated


def _chord_length(p, q, xlo, xhi, ylo, yhi) -> float:
    """Length of the part of segment [p, q] inside the rectangle."""
    t0, t1 = 0.0, 1.0
    dx = q[0] - p[0]
    dy = q[1] - p[1]
    for d, lo, hi, c in ((dx, xlo, xhi, p[0]), (dy, ylo, yhi, p[1])):
        if abs(d) < 1e-300:
            if c < lo or c > hi:
                return -1.0
            continue
        ta, tb = (lo - c) / d, (hi - c) / d
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 > t1:
            return -1.0
    return (t1 - t0) * np.hypot(dx, dy)
