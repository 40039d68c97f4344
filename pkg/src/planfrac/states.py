"""Simulation states: straight plane-strain (1-D) and planar (2-D) fractures.

Both states own the opening vector, the ribbon speed-equation variables, the
front description and the influence matrix, and expose the pieces the
steppers need: pressure evaluation, side-flux assembly with tip and source
overrides, collection updates, and the exactly-conserved volume audit.

Scheme choices shared by both lanes:
  - side openings are arithmetic averages of the adjacent nodal values;
  - the source-cell ODE is dropped: its side fluxes are prescribed (exactly
    mass-consistent) and its opening is extrapolated from the neighbours;
  - tip cells are seeded with the near-front mean opening of their filled
    part, and fill through their ribbon-side flux afterwards;
  - a tip cell is activated once the front passes its center; sides of
    non-activated tip cells carry no flux.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import elastic, lubrication
from .front import FrontPolyline, reconstruct_envelope, tip_geometry
from .mesh import Grid, Classification, classify, INTERNAL, RIBBON, TIP
from .selfsimilar import SelfSimilarSolution
from .tip import TipModel, speed_from_opening, uau_opening, tip_mean_opening, \
    tip_side_flux_asymptotic


@dataclass
class CostCounters:
    matvecs: int = 0
    explicit_steps: int = 0
    implicit_steps: int = 0
    outer_iterations: int = 0
    linear_solves: int = 0

    def snapshot(self):
        return dict(matvecs=self.matvecs, explicit_steps=self.explicit_steps,
                    implicit_steps=self.implicit_steps,
                    outer_iterations=self.outer_iterations,
                    linear_solves=self.linear_solves)


class Kgd1DState:
    """Straight plane-strain fracture on a fixed 1-D cell line."""

    kind = "kgd"

    def __init__(self, sol: SelfSimilarSolution, N: int, t0: float = 1.0,
                 tip: TipModel = None, fluid: lubrication.FluidModel = None,
                 eps_w: float = 1.0, grow: float = 1.3,
                 source_regularized: bool = True):
        from .tip import regime_preset

        if N < 4:
            raise ValueError("need at least 4 cells per half-length")
        self.sol = sol
        self.tipmodel = tip or regime_preset("viscosity", n=sol.n)
        self.fluid = fluid or lubrication.FluidModel(n=sol.n)
        self.source_regularized = source_regularized
        x0 = float(sol.x_star(t0))
        self.dx = x0 / N
        half = int(np.ceil(N * grow)) + 3
        self.ncells = 2 * half + 1
        self.i0 = half                      # source cell index
        self.x = (np.arange(self.ncells) - half) * self.dx
        self.t = float(t0)
        self.w = np.zeros(self.ncells)
        self.tipL, self.tipR = half - N, half + N
        ch = slice(self.tipL + 1, self.tipR)
        self.w[ch] = eps_w * sol.opening(self.x[ch], t0)
        self.front_R = x0
        self.front_L = -x0
        self.rR = self.front_R - self.x[self.tipR - 1]
        self.rL = self.x[self.tipL + 1] - self.front_L
        # tip cells: mean opening of the half-filled cell
        v0 = float(sol.front_speed(t0))
        d = self.front_R - (self.x[self.tipR] - 0.5 * self.dx)
        a = self.tipmodel.alpha
        wt = eps_w * self.tipmodel.A_w * v0 ** self.tipmodel.beta \
            * d ** (a + 1.0) / ((a + 1.0) * self.dx)
        self.w[self.tipR] = wt
        self.w[self.tipL] = wt
        self.vR = self._speed(self.w[self.tipR - 1], self.rR)
        self.vL = self._speed(self.w[self.tipL + 1], self.rL)
        self.table = elastic.line_offset_table(self.ncells, self.dx)
        self.counters = CostCounters()
        self.audit_t0 = self.t
        self.audit_v0 = self.audit_volume()
        self.max_balance_residual = 0.0

    # --- helpers ---------------------------------------------------------
    def _speed(self, w, r):
        if self.tipmodel.beta == 0.0:
            return 0.0  # toughness: distance tracked algebraically
        if w <= 0.0 or r <= 0.0:
            return 0.0
        return speed_from_opening(self.tipmodel, w, r)

    def fracture_index(self):
        return np.arange(self.tipL, self.tipR + 1)

    def half_length(self):
        return 0.5 * (self.front_R - self.front_L)

    def channel_mask(self):
        idx = self.fracture_index()
        ch = np.ones(len(idx), dtype=bool)
        ch[0] = ch[-1] = False
        return idx, ch

    def pressure(self, w_f):
        idx = self.fracture_index()
        M = elastic.line_matrix(idx, self.table, self.ncells)
        self.counters.matvecs += 1
        return M @ w_f

    def audit_volume(self):
        w = self.w.copy()
        if self.source_regularized:
            w[self.i0] = 0.0
        return float(np.sum(w) * self.dx)

    def total_volume(self):
        return float(np.sum(self.w) * self.dx)

    def record_balance(self):
        pumped = self.fluid.q0 * (self.t - self.audit_t0)
        res = abs((self.audit_volume() - self.audit_v0) - pumped) \
            / max(self.total_volume(), 1e-300)
        self.max_balance_residual = max(self.max_balance_residual, res)
        return res

    def interpolate_source(self, w_f, i0f):
        if len(w_f) >= 5:
            w_f[i0f] = (4.0 * (w_f[i0f - 1] + w_f[i0f + 1])
                        - (w_f[i0f - 2] + w_f[i0f + 2])) / 6.0
        else:
            w_f[i0f] = 0.5 * (w_f[i0f - 1] + w_f[i0f + 1])
        return w_f

    def activation(self):
        return (self.front_R > self.x[self.tipR],
                self.front_L < self.x[self.tipL])

    def side_distance(self, side: str) -> float:
        """Distance from the ribbon/tip common side to the front."""
        if side == "R":
            return self.front_R - (self.x[self.tipR] - 0.5 * self.dx)
        return (self.x[self.tipL] + 0.5 * self.dx) - self.front_L

    def tip_fluxes(self, strategy: str, w_f, q):
        """Override the ribbon/tip side fluxes in-place on the q array.

        q[k] is the flux through the left side of fracture cell k (local
        indexing); q[-1] the right side of the last cell.
        """
        nf = len(w_f)
        actR, actL = self.activation()
        if strategy == "statistical-pressure":
            return  # keep the raw pressure-based fluxes
        if strategy == "upwind-speed":
            wR_side = 0.5 * (w_f[-2] + w_f[-1])
            wL_side = 0.5 * (w_f[0] + w_f[1])
            q[nf - 1] = self.vR * wR_side if actR else 0.0
            q[1] = -self.vL * wL_side if actL else 0.0
        elif strategy == "asymptotic":
            q[nf - 1] = tip_side_flux_asymptotic(
                self.tipmodel, self.vR, (1.0, 0.0), self.side_distance("R"), "v")
            q[1] = tip_side_flux_asymptotic(
                self.tipmodel, self.vL, (-1.0, 0.0), self.side_distance("L"), "v")
        else:
            raise ValueError(f"unknown tip-flux strategy {strategy!r}")

    def update_collections_if_needed(self):
        """Promote tips passed by the front; returns True when changed."""
        changed = False
        while self.front_R > self.x[self.tipR] + 0.5 * self.dx:
            if self.tipR + 1 >= self.ncells:
                raise RuntimeError("fracture reached the right end of the line")
            self.tipR += 1
            self.rR = self.front_R - self.x[self.tipR - 1]
            self.vR = self._speed(self.w[self.tipR - 1], self.rR)
            changed = True
        while self.front_L < self.x[self.tipL] - 0.5 * self.dx:
            if self.tipL - 1 < 0:
                raise RuntimeError("fracture reached the left end of the line")
            self.tipL -= 1
            self.rL = self.x[self.tipL + 1] - self.front_L
            self.vL = self._speed(self.w[self.tipL + 1], self.rL)
            changed = True
        return changed

    def healthy(self):
        idx, ch = self.channel_mask()
        wch = self.w[idx][ch]
        return bool(np.all(np.isfinite(self.w)) and np.all(wch > 0.0)
                    and np.max(self.w) < 1e3)

    # --- reporting --------------------------------------------------------
    def cell_rho(self):
        idx = self.fracture_index()
        return np.abs(self.x[idx])

    def cell_openings(self):
        return self.w[self.fracture_index()]

    def interior_mask(self):
        idx = self.fracture_index()
        m = np.ones(len(idx), dtype=bool)
        m[0] = m[-1] = False  # tips excluded
        if self.source_regularized:
            m[idx == self.i0] = False
        return m


class PlanarState:
    """Planar fracture on a 2-D grid with envelope front tracking."""

    kind = "planar"

    def __init__(self, sol: SelfSimilarSolution, N: int, t0: float = 1.0,
                 tip: TipModel = None, fluid: lubrication.FluidModel = None,
                 eps_w: float = 1.0, grow: float = 1.35,
                 n_front: int = 512):
        from .tip import regime_preset

        if N < 4:
            raise ValueError("need at least 4 cells per initial radius")
        if sol.geometry != "penny":
            raise ValueError("planar runs start from the penny benchmark")
        self.sol = sol
        self.tipmodel = tip or regime_preset("viscosity", n=sol.n)
        R0 = float(sol.x_star(t0))
        dx = R0 / N
        half = int(np.ceil(N * grow)) + 3
        ncell = 2 * half + 1
        self.grid = Grid(ncell, ncell, dx, dx,
                         origin=(-half * dx, -half * dx))
        src = self.grid.flat(half, half)
        self.fluid = fluid or lubrication.FluidModel(n=sol.n, source_cell=src)
        if self.fluid.source_cell is None:
            self.fluid.source_cell = src
        self.t = float(t0)
        th = np.linspace(0.0, 2.0 * np.pi, n_front, endpoint=False)
        ring = np.stack([R0 * np.cos(th), R0 * np.sin(th)], axis=1)
        self.cls = classify(self.grid, ring)
        self.front = FrontPolyline(ring)
        X, Y = self.grid.centers()
        self.rho = np.hypot(X, Y).ravel()
        self.w = np.zeros(self.grid.nx * self.grid.ny)
        chan = self.cls.channel
        self.w[chan] = eps_w * sol.opening(self.rho[chan], t0)

        self.table = elastic.offset_table(self.grid.nx, self.grid.ny, dx, dx)
        self.counters = CostCounters()
        self._setup_front_state(initial=True, eps_w=eps_w)
        self.G = elastic.InfluenceMatrix(self.grid, self.cls.fracture,
                                         table=self.table)
        self._index_sides()
        self.audit_t0 = self.t
        self.audit_v0 = self.audit_volume()
        self.max_balance_residual = 0.0

    # --- front/ribbon bookkeeping ------------------------------------------
    def _setup_front_state(self, initial=False, eps_w=1.0):
        """Ribbon SE variables and per-tip geometry from the current front."""
        normals, anchors, activated = tip_geometry(self.grid, self.cls,
                                                   self.front)
        self.tip_normal = normals
        self.tip_anchor = anchors
        self.ribbon_cells = self.cls.ribbon.copy()
        r = np.empty(len(self.ribbon_cells))
        v = np.empty(len(self.ribbon_cells))
        for a, k in enumerate(self.ribbon_cells):
            cx, cy = self.grid.center_of(k)
            r[a] = self._distance_to_front(cx, cy)
            wk = self.w[k]
            v[a] = self._speed(wk, r[a])
        self.r = r
        self.v = v
        self.r_at_recon = r.copy()
        if initial:
            v0 = float(self.sol.front_speed(self.t))
            self.v[:] = v0
            for k in self.cls.tip:
                n = self.tip_normal[k]
                p0 = self.tip_anchor[k]
                cx, cy = self.grid.center_of(k)
                try:
                    wt = tip_mean_opening(
                        self.tipmodel, v0, p0, n, self.grid.dx, self.grid.dy,
                        cell_origin=(cx - self.grid.dx / 2, cy - self.grid.dy / 2))
                except ValueError:
                    wt = 0.0
                self.w[k] = eps_w * wt

    def _distance_to_front(self, cx, cy):
        pts = self.front.points
        nxt = np.roll(pts, -1, axis=0)
        px = cx - pts[:, 0]
        py = cy - pts[:, 1]
        ex = nxt[:, 0] - pts[:, 0]
        ey = nxt[:, 1] - pts[:, 1]
        ee = ex * ex + ey * ey
        tproj = np.clip((px * ex + py * ey) / np.maximum(ee, 1e-300), 0.0, 1.0)
        dx = px - tproj * ex
        dy = py - tproj * ey
        return float(np.sqrt(np.min(dx * dx + dy * dy)))

    def _speed(self, w, r):
        if self.tipmodel.beta == 0.0 or w <= 0.0 or r <= 0.0:
            return 0.0
        return speed_from_opening(self.tipmodel, w, r)

    def _index_sides(self):
        """Classify every cell side once per collection update."""
        g = self.grid
        codes2 = self.cls.codes.reshape(g.ny, g.nx)
        chan = (codes2 == INTERNAL) | (codes2 == RIBBON)
        tip = codes2 == TIP
        # vertical sides: between (i-1, j) and (i, j) -> qx[j, i]
        self.vx_chan = np.zeros((g.ny, g.nx + 1), dtype=bool)
        self.vx_chan[:, 1:-1] = chan[:, :-1] & chan[:, 1:]
        self.vy_chan = np.zeros((g.ny + 1, g.nx), dtype=bool)
        self.vy_chan[1:-1, :] = chan[:-1, :] & chan[1:, :]
        # ribbon-tip sides, with orientation and ribbon ownership
        self.rt_sides = []  # (axis, j, i, ribbon_flat, tip_flat, sign)
        for a, k in enumerate(self.ribbon_cells):
            j, i = divmod(int(k), g.nx)
            for axis, jj, ii, tj, ti, sgn in (
                    ("x", j, i + 1, j, i + 1, +1),   # right side, tip at i+1
                    ("x", j, i, j, i - 1, -1),       # left side, tip at i-1
                    ("y", j + 1, i, j + 1, i, +1),   # top side
                    ("y", j, i, j - 1, i, -1)):      # bottom side
                if 0 <= ti < g.nx and 0 <= tj < g.ny and tip[tj, ti]:
                    self.rt_sides.append(
                        (axis, jj, ii, int(k), tj * g.nx + ti, sgn, a))
        j0, i0 = divmod(self.fluid.source_cell, g.nx)
        self.src_ji = (j0, i0)
        # map ribbon cell -> slot for tip ownership averaging
        owner = {}
        for axis, jj, ii, rk, tk, sgn, a in self.rt_sides:
            owner.setdefault(tk, []).append(a)
        self.tip_owner = owner

    # --- physics pieces -----------------------------------------------------
    def pressure_field(self):
        w_f = self.w[self.cls.fracture]
        p_f = self.G.matvec(w_f)
        self.counters.matvecs += 1
        p2d = np.zeros(self.grid.nx * self.grid.ny)
        p2d[self.cls.fracture] = p_f
        return p2d.reshape(self.grid.ny, self.grid.nx), p_f

    def side_fluxes(self, p2d, w2d, strategy: str):
        """Raw channel fluxes plus tip and source overrides."""
        g = self.grid
        n = self.fluid.n
        qx = np.zeros((g.ny, g.nx + 1))
        qy = np.zeros((g.ny + 1, g.nx))

        gx = np.diff(p2d, axis=1) / g.dx          # (ny, nx-1)
        gy = np.diff(p2d, axis=0) / g.dy          # (ny-1, nx)
        wx = 0.5 * (w2d[:, :-1] + w2d[:, 1:])
        wy = 0.5 * (w2d[:-1, :] + w2d[1:, :])
        if n == 1.0:
            vx = -wx * wx * gx
            vy = -wy * wy * gy
        else:
            # cross gradients taken from the cell's own orthogonal side
            gy_pad = np.zeros_like(p2d)
            gy_pad[:-1, :] = gy
            gx_pad = np.zeros_like(p2d)
            gx_pad[:, :-1] = gx
            vx = lubrication.side_velocity(wx, gx, gy_pad[:, :-1], n, "x")
            vy = lubrication.side_velocity(wy, gx_pad[:-1, :], gy, n, "y")
        qx[:, 1:-1] = np.where(self.vx_chan[:, 1:-1], (wx * vx)[:, :], 0.0)
        qy[1:-1, :] = np.where(self.vy_chan[1:-1, :], (wy * vy)[:, :], 0.0)

        # statistical strategy: pressure-based fluxes on channel-tip sides too
        if strategy == "statistical-pressure":
            codes2 = self.cls.codes.reshape(g.ny, g.nx)
            wet = codes2 != 0
            vxw = np.zeros((g.ny, g.nx + 1), dtype=bool)
            vxw[:, 1:-1] = wet[:, :-1] & wet[:, 1:]
            vyw = np.zeros((g.ny + 1, g.nx), dtype=bool)
            vyw[1:-1, :] = wet[:-1, :] & wet[1:, :]
            qx[:, 1:-1] = np.where(vxw[:, 1:-1], wx * vx, qx[:, 1:-1])
            qy[1:-1, :] = np.where(vyw[1:-1, :], wy * vy, qy[1:-1, :])
        else:
            adv = self.r - self.r_at_recon
            for axis, jj, ii, rk, tk, sgn, a in self.rt_sides:
                nvec = self.tip_normal[tk]
                owners = self.tip_owner.get(tk, [a])
                act = self._tip_center_distance(tk) > 0.0
                if strategy == "upwind-speed":
                    if not act:
                        q = 0.0
                    else:
                        vs = float(np.mean(self.v[owners]))
                        ws = 0.5 * (self.w[rk] + self.w[tk])
                        q = (nvec[0] if axis == "x" else nvec[1]) * vs * ws
                elif strategy == "asymptotic":
                    r_mid = self._side_distance(axis, jj, ii, tk)
                    q = tip_side_flux_asymptotic(
                        self.tipmodel, self.v[a], nvec, r_mid,
                        "v" if axis == "x" else "h")
                else:
                    raise ValueError(f"unknown tip-flux strategy {strategy!r}")
                if axis == "x":
                    qx[jj, ii] = q
                else:
                    qy[jj, ii] = q
        lubrication.apply_source_regularization(g, qx, qy, self.fluid, self.t)
        return qx, qy

    def _tip_center_distance_at(self, tk, adv, owners):
        """Signed distance of the tip-cell center behind the advanced front."""
        n = self.tip_normal[tk]
        p0 = self.tip_anchor[tk]
        cx, cy = self.grid.center_of(tk)
        base = (p0[0] - cx) * n[0] + (p0[1] - cy) * n[1]
        if len(owners):
            base += float(np.mean(adv[owners]))
        return base

    def _tip_center_distance(self, tk):
        owners = self.tip_owner.get(tk, [])
        return self._tip_center_distance_at(tk, self.r - self.r_at_recon,
                                            owners)

    def _side_distance_at(self, axis, jj, ii, tk, adv, owners):
        g = self.grid
        if axis == "x":
            sx = g.origin[0] + (ii - 0.5) * g.dx
            sy = g.origin[1] + jj * g.dy
        else:
            sx = g.origin[0] + ii * g.dx
            sy = g.origin[1] + (jj - 0.5) * g.dy
        n = self.tip_normal[tk]
        p0 = self.tip_anchor[tk]
        base = (p0[0] - sx) * n[0] + (p0[1] - sy) * n[1]
        if len(owners):
            base += float(np.mean(adv[owners]))
        return max(base, 0.0)

    def _side_distance(self, axis, jj, ii, tk):
        owners = self.tip_owner.get(tk, [])
        return self._side_distance_at(axis, jj, ii, tk,
                                      self.r - self.r_at_recon, owners)

    def rhs(self, strategy: str):
        w2d = self.w.reshape(self.grid.ny, self.grid.nx)
        p2d, _ = self.pressure_field()
        qx, qy = self.side_fluxes(p2d, w2d, strategy)
        dwdt = lubrication.continuity_rhs(self.grid, qx, qy, self.fluid,
                                          self.t, source_override=True)
        return dwdt.ravel()

    def apply_source_opening(self):
        w2d = self.w.reshape(self.grid.ny, self.grid.nx)
        j0, i0 = self.src_ji
        w2d[j0, i0] = lubrication.extrapolate_source_opening(w2d, j0, i0)

    # --- front motion -------------------------------------------------------
    def needs_update(self):
        """True when some tip cell has been fully passed by the front."""
        g = self.grid
        for tk in self.cls.tip:
            n = self.tip_normal[tk]
            margin = 0.5 * (abs(n[0]) * g.dx + abs(n[1]) * g.dy)
            if self._tip_center_distance(tk) > margin:
                return True
        return False

    def reconstruct_and_update(self):
        """Rebuild the envelope front; update collections when tips crossed.

        The polygonal envelope can momentarily fail to touch a tip cell that
        the previous (finer) front representation grazed; such cells stay tip
        cells rather than reverting to external, which would lose their fluid.
        A channel cell falling outside the new front is a real inconsistency.
        """
        centers = np.array([self.grid.center_of(k) for k in self.ribbon_cells])
        poly = reconstruct_envelope(centers, self.r)
        new_cls = classify(self.grid, poly.points)
        old = self.cls.codes
        new = new_cls.codes.copy()
        lost_channel = ((old == INTERNAL) | (old == RIBBON)) & (new == 0)
        if np.any(lost_channel):
            raise RuntimeError(
                "front reconstruction dropped fluid-filled cells; "
                "ribbon radii are inconsistent")
        grazed = (old == TIP) & (new == 0)
        if np.any(grazed):
            new[grazed] = TIP
            # re-derive ribbon flags around the restored tips
            tip2 = (new == TIP).reshape(self.grid.ny, self.grid.nx)
            nb = np.zeros_like(tip2)
            nb[:, 1:] |= tip2[:, :-1]
            nb[:, :-1] |= tip2[:, 1:]
            nb[1:, :] |= tip2[:-1, :]
            nb[:-1, :] |= tip2[1:, :]
            internal2 = (new == INTERNAL).reshape(self.grid.ny, self.grid.nx)
            new[(internal2 & nb).ravel()] = RIBBON
            new_cls = Classification(self.grid, new)
        collections_changed = not np.array_equal(new_cls.codes, self.cls.codes)
        self.front = poly
        self.cls = new_cls
        self._setup_front_state()
        if collections_changed:
            self.G = elastic.InfluenceMatrix(self.grid, self.cls.fracture,
                                             table=self.table)
        self._index_sides()
        return collections_changed

    def front_radius(self):
        """Mean distance of the front polyline from the source."""
        p = self.front.points
        return float(np.mean(np.hypot(p[:, 0], p[:, 1])))

    # --- audits and reporting ------------------------------------------------
    def audit_volume(self):
        w = self.w.copy()
        w[self.fluid.source_cell] = 0.0
        return float(np.sum(w) * self.grid.dx * self.grid.dy)

    def total_volume(self):
        return float(np.sum(self.w) * self.grid.dx * self.grid.dy)

    def record_balance(self):
        pumped = self.fluid.q0 * (self.t - self.audit_t0)
        res = abs((self.audit_volume() - self.audit_v0) - pumped) \
            / max(self.total_volume(), 1e-300)
        self.max_balance_residual = max(self.max_balance_residual, res)
        return res

    def healthy(self):
        chan = self.cls.channel
        wch = self.w[chan]
        return bool(np.all(np.isfinite(self.w)) and np.all(wch > 0.0)
                    and np.max(self.w) < 1e3)

    def cell_rho(self):
        return self.rho[self.cls.fracture]

    def cell_openings(self):
        return self.w[self.cls.fracture]

    def interior_mask(self):
        codes_f = self.cls.codes[self.cls.fracture]
        m = (codes_f == INTERNAL) | (codes_f == RIBBON)
        m &= self.cls.fracture != self.fluid.source_cell
        return m
