"""Near-front asymptotics: opening/speed/distance relations and tip-side fluxes.

All quantities are in normalized units (E' = 1, mu' = 1, Q0 = 1).  The
monomial near-front relation is

    w = A_w * v**beta * r**alpha

with regime-dependent constants.  For the viscosity-dominated regime of a
power-law fluid (behavior index n) the constants follow from the semi-infinite
steady tip problem:

    alpha = 2/(n+2),  beta = n/(n+2),
    A_w   = [4 / (alpha*(1-alpha)*|cot(pi*alpha)|)]**(1/(n+2))

which for n = 1 gives A_w = (18*sqrt(3))**(1/3) = 3.14735 (see
docs/tip_coefficient.md for the derivation).  The toughness regime is the
beta = 0, alpha = 1/2 member with A_w = K' * sqrt(32/pi).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

# viscosity-dominated Newtonian coefficient, (18*sqrt(3))**(1/3)
BETA_M = 2.0 ** (1.0 / 3.0) * 3.0 ** (5.0 / 6.0)
# leak-off-dominated Newtonian coefficient (unit leak-off scale folded in)
BETA_MT = 4.0 / (15.0 ** 0.25 * (2.0 ** 0.5 - 1.0) ** 0.25)

SIF_FACTOR = np.sqrt(np.pi / 32.0)  # K_I = SIF_FACTOR * E' * lim w/sqrt(r)


def viscosity_coefficient(n: float) -> float:
    """Tip coefficient A_w of the viscosity-dominated regime for index n."""
    lam = 2.0 / (n + 2.0)
    cot = abs(np.cos(np.pi * lam) / np.sin(np.pi * lam))
    return (4.0 / (lam * (1.0 - lam) * cot)) ** (1.0 / (n + 2.0))


@dataclass(frozen=True)
class TipModel:
    """Monomial near-front model w = A_w * v**beta * r**alpha.

    The toughness regime is the speed-independent member (beta = 0) whose
    coefficient is tied to the critical stress intensity factor.
    """

    regime: str
    A_w: float
    alpha: float
    beta: float
    kic: float = 0.0  # normalized K'_IC; used by the toughness closed form

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0,1), got {self.alpha}")
        if self.beta < 0.0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")
        if self.A_w <= 0.0:
            raise ValueError(f"A_w must be positive, got {self.A_w}")


def regime_preset(name: str, n: float = 1.0, kic: float = 1.0,
                  A_w: float | None = None, alpha: float | None = None,
                  beta: float | None = None) -> TipModel:
    """Build a TipModel from a named preset.

    Presets: "toughness", "viscosity" (uses the fluid index n),
    "viscosity-newtonian", "leakoff-newtonian", "monomial-custom".
    """
    if name == "toughness":
        return TipModel("toughness", kic * np.sqrt(32.0 / np.pi), 0.5, 0.0, kic=kic)
    if name == "viscosity":
        return TipModel("monomial", viscosity_coefficient(n),
                        2.0 / (n + 2.0), n / (n + 2.0))
    if name == "viscosity-newtonian":
        return TipModel("monomial", BETA_M, 2.0 / 3.0, 1.0 / 3.0)
    if name == "leakoff-newtonian":
        return TipModel("monomial", BETA_MT, 5.0 / 8.0, 1.0 / 8.0)
    if name == "monomial-custom":
        if A_w is None or alpha is None or beta is None:
            raise ValueError("monomial-custom requires A_w, alpha and beta")
        return TipModel("monomial", A_w, alpha, beta)
    raise ValueError(f"unknown tip regime preset: {name!r}")


def uau_opening(tip: TipModel, v_star, r):
    """Opening at distance r behind the front moving at speed v_star."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v_star, dtype=float)
    if tip.beta == 0.0:
        return tip.A_w * np.where(r > 0.0, r, 0.0) ** tip.alpha
    return tip.A_w * v ** tip.beta * np.where(r > 0.0, r, 0.0) ** tip.alpha


def speed_from_opening(tip: TipModel, w: float, r: float) -> float:
    """Invert the monomial relation for the front speed (beta > 0 only)."""
    if tip.beta == 0.0:
        raise ValueError("toughness regime is speed-independent; "
                         "use distance_from_opening_toughness")
    if r <= 0.0 or w <= 0.0:
        return 0.0
    return (w / (tip.A_w * r ** tip.alpha)) ** (1.0 / tip.beta)


def distance_from_opening_toughness(tip: TipModel, w: float) -> float:
    """Front distance from the opening in the toughness regime.

    The constant is fixed so that K_I = sqrt(pi/32) * E' * lim w/sqrt(r)
    equals K'_IC exactly: r = (pi/32) * (w/K')^2.
    """
    if tip.regime != "toughness":
        raise ValueError("distance inversion is only defined for the "
                         "toughness regime")
    return (np.pi / 32.0) * (w / tip.kic) ** 2


def implicit_se_step(tip: TipModel, w_frozen: float, r_t: float, v_t: float,
                     dt: float, omega: float = 1.0,
                     tol: float = 1e-12) -> tuple[float, float]:
    """One implicit step of the per-ribbon speed equation.

    Solves v = phi_v(w_frozen, r_t + ((1-omega) v_t + omega v) dt) for the
    unique positive root; returns (r_next, v_next).  For the toughness regime
    the distance follows from the opening in closed form.
    """
    if tip.regime == "toughness":
        r_next = distance_from_opening_toughness(tip, w_frozen)
        v_next = max(r_next - r_t, 0.0) / dt
        return max(r_next, r_t), v_next

    if w_frozen <= 0.0:
        return r_t, 0.0
    r_base = r_t + (1.0 - omega) * v_t * dt

    def residual(v):
        return v - speed_from_opening(tip, w_frozen, r_base + omega * v * dt)

    v_hi = speed_from_opening(tip, w_frozen, r_base)
    if v_hi <= 0.0:
        return r_t, 0.0
    if omega == 0.0:
        v_next = v_hi
    else:
        # residual is strictly increasing: residual(0) < 0, residual(v_hi) >= 0
        v_next = brentq(residual, 0.0, v_hi, xtol=1e-300, rtol=tol, maxiter=200)
    v_av = (1.0 - omega) * v_t + omega * v_next
    return r_t + v_av * dt, v_next


def tip_side_flux_asymptotic(tip: TipModel, v_star: float, normal,
                             r_mid: float, orientation: str) -> float:
    """Flux through a ribbon/tip common side from the near-front asymptote.

    orientation "v" means a vertical side (x-directed flux, uses n_x),
    "h" a horizontal side (uses n_y).  r_mid is the distance from the side
    midpoint to the front along the normal.
    """
    nx, ny = normal
    comp = nx if orientation == "v" else ny
    if v_star <= 0.0 or r_mid <= 0.0:
        return 0.0
    return comp * v_star * float(uau_opening(tip, v_star, r_mid))


def _clip_behind(poly, p0, normal):
    """Clip a polygon by the half-plane behind the front line through p0."""
    nx, ny = normal
    out = []
    m = len(poly)
    for i in range(m):
        a = poly[i]
        b = poly[(i + 1) % m]
        da = (p0[0] - a[0]) * nx + (p0[1] - a[1]) * ny  # distance behind front
        db = (p0[0] - b[0]) * nx + (p0[1] - b[1]) * ny
        if da >= 0.0:
            out.append(a)
        if (da > 0.0) != (db > 0.0) and da != db:
            s = da / (da - db)
            out.append((a[0] + s * (b[0] - a[0]), a[1] + s * (b[1] - a[1])))
    return out


def tip_mean_opening(tip: TipModel, v_star: float, p0, normal,
                     dx: float, dy: float, cell_origin=(0.0, 0.0)) -> float:
    """Mean opening of a tip cell cut by a straight front segment.

    The front line passes through p0 with outward unit normal; the filled
    region is the part of the rectangle [0,dx]x[0,dy] (shifted by cell_origin)
    behind the line.  The area integral of the monomial opening reduces to a
    line integral of its antiderivative along the region boundary.
    """
    x0, y0 = cell_origin
    nx, ny = normal
    rect = [(x0, y0), (x0 + dx, y0), (x0 + dx, y0 + dy), (x0, y0 + dy)]
    r_corners = [(p0[0] - cx) * nx + (p0[1] - cy) * ny for cx, cy in rect]
    if max(r_corners) < 0.0:
        raise ValueError("front segment does not intersect the cell")
    poly = _clip_behind(rect, p0, normal)
    if len(poly) < 3:
        return 0.0  # front touches the cell without entering it
    apow = tip.alpha + 1.0
    coef = tip.A_w * (v_star ** tip.beta if tip.beta > 0.0 else 1.0) / apow
    total = 0.0
    m = len(poly)
    for i in range(m):
        ax, ay = poly[i]
        bx, by = poly[(i + 1) % m]
        ra = max((p0[0] - ax) * nx + (p0[1] - ay) * ny, 0.0)
        rb = max((p0[0] - bx) * nx + (p0[1] - by) * ny, 0.0)
        # eta increases along the front direction t = (-ny, nx)
        deta = (bx - ax) * (-ny) + (by - ay) * nx
        if abs(ra - rb) < 1e-14 * max(ra, rb, 1.0):
            seg = ra ** apow * deta
        else:
            seg = (rb ** (apow + 1.0) - ra ** (apow + 1.0)) / (
                (apow + 1.0) * (rb - ra)) * deta
        total += seg
    # Green's theorem in the right-handed (eta, r) frame: the ccw circulation
    # of the antiderivative carries a leading minus
    return -coef * total / (dx * dy)
