"""Self-similar reference solutions for straight (plane-strain) and
penny-shaped fractures driven at constant rate by a power-law fluid,
viscosity-dominated regime, normalized units (E' = mu' = Q0 = 1).

The solution separates as

    x*(t) = xi * t^gx,   w = xi * W(zeta) * t^gw,   zeta = x / x*(t)

with gx = (n+1)/(n+2) (straight) or (2n+2)/(3(n+2)) (penny) and
gw + gx = 1 (straight), gw + 2 gx = 1 (penny).  The profile W solves a
nonlinear fixed point: lubrication yields the pressure gradient
P' = -F^n / W^(2n+1) from the flux function F, the zero-toughness condition
fixes the pressure level, and the elastic inversion returns the opening.
xi then follows from the injected-volume normalization.

Grids are geometric toward both endpoints; integrals fit a local power law
per interval, which handles the w ~ u^(2/(n+2)) tip and the singular
pressure exactly in the leading order.  Nodes under u_patch are replaced by
the fitted local asymptote each iteration (the log-kernel quadrature cannot
resolve them, and the fixed point is insensitive to them).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

_TWO_PI = 2.0 * np.pi


def _seg_power(x_lo, x_hi, y_lo, y_hi):
    """Per-interval integral with power-law fit y = A x^p about x = 0."""
    out = 0.5 * (y_lo + y_hi) * (x_hi - x_lo)
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        p = np.log(np.abs(y_hi / y_lo)) / np.log(x_hi / x_lo)
        I = y_lo / x_lo ** p * (x_hi ** (p + 1) - x_lo ** (p + 1)) / (p + 1)
        good = ((y_lo * y_hi > 0) & (x_lo > 0) & np.isfinite(I)
                & (np.abs(p + 1.0) > 1e-9) & (np.abs(p) < 60.0))
    return np.where(good, I, out)


def _seg_integrals(z, y):
    """Integrals of y(z) over each interval; power fit in z on the left half
    (source singularities), in u = 1 - z on the right half (tip)."""
    zl, zh = z[..., :-1], z[..., 1:]
    yl, yh = y[..., :-1], y[..., 1:]
    left = _seg_power(zl, zh, yl, yh)
    right = _seg_power(1.0 - zh, 1.0 - zl, yh, yl)
    return np.where(0.5 * (zl + zh) < 0.5, left, right)


def _lin_ln_rows(t, F, c):
    """Row-wise int f(t) ln|t - c_i| dt with piecewise-linear f.

    t: (M,) grid; F: (R, M) integrand rows; c: (R,) singular points.
    """
    a, b = t[:-1], t[1:]
    fa, fb = F[:, :-1], F[:, 1:]
    da = a[None, :] - c[:, None]
    db = b[None, :] - c[:, None]

    def f0(d):
        return np.where(d == 0.0, 0.0, d * (np.log(np.abs(d) + 1e-300) - 1.0))

    def f1(d):
        return np.where(d == 0.0, 0.0,
                        d * d * (0.5 * np.log(np.abs(d) + 1e-300) - 0.25))

    g = (fb - fa) / (b - a)[None, :]
    A = fa + g * (c[:, None] - a[None, :])
    return np.sum(A * (f0(db) - f0(da)) + g * (f1(db) - f1(da)), axis=1)


@dataclass
class SelfSimilarSolution:
    """Converged similarity profile and derived constants."""

    geometry: str
    n: float
    xi: float
    gx: float
    gw: float
    alpha: float
    z: np.ndarray
    W: np.ndarray
    P: np.ndarray
    C_n: float          # tip coefficient: W ~ C_n u^alpha (1 + a1 u)
    a1: float
    W_av: float         # int W dz (straight) or int W z dz (penny)
    residual: float = 0.0
    meta: dict = field(default_factory=dict)

    # --- primary fields -------------------------------------------------
    def x_star(self, t):
        return self.xi * np.asarray(t, dtype=float) ** self.gx

    def front_speed(self, t):
        t = np.asarray(t, dtype=float)
        return self.gx * self.xi * t ** (self.gx - 1.0)

    def profile(self, zeta):
        """W(zeta) with asymptotic continuation beyond the stored grid."""
        zeta = np.asarray(zeta, dtype=float)
        u = 1.0 - zeta
        u_min = 1.0 - self.z[-1]
        w = np.interp(zeta, self.z, self.W, left=self.W[0], right=self.W[-1])
        tail = u < u_min
        if np.any(tail):
            ut = np.where(u > 0.0, u, 0.0)
            w = np.where(tail, self.C_n * ut ** self.alpha * (1 + self.a1 * ut), w)
        return np.where(zeta >= 1.0, 0.0, w)

    def opening(self, rho, t):
        """w at radial (or axial) distance rho from the source at time t."""
        rho = np.abs(np.asarray(rho, dtype=float))
        t = np.asarray(t, dtype=float)
        zeta = rho / self.x_star(t)
        return self.xi * self.profile(zeta) * t ** self.gw

    def pressure_profile(self, zeta):
        zeta = np.asarray(zeta, dtype=float)
        return np.interp(zeta, self.z, self.P)

    def net_pressure(self, rho, t):
        rho = np.abs(np.asarray(rho, dtype=float))
        t = np.asarray(t, dtype=float)
        zeta = rho / self.x_star(t)
        return self.pressure_profile(zeta) * t ** (self.gw - self.gx)

    def velocity(self, rho, t):
        """Radial particle velocity from the continuity (flux) identity."""
        rho = np.abs(np.asarray(rho, dtype=float))
        t = np.asarray(t, dtype=float)
        zeta = rho / self.x_star(t)
        V = np.interp(zeta, self.z, self.meta["V"])
        return V * t ** (self.gx - 1.0)

    def volume(self, t):
        return np.asarray(t, dtype=float) * 1.0  # Q0 = 1, V = Q0 t


class _Solver:
    def __init__(self, geometry: str, n: float, M: int = 500,
                 z_min: float = 2e-4, u_min: float = 1e-7,
                 u_patch: float = 2e-3):
        if geometry not in ("kgd", "penny"):
            raise ValueError(f"unknown geometry {geometry!r}")
        if not 0.0 < n <= 1.0:
            raise ValueError("fluid index must be in (0, 1]")
        self.geometry = geometry
        self.n = float(n)
        self.alpha = 2.0 / (n + 2.0)
        self.beta_p = self.alpha * (n + 1.0) - 1.0
        if geometry == "kgd":
            self.gx = (n + 1.0) / (n + 2.0)
        else:
            self.gx = (2.0 * n + 2.0) / (3.0 * (n + 2.0))
        self.u_patch = u_patch
        m_tip = M // 2
        u_tail = np.geomspace(u_min, 0.7, m_tip)
        z_head = np.geomspace(z_min, 0.7, M - m_tip)
        z = np.unique(np.concatenate([z_head, 1.0 - u_tail]))
        self.z = z[z < 1.0 - 0.5 * u_min]
        self.u = 1.0 - self.z
        self.s1 = np.sqrt((1.0 - self.z) * (1.0 + self.z))
        # precomputed kernels for the elastic inversion
        if geometry == "kgd":
            self._kreg = 2.0 * np.log(self.s1[:, None] + self.s1[None, :])

    # ---- forward pieces --------------------------------------------------
    def _cum_from_tip(self, y):
        u = self.u
        seg = _seg_integrals(self.z, y)
        if y[-1] > 0 and y[-2] > 0:
            p = np.log(y[-1] / y[-2]) / np.log(u[-1] / u[-2])
        else:
            p = self.alpha
        tail = y[-1] * u[-1] / (p + 1.0)
        return np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]]) + tail

    def flux_fun(self, W):
        z, gx = self.z, self.gx
        if self.geometry == "kgd":
            return self._cum_from_tip(W) + gx * z * W
        return (self._cum_from_tip(z * W) + gx * z ** 2 * W) / z

    def pressure(self, W):
        n, z, u = self.n, self.z, self.u
        F = self.flux_fun(W)
        Pp = -(F ** n) / W ** (2 * n + 1)
        seg = _seg_integrals(z, Pp)
        Pt = np.concatenate([[0.0], np.cumsum(seg)])
        e = -(1.0 + self.beta_p)
        kloc = -Pp[-1] * u[-1] ** (-e)
        u1 = u[-1]
        z0 = z[0]
        ks = -Pp[0] * z0 ** n
        if self.geometry == "kgd":
            wgt = 1.0 / self.s1
            wint = np.pi / 2.0
            strip0 = 0.5 * (-Pp[0] * z0) * z0
        else:
            wgt = z / self.s1
            wint = 1.0
            if abs(1.0 - n) < 1e-12:
                strip0 = -ks * z0 ** 2 / 4.0
            else:
                strip0 = -ks / (1.0 - n) * (z0 ** (3.0 - n) / 2.0
                                            - z0 ** (3.0 - n) / (3.0 - n))
        Snum = np.sum(_seg_integrals(z, Pt * wgt))
        A0 = Pt[-1] - kloc / (e + 1.0) * u1 ** (e + 1)
        Stail = (A0 * np.sqrt(2.0 * u1)
                 + kloc / (e + 1.0) * u1 ** (e + 1.5) / (np.sqrt(2.0) * (e + 1.5)))
        C0 = -(Snum + Stail + strip0) / wint
        self._tip_pressure = (kloc, e, u1)
        self._origin_pressure = (ks, z0)
        return Pt + C0

    # ---- elastic inversions ----------------------------------------------
    def invert(self, P):
        if self.geometry == "kgd":
            return self._invert_kgd(P)
        return self._invert_penny(P)

    def _invert_kgd(self, P):
        z, u, s1 = self.z, self.u, self.s1
        kloc, e, u1 = self._tip_pressure
        dP = P[None, :] - P[:, None]
        smooth = np.sum(_seg_integrals(z[None, :], dP * self._kreg), axis=1)
        Ia = _lin_ln_rows(z, dP, z)
        Ib = _lin_ln_rows(z, dP, -z)
        I = smooth - Ia - Ib
        # analytic strip over [z_end, 1]: K ~ 2 sqrt(2u)/s_i, dP from the
        # singular continuation of the pressure
        a_c = P[-1] - P - kloc / (e + 1.0) * u1 ** (e + 1)
        b_c = kloc / (e + 1.0)
        Itip = (2.0 * np.sqrt(2.0) / s1) * (a_c * (2.0 / 3.0) * u1 ** 1.5
                                            + b_c * u1 ** (e + 2.5) / (e + 2.5))
        return (2.0 / np.pi) * 2.0 * (I + Itip) + 4.0 * P * s1

    def _invert_penny(self, P):
        z = self.z
        M = len(z)
        f = z * P
        ks, z0 = self._origin_pressure
        n = self.n
        if abs(1.0 - n) < 1e-12:
            m0 = 0.5 * z0 ** 2 * P[0] - ks * z0 ** 2 / 4.0
        else:
            m0 = 0.5 * z0 ** 2 * P[0] - ks / (1.0 - n) * (
                z0 ** (3.0 - n) / 2.0 - z0 ** (3.0 - n) / (3.0 - n))
        # inner Abel integrals H(t_j) = int_0^{t_j} s P / sqrt(t_j^2 - s^2) ds
        tj = z[:, None]
        s_lo = z[None, :-1]
        s_hi = z[None, 1:]
        mask = s_hi <= tj + 1e-300
        fa = f[None, :-1]
        fb = f[None, 1:]
        g = (fb - fa) / (s_hi - s_lo)
        A = fa - g * s_lo
        with np.errstate(invalid="ignore"):
            r_lo = np.sqrt(np.maximum(tj ** 2 - s_lo ** 2, 0.0))
            r_hi = np.sqrt(np.maximum(tj ** 2 - s_hi ** 2, 0.0))
            F0 = (np.arcsin(np.minimum(s_hi / tj, 1.0))
                  - np.arcsin(np.minimum(s_lo / tj, 1.0)))
        H = np.sum(np.where(mask, A * F0 + g * (r_lo - r_hi), 0.0), axis=1)
        H += m0 / z
        # outer integrals W(z_i) = (8/pi) int_{z_i}^1 H / sqrt(t^2 - z_i^2) dt
        zi = z[:, None]
        t_lo = z[None, :-1]
        t_hi = z[None, 1:]
        mask = t_lo >= zi - 1e-300
        Ha = H[None, :-1]
        Hb = H[None, 1:]
        g = (Hb - Ha) / (t_hi - t_lo)
        A = Ha - g * t_lo
        with np.errstate(invalid="ignore"):
            r_hi = np.sqrt(np.maximum(t_hi ** 2 - zi ** 2, 0.0))
            r_lo = np.sqrt(np.maximum(t_lo ** 2 - zi ** 2, 0.0))
            F0 = (np.arccosh(np.maximum(t_hi / zi, 1.0))
                  - np.arccosh(np.maximum(t_lo / zi, 1.0)))
        I = np.sum(np.where(mask, A * F0 + g * (r_hi - r_lo), 0.0), axis=1)
        I += H[-1] * (np.arccosh(1.0 / z) - np.arccosh(np.maximum(z[-1] / z, 1.0)))
        return (8.0 / np.pi) * I

    # ---- tip patching and normalization -----------------------------------
    def patch_tip(self, W):
        u, a = self.u, self.alpha
        win = (u >= self.u_patch) & (u <= 40.0 * self.u_patch)
        if win.sum() < 4:
            return W, (W[-1] / u[-1] ** a, 0.0)
        y = W[win] / u[win] ** a
        Amat = np.stack([np.ones(win.sum()), u[win]], axis=1)
        (g0, c1), *_ = np.linalg.lstsq(Amat, y, rcond=None)
        out = W.copy()
        sel = u < self.u_patch
        out[sel] = u[sel] ** a * (g0 + c1 * u[sel])
        return out, (g0, c1)

    def volume(self, W):
        if self.geometry == "kgd":
            v = np.sum(_seg_integrals(self.z, W)) + W[0] * self.z[0]
        else:
            v = np.sum(_seg_integrals(self.z, self.z * W)) \
                + 0.5 * W[0] * self.z[0] ** 2
        ghat = W[-1] / self.u[-1] ** self.alpha
        return v + ghat * self.u[-1] ** (self.alpha + 1) / (self.alpha + 1)

    def xi_from(self, W):
        V = self.volume(W)
        if self.geometry == "kgd":
            return (2.0 * V) ** -0.5
        return (_TWO_PI * V) ** (-1.0 / 3.0)

    def solve(self, relax=0.35, tol=1e-12, max_iter=600):
        W = 1.4 * (1.0 - self.z ** 2) ** self.alpha
        err = np.inf
        for it in range(max_iter):
            Wn, tipfit = self.patch_tip(self.invert(self.pressure(W)))
            bad = ~np.isfinite(Wn) | (Wn <= 0.0)
            if np.any(bad):
                Wn = np.where(bad, 0.5 * W, Wn)
            err = np.max(np.abs(Wn - W)) / np.max(W)
            W = (1.0 - relax) * W + relax * Wn
            if err < tol:
                break
        else:
            raise RuntimeError(
                f"self-similar iteration did not converge: residual {err:.3e}")
        self.W = W
        self.P = self.pressure(W)
        self.tipfit = tipfit
        self.iterations = it + 1
        self.final_residual = err
        return self


def solve_self_similar(geometry: str, n: float, M: int = 500,
                       **kwargs) -> SelfSimilarSolution:
    """Solve the similarity problem and package the result (cached)."""
    return _solve_cached(geometry, float(round(n, 12)), M,
                         tuple(sorted(kwargs.items())))


@lru_cache(maxsize=16)
def _solve_cached(geometry, n, M, kwitems):
    sv = _Solver(geometry, n, M=M, **dict(kwitems)).solve()
    xi = sv.xi_from(sv.W)
    g0, c1 = sv.tipfit
    gw = 1.0 - sv.gx if geometry == "kgd" else 1.0 - 2.0 * sv.gx
    W_av = sv.volume(sv.W)
    V = sv.flux_fun(sv.W) / sv.W * xi
    return SelfSimilarSolution(
        geometry=geometry, n=n, xi=float(xi), gx=sv.gx, gw=gw,
        alpha=sv.alpha, z=sv.z, W=sv.W, P=sv.P,
        C_n=float(g0), a1=float(c1 / g0), W_av=float(W_av),
        residual=float(sv.final_residual),
        meta=dict(iterations=sv.iterations, V=V),
    )
