"""Time integration of the coupled opening/speed-equation system.

Explicit forward Euler under the CFL bound with upwind tip rules, and
implicit (weighted) Euler with fixed-point iterations over frozen
coefficients and a dense direct solve.  The discrete divergence structure
makes the volume balance exact for either scheme and any tip-flux strategy.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import lubrication
from .states import Kgd1DState, PlanarState, CostCounters
from .tip import implicit_se_step, speed_from_opening, \
    distance_from_opening_toughness

N_INT_PRECONDITIONED = 7   # inner-iteration count reported for the
N_EXT_NOMINAL = 6          # preconditioned reference scheme; model only
N_STS_NOMINAL = 4


@dataclass
class StepConfig:
    mode: str = "explicit"
    k_cfl: float = 0.46
    safety: float = 0.2
    omega: float = 1.0
    tip_flux: str = "upwind-speed"
    fp_tol: float = 1e-8
    fp_maxiter: int = 50
    recon_every: int = 25      # planar: envelope rebuild cadence (steps)
    cfl_policy: str = "warn"   # or "reject"

    def __post_init__(self):
        if not 0.0 < self.safety <= 1.0:
            raise ValueError("CFL safety factor must be in (0, 1]")
        if self.fp_tol <= 0.0:
            raise ValueError("fixed-point tolerance must be positive")
        if not 0.0 <= self.omega <= 1.0:
            raise ValueError("implicit weight must be in [0, 1]")


def max_stable_dt_central(dz: float, k_cfl: float = 0.46,
                          t_ref: float = 1.0) -> float:
    """CFL bound for the stiff central region: dt = K dz^3 T_ref."""
    if not 0.0 < dz < 1.0:
        raise ValueError("normalized mesh size must be in (0, 1)")
    if k_cfl <= 0.0:
        raise ValueError("K_CFL must be positive")
    return k_cfl * dz ** 3 * t_ref


def max_stable_dt_front(dx: float, v_star: float) -> float:
    """Wave bound for the near-front zone: dt = dx / v*; no bound at rest."""
    if v_star < 0.0:
        raise ValueError("front speed must be non-negative")
    if v_star == 0.0:
        return np.inf
    return dx / v_star


def _dz_of(state) -> float:
    if state.kind == "kgd":
        return state.dx / state.half_length()
    return state.grid.dx / state.front_radius()


def cfl_dt(state, cfg: StepConfig) -> float:
    return cfg.safety * max_stable_dt_central(_dz_of(state), cfg.k_cfl, state.t)


def cost_report(counters: CostCounters, dz: float) -> dict:
    """Measured matvec counts next to the operation-count models."""
    model_exp = 3.0 / dz ** 2
    model_imp = N_STS_NOMINAL * N_EXT_NOMINAL * N_INT_PRECONDITIONED
    return dict(
        measured=counters.snapshot(),
        model=dict(
            explicit_matvecs_per_cell_advance=model_exp,
            implicit_matvecs_per_cell_advance=model_imp,
            implicit_counts=dict(n_sts=N_STS_NOMINAL, n_ext=N_EXT_NOMINAL,
                                 n_int=N_INT_PRECONDITIONED),
            time_ratio_implicit_over_explicit=56.0 * dz ** 2,
        ),
    )


# --------------------------------------------------------------------------
# explicit stepping
# --------------------------------------------------------------------------

def explicit_step(state, cfg: StepConfig, dt: float | None = None) -> float:
    """One forward-Euler step; returns the dt actually taken."""
    bound = max_stable_dt_central(_dz_of(state), cfg.k_cfl, state.t)
    if dt is None:
        dt = cfg.safety * bound
    elif dt > bound * (1.0 + 1e-12):
        if cfg.cfl_policy == "reject":
            raise ValueError(f"dt={dt:.3e} exceeds the CFL bound {bound:.3e}")
    if state.kind == "kgd":
        _kgd_explicit(state, cfg, dt)
    else:
        _planar_explicit(state, cfg, dt)
    state.counters.explicit_steps += 1
    state.record_balance()
    return dt


def _kgd_explicit(state: Kgd1DState, cfg: StepConfig, dt: float):
    idx = state.fracture_index()
    w_f = state.w[idx].copy()
    nf = len(w_f)
    i0f = int(np.flatnonzero(idx == state.i0)[0])
    if state.source_regularized:
        state.interpolate_source(w_f, i0f)
    p = state.pressure(w_f)
    q = np.zeros(nf + 1)
    win = 0.5 * (w_f[1:] + w_f[:-1])
    grad = np.diff(p) / state.dx
    q[1:-1] = win * lubrication.side_velocity(win, grad, 0.0, state.fluid.n)
    state.tip_fluxes(cfg.tip_flux, w_f, q)
    q[0] = q[nf] = 0.0
    amp = state.fluid.q0 * state.fluid.profile(state.t)
    if state.source_regularized:
        q[i0f] = -0.5 * amp
        q[i0f + 1] = 0.5 * amp
    dwdt = (q[:-1] - q[1:]) / state.dx
    if state.source_regularized:
        dwdt[i0f] = 0.0
    else:
        dwdt[i0f] += amp / state.dx
    w_f = w_f + dt * dwdt
    if state.source_regularized:
        state.interpolate_source(w_f, i0f)
    state.w[idx] = w_f

    # speed equations, explicit substitution (distance inversion for beta=0)
    tipm = state.tipmodel
    if tipm.beta == 0.0:
        rR = max(distance_from_opening_toughness(tipm, state.w[state.tipR - 1]),
                 state.rR)
        rL = max(distance_from_opening_toughness(tipm, state.w[state.tipL + 1]),
                 state.rL)
        state.vR = (rR - state.rR) / dt
        state.vL = (rL - state.rL) / dt
        state.rR, state.rL = rR, rL
    else:
        state.vR = state._speed(state.w[state.tipR - 1], state.rR)
        state.vL = state._speed(state.w[state.tipL + 1], state.rL)
        state.rR += dt * state.vR
        state.rL += dt * state.vL
    state.front_R = state.x[state.tipR - 1] + state.rR
    state.front_L = state.x[state.tipL + 1] - state.rL
    state.t += dt
    state.update_collections_if_needed()


def _planar_explicit(state: PlanarState, cfg: StepConfig, dt: float):
    dwdt = state.rhs(cfg.tip_flux)
    state.w += dt * dwdt
    state.apply_source_opening()
    for a, k in enumerate(state.ribbon_cells):
        state.v[a] = state._speed(state.w[k], state.r[a])
    state.r += dt * state.v
    state.t += dt
    state._recon_counter = getattr(state, "_recon_counter", 0) + 1
    if state.needs_update() or state._recon_counter >= cfg.recon_every:
        state.reconstruct_and_update()
        state._recon_counter = 0


# --------------------------------------------------------------------------
# implicit stepping
# --------------------------------------------------------------------------

def implicit_step(state, cfg: StepConfig, dt: float) -> int:
    """One weighted implicit Euler step; returns the outer-iteration count."""
    if state.kind == "kgd":
        iters = _kgd_implicit(state, cfg, dt)
    else:
        iters = _planar_implicit(state, cfg, dt)
    state.counters.implicit_steps += 1
    state.record_balance()
    return iters


def _kgd_implicit(state: Kgd1DState, cfg: StepConfig, dt: float) -> int:
    idx = state.fracture_index()
    nf = len(idx)
    i0f = int(np.flatnonzero(idx == state.i0)[0])
    dx = state.dx
    n = state.fluid.n
    tipm = state.tipmodel
    omega = cfg.omega
    amp = state.fluid.q0 * state.fluid.profile(state.t + dt)

    M = state.table  # line kernel
    G = np.zeros((nf, nf))
    off = idx[:, None] - idx[None, :]
    G[:, :] = state.table[off + state.ncells - 1]

    w_t = state.w[idx].copy()
    rR_t, vR_t = state.rR, state.vR
    rL_t, vL_t = state.rL, state.vL

    # explicit fraction of the weighted scheme
    f_t = np.zeros(nf)
    if omega < 1.0:
        f_t = _kgd_rhs_at(state, cfg, w_t.copy(), G, i0f, state.t)

    wbar = w_t.copy()
    iters = 0
    for iters in range(1, cfg.fp_maxiter + 1):
        if state.source_regularized:
            state.interpolate_source(wbar, i0f)
        # per-ribbon implicit speed equations with frozen openings
        rR, vR = implicit_se_step(tipm, max(wbar[-2], 0.0), rR_t, vR_t, dt, omega)
        rL, vL = implicit_se_step(tipm, max(wbar[1], 0.0), rL_t, vL_t, dt, omega)
        frontR = state.x[state.tipR - 1] + rR
        frontL = state.x[state.tipL + 1] - rL
        actR = frontR > state.x[state.tipR]
        actL = frontL < state.x[state.tipL]

        p_bar = G @ wbar
        state.counters.matvecs += 1
        win = 0.5 * (wbar[1:] + wbar[:-1])
        if n == 1.0:
            cond = win ** 3
        else:
            gbar = np.abs(np.diff(p_bar) / dx)
            gbar = np.maximum(gbar, lubrication.GRAD_FLOOR)
            cond = win * (win ** (n + 1.0) * gbar ** (1.0 - n)) ** (1.0 / n)
        # ribbon/tip sides are strategy-handled (except statistical, which
        # keeps the raw pressure coupling); source-cell sides are prescribed
        if cfg.tip_flux != "statistical-pressure":
            cond[0] = cond[-1] = 0.0
        if state.source_regularized:
            cond[i0f - 1] = cond[i0f] = 0.0

        # dwdt(w) = T G w + B w + c with q_s = -cond_s (p_s - p_{s-1})/dx
        A_flux = np.zeros((nf - 1, nf))
        sides = np.arange(1, nf)
        A_flux[sides - 1, sides] = -cond / dx
        A_flux[sides - 1, sides - 1] = cond / dx
        Thalf = np.zeros((nf, nf - 1))
        cells = np.arange(nf)
        Thalf[cells[1:], cells[1:] - 1] = 1.0 / dx
        Thalf[cells[:-1], cells[:-1]] = -1.0 / dx
        T = Thalf @ A_flux

        B = np.zeros((nf, nf))
        cvec = np.zeros(nf)
        if cfg.tip_flux == "upwind-speed":
            if actR:
                # q at the last interior side = vR * (w[-2] + w[-1]) / 2
                B[nf - 2, nf - 2] -= vR * 0.5 / dx
                B[nf - 2, nf - 1] -= vR * 0.5 / dx
                B[nf - 1, nf - 2] += vR * 0.5 / dx
                B[nf - 1, nf - 1] += vR * 0.5 / dx
            if actL:
                B[1, 0] -= vL * 0.5 / dx
                B[1, 1] -= vL * 0.5 / dx
                B[0, 0] += vL * 0.5 / dx
                B[0, 1] += vL * 0.5 / dx
        elif cfg.tip_flux == "asymptotic":
            from .tip import tip_side_flux_asymptotic
            dR = frontR - (state.x[state.tipR] - 0.5 * dx)
            dL = (state.x[state.tipL] + 0.5 * dx) - frontL
            qR = tip_side_flux_asymptotic(tipm, vR, (1.0, 0.0), dR, "v")
            qL = tip_side_flux_asymptotic(tipm, vL, (-1.0, 0.0), dL, "v")
            cvec[nf - 2] -= qR / dx
            cvec[nf - 1] += qR / dx
            cvec[1] += qL / dx      # qL < 0: outflow to the left
            cvec[0] -= qL / dx
        elif cfg.tip_flux != "statistical-pressure":
            raise ValueError(f"unknown tip-flux strategy {cfg.tip_flux!r}")

        if state.source_regularized:
            cvec[i0f - 1] += 0.5 * amp / dx
            cvec[i0f + 1] += 0.5 * amp / dx
        else:
            cvec[i0f] += amp / dx

        A = np.eye(nf) - omega * dt * (T @ G + B)
        rhs = w_t + dt * (1.0 - omega) * f_t + omega * dt * cvec
        if state.source_regularized:
            # source row: interpolation constraint
            A[i0f, :] = 0.0
            A[i0f, i0f] = 1.0
            if nf >= 5:
                A[i0f, [i0f - 1, i0f + 1]] = -4.0 / 6.0
                A[i0f, [i0f - 2, i0f + 2]] = 1.0 / 6.0
            else:
                A[i0f, [i0f - 1, i0f + 1]] = -0.5
            rhs[i0f] = 0.0
        w_new = np.linalg.solve(A, rhs)
        state.counters.linear_solves += 1
        change = np.max(np.abs(w_new - wbar)) / max(np.max(np.abs(w_new)), 1e-300)
        wbar = w_new
        if change < cfg.fp_tol:
            break
    else:
        raise RuntimeError(
            f"implicit fixed point did not converge in {cfg.fp_maxiter} "
            f"iterations (last change {change:.2e})")
    state.counters.outer_iterations += iters

    state.w[idx] = wbar
    state.rR, state.vR = rR, vR
    state.rL, state.vL = rL, vL
    state.front_R = state.x[state.tipR - 1] + rR
    state.front_L = state.x[state.tipL + 1] - rL
    state.t += dt
    state.update_collections_if_needed()
    return iters


def _kgd_rhs_at(state: Kgd1DState, cfg: StepConfig, w_f, G, i0f, t) -> np.ndarray:
    """Instantaneous explicit right-hand side at the given opening vector."""
    nf = len(w_f)
    if state.source_regularized:
        state.interpolate_source(w_f, i0f)
    p = G @ w_f
    state.counters.matvecs += 1
    q = np.zeros(nf + 1)
    win = 0.5 * (w_f[1:] + w_f[:-1])
    grad = np.diff(p) / state.dx
    q[1:-1] = win * lubrication.side_velocity(win, grad, 0.0, state.fluid.n)
    state.tip_fluxes(cfg.tip_flux, w_f, q)
    q[0] = q[nf] = 0.0
    amp = state.fluid.q0 * state.fluid.profile(t)
    if state.source_regularized:
        q[i0f] = -0.5 * amp
        q[i0f + 1] = 0.5 * amp
    dwdt = (q[:-1] - q[1:]) / state.dx
    if state.source_regularized:
        dwdt[i0f] = 0.0
    else:
        dwdt[i0f] += amp / state.dx
    return dwdt


def _planar_implicit(state: PlanarState, cfg: StepConfig, dt: float) -> int:
    g = state.grid
    n = state.fluid.n
    omega = cfg.omega
    frac = state.cls.fracture
    nf = len(frac)
    pos = {int(k): a for a, k in enumerate(frac)}
    w_t = state.w[frac].copy()
    r_t = state.r.copy()
    v_t = state.v.copy()
    Gm = state.G.matrix
    amp = state.fluid.q0 * state.fluid.profile(state.t + dt)
    i0f = pos[state.fluid.source_cell]

    f_t = np.zeros(nf)
    if omega < 1.0:
        f_t = state.rhs(cfg.tip_flux)[frac]

    wbar = w_t.copy()
    iters = 0
    for iters in range(1, cfg.fp_maxiter + 1):
        # speed equations with frozen ribbon openings
        r_new = np.empty_like(r_t)
        v_new = np.empty_like(v_t)
        for a, k in enumerate(state.ribbon_cells):
            r_new[a], v_new[a] = implicit_se_step(
                state.tipmodel, max(wbar[pos[int(k)]], 0.0), r_t[a], v_t[a],
                dt, omega)
        adv = r_new - state.r_at_recon

        # frozen conductivities on channel-channel sides
        p_bar = Gm @ wbar
        state.counters.matvecs += 1
        w2d = np.zeros(g.ny * g.nx)
        w2d[frac] = wbar
        w2d = w2d.reshape(g.ny, g.nx)
        p2d = np.zeros(g.ny * g.nx)
        p2d[frac] = p_bar
        p2d = p2d.reshape(g.ny, g.nx)

        rows = []
        cols = []
        vals = []  # representation of dwdt = T p + B w + c
        Br, Bc, Bv = [], [], []
        cvec = np.zeros(nf)

        def add_T(cell, col, v):
            rows.append(cell)
            cols.append(col)
            vals.append(v)

        # channel sides
        jj, ii = np.nonzero(state.vx_chan[:, 1:-1])
        for j, i in zip(jj, ii):
            kL = j * g.nx + i
            kR = kL + 1
            ws = 0.5 * (w2d[j, i] + w2d[j, i + 1])
            if n == 1.0:
                cond = ws ** 3
            else:
                gb = max(abs((p2d[j, i + 1] - p2d[j, i]) / g.dx),
                         lubrication.GRAD_FLOOR)
                cond = ws * (ws ** (n + 1.0) * gb ** (1.0 - n)) ** (1.0 / n)
            c = cond / (g.dx * g.dx)
            aL, aR = pos[kL], pos[kR]
            # q = -cond (p_R - p_L)/dx; dwdt_L -= q/dx, dwdt_R += q/dx
            add_T(aL, aR, -c)
            add_T(aL, aL, +c)
            add_T(aR, aR, -c)
            add_T(aR, aL, +c)
        jj, ii = np.nonzero(state.vy_chan[1:-1, :])
        for j, i in zip(jj, ii):
            kB = j * g.nx + i
            kT = kB + g.nx
            ws = 0.5 * (w2d[j, i] + w2d[j + 1, i])
            if n == 1.0:
                cond = ws ** 3
            else:
                gb = max(abs((p2d[j + 1, i] - p2d[j, i]) / g.dy),
                         lubrication.GRAD_FLOOR)
                cond = ws * (ws ** (n + 1.0) * gb ** (1.0 - n)) ** (1.0 / n)
            c = cond / (g.dy * g.dy)
            aB, aT = pos[kB], pos[kT]
            add_T(aB, aT, -c)
            add_T(aB, aB, +c)
            add_T(aT, aT, -c)
            add_T(aT, aB, +c)

        # ribbon-tip sides
        for axis, jj_, ii_, rk, tk, sgn, a in state.rt_sides:
            nvec = state.tip_normal[tk]
            aR, aT = pos[rk], pos[tk]
            h = g.dx if axis == "x" else g.dy
            owners = state.tip_owner.get(tk, [a])
            act = state._tip_center_distance_at(tk, adv, owners) > 0.0
            if cfg.tip_flux == "upwind-speed":
                if not act:
                    continue
                vs = float(np.mean(v_new[owners]))
                comp = nvec[0] if axis == "x" else nvec[1]
                # q = comp*vs*(w_r + w_t)/2, outflow from ribbon if sgn*q > 0
                coeff = comp * vs * 0.5 / h
                Br.append(aR); Bc.append(aR); Bv.append(-sgn * coeff)
                Br.append(aR); Bc.append(aT); Bv.append(-sgn * coeff)
                Br.append(aT); Bc.append(aR); Bv.append(+sgn * coeff)
                Br.append(aT); Bc.append(aT); Bv.append(+sgn * coeff)
            elif cfg.tip_flux == "asymptotic":
                from .tip import tip_side_flux_asymptotic
                vs = float(np.mean(v_new[owners]))
                r_mid = state._side_distance_at(axis, jj_, ii_, tk, adv, owners)
                q = tip_side_flux_asymptotic(
                    state.tipmodel, vs, nvec, r_mid,
                    "v" if axis == "x" else "h")
                cvec[aR] -= sgn * q / h
                cvec[aT] += sgn * q / h
            else:  # statistical-pressure
                ws = 0.5 * (w2d.ravel()[rk] + w2d.ravel()[tk])
                if n == 1.0:
                    cond = ws ** 3
                else:
                    gb = max(abs((p_bar[aT] - p_bar[aR]) / h),
                             lubrication.GRAD_FLOOR)
                    cond = ws * (ws ** (n + 1.0) * gb ** (1.0 - n)) ** (1.0 / n)
                c = cond / (h * h)
                lo, hi = (aR, aT) if sgn > 0 else (aT, aR)
                add_T(lo, hi, -c)
                add_T(lo, lo, +c)
                add_T(hi, hi, -c)
                add_T(hi, lo, +c)

        # source regularization: prescribed side fluxes into the neighbours
        qx_av, qy_av = lubrication.source_side_fluxes(g.dx, g.dy, amp)
        j0, i0 = state.src_ji
        for kk, qq, h in (((j0, i0 - 1), qx_av, g.dx),
                          ((j0, i0 + 1), qx_av, g.dx),
                          ((j0 - 1, i0), qy_av, g.dy),
                          ((j0 + 1, i0), qy_av, g.dy)):
            cvec[pos[kk[0] * g.nx + kk[1]]] += qq / h

        T = np.zeros((nf, nf))
        np.add.at(T, (np.array(rows, dtype=int), np.array(cols, dtype=int)),
                  np.array(vals))
        TB = T @ Gm
        if Br:
            np.add.at(TB, (np.array(Br, dtype=int), np.array(Bc, dtype=int)),
                      np.array(Bv))
        A = np.eye(nf) - omega * dt * TB
        rhs = w_t + dt * (1.0 - omega) * f_t + omega * dt * cvec
        # source row: biquadratic interpolation constraint
        A[i0f, :] = 0.0
        A[i0f, i0f] = 1.0
        coefs = {(0, -1): -4 / 12, (0, 1): -4 / 12, (-1, 0): -4 / 12,
                 (1, 0): -4 / 12, (0, -2): 1 / 12, (0, 2): 1 / 12,
                 (-2, 0): 1 / 12, (2, 0): 1 / 12}
        for (dj, di), cf in coefs.items():
            kk = (j0 + dj) * g.nx + (i0 + di)
            if kk in pos:
                A[i0f, pos[kk]] += cf
        rhs[i0f] = 0.0
        w_new = np.linalg.solve(A, rhs)
        state.counters.linear_solves += 1
        change = np.max(np.abs(w_new - wbar)) / max(np.max(np.abs(w_new)), 1e-300)
        wbar = w_new
        if change < cfg.fp_tol:
            break
    else:
        raise RuntimeError(
            f"implicit fixed point did not converge in {cfg.fp_maxiter} "
            f"iterations (last change {change:.2e})")
    state.counters.outer_iterations += iters

    state.w[:] = 0.0
    state.w[frac] = wbar
    state.apply_source_opening()
    state.r = r_new
    state.v = v_new
    state.t += dt
    state.reconstruct_and_update()
    return iters


# --------------------------------------------------------------------------
# driver
# --------------------------------------------------------------------------

def advance_to(state, cfg: StepConfig, t_end: float, on_step=None,
               max_steps: int = 20_000_000, implicit_steps: int | None = None,
               fixed_dt: float | None = None):
    """March the state to t_end; raises on instability or non-convergence.

    Explicit mode uses the safety-factored CFL step re-evaluated at the
    current time (or the constant fixed_dt when given); implicit mode divides
    the interval into `implicit_steps` equal steps (default: the nominal
    count of the reference scheme).
    """
    steps = 0
    if cfg.mode == "explicit":
        while state.t < t_end - 1e-14:
            if fixed_dt is not None:
                dt = min(fixed_dt, t_end - state.t)
            else:
                dt = min(cfg.safety * max_stable_dt_central(
                    _dz_of(state), cfg.k_cfl, state.t), t_end - state.t)
            explicit_step(state, cfg, dt)
            steps += 1
            if not state.healthy():
                raise RuntimeError(
                    f"explicit run became unstable at t={state.t:.6f} "
                    f"after {steps} steps")
            if on_step is not None:
                on_step(state)
            if steps >= max_steps:
                raise RuntimeError("step budget exhausted")
    else:
        nsteps = implicit_steps or N_STS_NOMINAL
        dts = np.diff(np.linspace(state.t, t_end, nsteps + 1))
        for dt in dts:
            implicit_step(state, cfg, float(dt))
            steps += 1
            if not state.healthy():
                raise RuntimeError(
                    f"implicit run became unstable at t={state.t:.6f}")
            if on_step is not None:
                on_step(state)
    return steps
