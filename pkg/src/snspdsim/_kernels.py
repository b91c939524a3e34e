"""Compiled inner loops of the coupled electro-thermal stepper.

All kernels operate on plain float64 arrays and scalars so numba can cache
the compiled code across processes.  The temperature update works on an
active window [lo, hi): cells outside the window are exactly at T_sub,
superconducting and flux-free, so restricting the explicit update to the
window (grown by one cell per sub-step, the scheme's domain of influence)
is exact, not an approximation.

Status codes returned by the span kernels:
    0  ok
    1  non-physical value (NaN / non-positive temperature or state)
    2  click buffer overflow
"""

import math

import numpy as np
from numba import njit

# window membership tolerance: |T - T_sub| above this keeps a cell active.
# Cells within the tolerance freeze at their stored value (nothing is lost);
# 1e-5 K is four orders below any temperature scale of the model.
_WIN_TOL = 1e-5


@njit(cache=True)
def thermal_span(T, scratch, lo, hi, n, i_abs, dt_total,
                 dx, T_c, T_sub, ic0, c0, kappa0, alpha, d_th, n_bnd,
                 joule_vol):
    """Advance the temperature field by dt_total with internal sub-stepping.

    Returns (lo, hi, n_normal, T_max, status).  n_normal counts cells that
    are normal for the final field at wire current i_abs (cells outside
    the window included when i_abs exceeds the substrate-temperature
    critical current).
    """
    dt_diff = 0.4 * dx * dx * c0 / kappa0
    half_uc = 0.5 * c0 / T_c          # u(T) = half_uc * T^2
    kap_c = kappa0 / T_c              # kappa(T) = kap_c * T
    cool_c = alpha / d_th
    tsub_pow = T_sub ** n_bnd
    inv_dx2 = 1.0 / (dx * dx)
    ic_sub = ic0 * (1.0 - (T_sub / T_c) ** 2)
    if ic_sub < 0.0:
        ic_sub = 0.0
    tighten = i_abs <= ic_sub  # normal-at-T_sub cells must stay in the window

    t_max = T_sub
    for i in range(lo, hi):
        if T[i] > t_max:
            t_max = T[i]

    remaining = dt_total
    while remaining > 0.0 and lo < hi:
        dt_sub = dt_diff
        if alpha > 0.0 and t_max > T_sub:
            c_t = c0 * t_max / T_c
            rate = cool_c * n_bnd * t_max ** (n_bnd - 1.0) / c_t
            if rate > 0.0:
                dt_cool = 0.5 / rate
                if dt_cool < dt_sub:
                    dt_sub = dt_cool
        if remaining < dt_sub:
            dt_sub = remaining

        lo2 = lo - 1 if lo > 0 else 0
        hi2 = hi + 1 if hi < n else n
        new_max = T_sub
        for i in range(lo2, hi2):
            ti = T[i]
            tl = T[i - 1] if i > 0 else ti
            tr = T[i + 1] if i < n - 1 else ti
            diff = (0.5 * kap_c * (ti + tr) * (tr - ti)
                    + 0.5 * kap_c * (ti + tl) * (tl - ti)) * inv_dx2
            ic_t = ic0 * (1.0 - (ti / T_c) ** 2)
            if ic_t < 0.0:
                ic_t = 0.0
            q = joule_vol if (ti > T_c or i_abs > ic_t) else 0.0
            cool = cool_c * (ti ** n_bnd - tsub_pow)
            u = half_uc * ti * ti + dt_sub * (diff + q - cool)
            if not (u > 0.0):  # catches NaN and non-positive energy
                return lo, hi, -1, t_max, 1
            tn = math.sqrt(u / half_uc)
            scratch[i] = tn
            if tn > new_max:
                new_max = tn
        for i in range(lo2, hi2):
            T[i] = scratch[i]
        if tighten:
            while lo2 < hi2 and abs(T[lo2] - T_sub) <= _WIN_TOL:
                lo2 += 1
            while hi2 > lo2 and abs(T[hi2 - 1] - T_sub) <= _WIN_TOL:
                hi2 -= 1
        lo = lo2
        hi = hi2
        t_max = new_max
        remaining -= dt_sub

    n_normal = 0
    if i_abs > ic_sub:
        n_normal = n - (hi - lo)
    for i in range(lo, hi):
        ic_t = ic0 * (1.0 - (T[i] / T_c) ** 2)
        if ic_t < 0.0:
            ic_t = 0.0
        if T[i] > T_c or i_abs > ic_t:
            n_normal += 1
    return lo, hi, n_normal, t_max, 0


@njit(cache=True)
def gm_span(T, scratch, lo, hi,
            v_c, i_L, t0, n_steps, dt, step0,
            v_off, v_amp, w, ph,
            L_k, C_p, R_p,
            dx, T_c, T_sub, ic0, c0, kappa0, alpha, d_th, n_bnd,
            joule_coeff, r_cell, ic_sub,
            latch_thr, tc_lo, tc_hi,
            use_forced, forced_t, forced_r,
            cur_streak, res_armed,
            sample_every, out_t, out_i, out_v, out_r, out_T):
    """March n_steps of the gated-mode core from t0.

    Coupling order per step: thermal update with the current i_L, then the
    hotspot resistance, then an RK4 circuit step with that frozen R_hs
    (sub-stepped when R_hs makes the branch stiff).

    res_armed marks that R_hs has been zero since the last resistive
    episode; each 0 -> positive transition counts one new episode.

    Returns (v_c, i_L, lo, hi, peak_i, t_above, max_streak, cur_streak,
    res_armed, n_episodes, min_r, max_T_all, max_T_center, last_resistive,
    n_out, r_end, status).
    """
    n = T.shape[0]
    peak_i = -1e300
    t_above = 0.0
    max_streak = 0.0
    min_r = 1e300
    max_T_all = T_sub
    max_T_center = T_sub
    last_resistive = -1.0
    n_out = 0
    n_episodes = 0
    fcur = 0
    r_hs = 0.0
    status = 0

    for k in range(n_steps):
        t = t0 + k * dt
        i_abs = abs(i_L)

        if use_forced:
            while fcur + 1 < forced_t.shape[0] and t >= forced_t[fcur + 1] - 1e-30:
                fcur += 1
            r_hs = forced_r[fcur]
            t_max_step = T_sub
        else:
            if i_abs > ic_sub:
                lo = 0
                hi = n
            jv = i_abs * i_abs * joule_coeff
            lo, hi, n_norm, t_max_step, st = thermal_span(
                T, scratch, lo, hi, n, i_abs, dt,
                dx, T_c, T_sub, ic0, c0, kappa0, alpha, d_th, n_bnd, jv)
            if st != 0:
                status = 1
                break
            r_hs = n_norm * r_cell

        if r_hs > 0.0:
            if res_armed:
                n_episodes += 1
                res_armed = False
        else:
            res_armed = True
        if i_L > peak_i:
            peak_i = i_L
        if r_hs > latch_thr:
            t_above += dt
            cur_streak += dt
            if cur_streak > max_streak:
                max_streak = cur_streak
        else:
            cur_streak = 0.0
        if r_hs > 0.0:
            last_resistive = t
        if r_hs < min_r:
            min_r = r_hs
        if t_max_step > max_T_all:
            max_T_all = t_max_step
        if tc_lo <= t < tc_hi and t_max_step > max_T_center:
            max_T_center = t_max_step
        if sample_every > 0 and (step0 + k) % sample_every == 0:
            out_t[n_out] = t
            out_i[n_out] = i_L
            out_v[n_out] = v_c
            out_r[n_out] = r_hs
            out_T[n_out] = t_max_step
            n_out += 1

        # RK4 circuit update, sub-stepped for stability when R_hs is large
        n_c = 1 + int(dt * r_hs / (1.5 * L_k))
        h = dt / n_c
        for m in range(n_c):
            tt = t + m * h
            v_src = v_off + v_amp * math.sin(w * tt + ph)
            k1v = ((v_src - v_c) / R_p - i_L) / C_p
            k1i = (v_c - i_L * r_hs) / L_k
            th_ = tt + 0.5 * h
            v_mid = v_off + v_amp * math.sin(w * th_ + ph)
            av = v_c + 0.5 * h * k1v
            ai = i_L + 0.5 * h * k1i
            k2v = ((v_mid - av) / R_p - ai) / C_p
            k2i = (av - ai * r_hs) / L_k
            av = v_c + 0.5 * h * k2v
            ai = i_L + 0.5 * h * k2i
            k3v = ((v_mid - av) / R_p - ai) / C_p
            k3i = (av - ai * r_hs) / L_k
            te = tt + h
            v_end = v_off + v_amp * math.sin(w * te + ph)
            av = v_c + h * k3v
            ai = i_L + h * k3i
            k4v = ((v_end - av) / R_p - ai) / C_p
            k4i = (av - ai * r_hs) / L_k
            v_c += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
            i_L += h / 6.0 * (k1i + 2.0 * k2i + 2.0 * k3i + k4i)
        if not (math.isfinite(v_c) and math.isfinite(i_L)):
            status = 1
            break

    return (v_c, i_L, lo, hi, peak_i, t_above, max_streak, cur_streak,
            res_armed, n_episodes, min_r, max_T_all, max_T_center,
            last_resistive, n_out, r_hs, status)


@njit(cache=True)
def fm_span(T, scratch, lo, hi,
            i_L, t0, n_steps, dt, step0,
            v_off, v_slope,
            L_k, R_L,
            dx, T_c, T_sub, ic0, c0, kappa0, alpha, d_th, n_bnd,
            joule_coeff, r_cell, ic_sub,
            latch_thr,
            use_forced, forced_t, forced_r,
            cur_streak, click_armed,
            click_times, sample_every, out_t, out_i, out_v, out_r, out_T):
    """March n_steps of the free-running branch (exact exponential update).

    The nanowire sees a Thevenin source v(t) = v_off + v_slope * t behind
    R_L; with R_hs frozen over a step the branch ODE is linear and the
    update i -> i_eq + (i - i_eq) exp(-dt (R_L + R_hs)/L_k) is exact, so
    arbitrarily stiff loads are stable.

    Returns (i_L, lo, hi, peak_i, t_above, max_streak, cur_streak,
    click_armed, n_clicks, min_r, max_T_all, last_resistive, n_out, r_hs,
    status).
    """
    n = T.shape[0]
    peak_i = -1e300
    t_above = 0.0
    max_streak = 0.0
    min_r = 1e300
    max_T_all = T_sub
    last_resistive = -1.0
    n_out = 0
    n_clicks = 0
    fcur = 0
    r_hs = 0.0
    status = 0

    for k in range(n_steps):
        t = t0 + k * dt
        i_abs = abs(i_L)

        if use_forced:
            while fcur + 1 < forced_t.shape[0] and t >= forced_t[fcur + 1] - 1e-30:
                fcur += 1
            r_hs = forced_r[fcur]
            t_max_step = T_sub
        else:
            if i_abs > ic_sub:
                lo = 0
                hi = n
            jv = i_abs * i_abs * joule_coeff
            lo, hi, n_norm, t_max_step, st = thermal_span(
                T, scratch, lo, hi, n, i_abs, dt,
                dx, T_c, T_sub, ic0, c0, kappa0, alpha, d_th, n_bnd, jv)
            if st != 0:
                status = 1
                break
            r_hs = n_norm * r_cell

        if i_L > peak_i:
            peak_i = i_L
        if r_hs > latch_thr:
            t_above += dt
            cur_streak += dt
            if cur_streak > max_streak:
                max_streak = cur_streak
            if click_armed:
                if n_clicks >= click_times.shape[0]:
                    status = 2
                    break
                click_times[n_clicks] = t
                n_clicks += 1
                click_armed = False
        else:
            cur_streak = 0.0
        if r_hs == 0.0:
            click_armed = True
        else:
            last_resistive = t
        if r_hs < min_r:
            min_r = r_hs
        if t_max_step > max_T_all:
            max_T_all = t_max_step
        if sample_every > 0 and (step0 + k) % sample_every == 0:
            out_t[n_out] = t
            out_i[n_out] = i_L
            out_v[n_out] = i_L * r_hs
            out_r[n_out] = r_hs
            out_T[n_out] = t_max_step
            n_out += 1

        r_tot = R_L + r_hs
        v_mid = v_off + v_slope * (t + 0.5 * dt)
        i_eq = v_mid / r_tot
        i_L = i_eq + (i_L - i_eq) * math.exp(-dt * r_tot / L_k)
        if not math.isfinite(i_L):
            status = 1
            break

    return (i_L, lo, hi, peak_i, t_above, max_streak, cur_streak,
            click_armed, n_clicks, min_r, max_T_all, last_resistive,
            n_out, r_hs, status)


@njit(cache=True)
def fm_cw_train(arr_t, arr_cell, arr_u,
                i_bias, R_L, L_k, dt,
                dx, T_c, T_sub, ic0, c0, kappa0, alpha, d_th, n_bnd,
                joule_coeff, r_cell, ic_sub,
                hotspot_T, seed_cells,
                qe_max, qe_steep, qe_center, qe_iref,
                latch_thr, relax_tol,
                T, scratch, click_out):
    """Free-running CW-illumination click train, event-driven.

    Photon arrivals (times arr_t sorted, landing cell arr_cell, acceptance
    uniform arr_u) are thinned by the logistic detection-probability curve
    evaluated at the instantaneous current.  Between detection episodes the
    wire is superconducting and fully relaxed, so the current recovery is
    advanced analytically; a detection runs the stepped electro-thermal
    loop until the wire is superconducting and the residual temperature
    falls below relax_tol (then zeroed).

    Returns (n_clicks, status).
    """
    n = T.shape[0]
    tau_e = L_k / R_L
    v_off = i_bias * R_L
    i_L = i_bias
    t = 0.0
    n_clicks = 0
    j = 0
    n_arr = arr_t.shape[0]
    while j < n_arr:
        # relaxed superconducting stretch: jump analytically to the arrival
        ta = arr_t[j]
        i_L = i_bias + (i_L - i_bias) * math.exp(-(ta - t) / tau_e)
        t = ta
        x = abs(i_L) / qe_iref
        qe = qe_max / (1.0 + math.exp(-qe_steep * (x - qe_center)))
        u = arr_u[j]
        c = arr_cell[j]
        j += 1
        if u >= qe:
            continue
        i0 = c - seed_cells // 2
        if i0 < 0:
            i0 = 0
        i1 = i0 + seed_cells
        if i1 > n:
            i1 = n
            i0 = n - seed_cells
        for ii in range(i0, i1):
            T[ii] = hotspot_T
        lo, hi = i0, i1
        armed = True
        while True:
            i_abs = abs(i_L)
            if i_abs > ic_sub:
                lo = 0
                hi = n
            jv = i_abs * i_abs * joule_coeff
            lo, hi, n_norm, t_max_step, st = thermal_span(
                T, scratch, lo, hi, n, i_abs, dt,
                dx, T_c, T_sub, ic0, c0, kappa0, alpha, d_th, n_bnd, jv)
            if st != 0:
                return n_clicks, 1
            r_hs = n_norm * r_cell
            if armed and r_hs > latch_thr:
                if n_clicks >= click_out.shape[0]:
                    return n_clicks, 2
                click_out[n_clicks] = t
                n_clicks += 1
                armed = False
            if r_hs == 0.0:
                armed = True
            # arrivals landing inside the episode
            while j < n_arr and arr_t[j] <= t:
                x = abs(i_L) / qe_iref
                qe = qe_max / (1.0 + math.exp(-qe_steep * (x - qe_center)))
                if arr_u[j] < qe:
                    c = arr_cell[j]
                    i0 = c - seed_cells // 2
                    if i0 < 0:
                        i0 = 0
                    i1 = i0 + seed_cells
                    if i1 > n:
                        i1 = n
                        i0 = n - seed_cells
                    for ii in range(i0, i1):
                        T[ii] = hotspot_T
                    if lo >= hi:
                        lo, hi = i0, i1
                    else:
                        if i0 < lo:
                            lo = i0
                        if i1 > hi:
                            hi = i1
                j += 1
            r_tot = R_L + r_hs
            i_eq = v_off / r_tot
            i_L = i_eq + (i_L - i_eq) * math.exp(-dt * r_tot / L_k)
            if not math.isfinite(i_L):
                return n_clicks, 1
            t += dt
            if r_hs == 0.0 and t_max_step - T_sub < relax_tol:
                for ii in range(lo, hi):
                    T[ii] = T_sub
                break
    return n_clicks, 0
