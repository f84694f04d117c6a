"""Numba @njit kernels (default backend when numba is importable).

Loop twins of kernels_numpy with identical guarded arithmetic; see that
module for the edge-kind table and contracts. Serial (no prange) so
reductions keep a fixed order and reruns are deterministic.
"""

import math

import numpy as np
from numba import njit

EDGE_NORMAL = 0
EDGE_WALL = 1
EDGE_DRY_R = 2
EDGE_DRY_L = 3
EDGE_OFF = 4


@njit(cache=True, inline="always")
def _vel2(h, hux, huy, h_floor, u_cap):
    if h >= h_floor:
        ux = hux / h
        uy = huy / h
    elif h > 0.0:
        sc = h / (h_floor * h_floor)
        ux = hux * sc
        uy = huy * sc
    else:
        return 0.0, 0.0
    if np.isfinite(u_cap):
        umag = math.sqrt(ux * ux + uy * uy)
        if umag > u_cap:
            fac = u_cap / umag
            ux *= fac
            uy *= fac
    return ux, uy


@njit(cache=True, inline="always")
def _qbn1(ux, uy, nx, ny, grass_a, m_exp):
    if grass_a == 0.0:
        return 0.0
    umag = math.sqrt(ux * ux + uy * uy)
    if umag <= 0.0:
        return 0.0
    return grass_a * (ux * nx + uy * ny) * umag ** (m_exp - 1.0)


@njit(cache=True)
def hll_edge_flux(UL, UR, normal, kind, g, grass_a, m_exp, h_floor, u_cap=np.inf):
    ne, _, nq = UL.shape
    F = np.zeros((ne, 5, nq))
    for e in range(ne):
        k = kind[e]
        if k == EDGE_OFF:
            continue
        nx = normal[e, 0]
        ny = normal[e, 1]
        for q in range(nq):
            hL = UL[e, 0, q]
            huxL = UL[e, 1, q]
            huyL = UL[e, 2, q]
            hcL = UL[e, 3, q]
            hR = UR[e, 0, q]
            huxR = UR[e, 1, q]
            huyR = UR[e, 2, q]
            hcR = UR[e, 3, q]
            uxL, uyL = _vel2(hL, huxL, huyL, h_floor, u_cap)
            uxR, uyR = _vel2(hR, huxR, huyR, h_floor, u_cap)
            unL = uxL * nx + uyL * ny
            unR = uxR * nx + uyR * ny
            aL = math.sqrt(g * max(hL, 0.0))
            aR = math.sqrt(g * max(hR, 0.0))
            if k == EDGE_DRY_R:
                sl = unL - aL
                sr = unL + 2.0 * aL
            elif k == EDGE_DRY_L:
                sl = unR - 2.0 * aR
                sr = unR + aR
            else:
                sl = min(unL - aL, unR - aR)
                sr = max(unL + aL, unR + aR)
            pL = 0.5 * g * hL * hL
            pR = 0.5 * g * hR * hR
            fL0 = hL * unL
            fL1 = hL * uxL * unL + pL * nx
            fL2 = hL * uyL * unL + pL * ny
            fL3 = hcL * unL
            fR0 = hR * unR
            fR1 = hR * uxR * unR + pR * nx
            fR2 = hR * uyR * unR + pR * ny
            fR3 = hcR * unR
            if sl > 0.0:
                F[e, 0, q] = fL0
                F[e, 1, q] = fL1
                F[e, 2, q] = fL2
                F[e, 3, q] = fL3
            elif sr < 0.0:
                F[e, 0, q] = fR0
                F[e, 1, q] = fR1
                F[e, 2, q] = fR2
                F[e, 3, q] = fR3
            else:
                denom = sr - sl
                if denom <= 0.0:
                    denom = 1.0
                ss = sl * sr
                F[e, 0, q] = (sr * fL0 - sl * fR0 + ss * (hR - hL)) / denom
                F[e, 1, q] = (sr * fL1 - sl * fR1 + ss * (huxR - huxL)) / denom
                F[e, 2, q] = (sr * fL2 - sl * fR2 + ss * (huyR - huyL)) / denom
                F[e, 3, q] = (sr * fL3 - sl * fR3 + ss * (hcR - hcL)) / denom
            if k != EDGE_WALL:
                sqL = math.sqrt(max(hL, 0.0))
                sqR = math.sqrt(max(hR, 0.0))
                wsum = sqL + sqR
                if wsum > 0.0:
                    uhatn = (unL * sqL + unR * sqR) / wsum
                else:
                    uhatn = 0.0
                if uhatn >= 0.0:
                    F[e, 4, q] = _qbn1(uxL, uyL, nx, ny, grass_a, m_exp)
                else:
                    F[e, 4, q] = _qbn1(uxR, uyR, nx, ny, grass_a, m_exp)
    return F


@njit(cache=True)
def hdg_edge_flux(UL, UR, RH, normal, kind, g, grass_a, m_exp, h_floor, u_cap=np.inf):
    ne, _, nq = UL.shape
    FL = np.zeros((ne, 5, nq))
    FR = np.zeros((ne, 5, nq))
    for e in range(ne):
        k = kind[e]
        if k == EDGE_OFF:
            continue
        nx = normal[e, 0]
        ny = normal[e, 1]
        for q in range(nq):
            hh = RH[e, 0, q]
            hux = RH[e, 1, q]
            huy = RH[e, 2, q]
            hhc = RH[e, 3, q]
            ux, uy = _vel2(hh, hux, huy, h_floor, u_cap)
            un = ux * nx + uy * ny
            tau = abs(un) + math.sqrt(g * max(hh, 0.0))
            ph = 0.5 * g * hh * hh
            g0 = hh * un
            g1 = hux * un + ph * nx
            g2 = huy * un + ph * ny
            g3 = hhc * un
            FL[e, 0, q] = g0 + tau * (UL[e, 0, q] - hh)
            FL[e, 1, q] = g1 + tau * (UL[e, 1, q] - hux)
            FL[e, 2, q] = g2 + tau * (UL[e, 2, q] - huy)
            FL[e, 3, q] = g3 + tau * (UL[e, 3, q] - hhc)
            FR[e, 0, q] = -g0 + tau * (UR[e, 0, q] - hh)
            FR[e, 1, q] = -g1 + tau * (UR[e, 1, q] - hux)
            FR[e, 2, q] = -g2 + tau * (UR[e, 2, q] - huy)
            FR[e, 3, q] = -g3 + tau * (UR[e, 3, q] - hhc)
            if k != EDGE_WALL:
                hL = UL[e, 0, q]
                hR = UR[e, 0, q]
                uxL, uyL = _vel2(hL, UL[e, 1, q], UL[e, 2, q], h_floor, u_cap)
                uxR, uyR = _vel2(hR, UR[e, 1, q], UR[e, 2, q], h_floor, u_cap)
                unL = uxL * nx + uyL * ny
                unR = uxR * nx + uyR * ny
                sqL = math.sqrt(max(hL, 0.0))
                sqR = math.sqrt(max(hR, 0.0))
                wsum = sqL + sqR
                if wsum > 0.0:
                    uhatn = (unL * sqL + unR * sqR) / wsum
                else:
                    uhatn = 0.0
                if uhatn >= 0.0:
                    qbn = _qbn1(uxL, uyL, nx, ny, grass_a, m_exp)
                else:
                    qbn = _qbn1(uxR, uyR, nx, ny, grass_a, m_exp)
                FL[e, 4, q] = qbn
                FR[e, 4, q] = -qbn
    return FL, FR


@njit(cache=True)
def volume_terms(
    U,
    dH,
    dHC,
    dB,
    active,
    g,
    rho_s,
    rho_w,
    porosity,
    theta_c,
    d50,
    phi_cal,
    w_settle,
    grass_a,
    m_exp,
    n_manning,
    friction_sign,
    shields_sqrt,
    ent_u_over_h,
    exchange_cap,
    suspended,
    h_floor,
    u_cap=np.inf,
):
    nt, _, nq = U.shape
    Fx = np.zeros((nt, 5, nq))
    Fy = np.zeros((nt, 5, nq))
    S = np.zeros((nt, 5, nq))
    s_grav = rho_s / rho_w - 1.0
    rho0 = (1.0 - porosity) * rho_s + porosity * rho_w
    for e in range(nt):
        if not active[e]:
            continue
        for q in range(nq):
            h = U[e, 0, q]
            hux = U[e, 1, q]
            huy = U[e, 2, q]
            hc = U[e, 3, q]
            ux, uy = _vel2(h, hux, huy, h_floor, u_cap)
            umag = math.sqrt(ux * ux + uy * uy)
            wet = h >= h_floor
            hsafe = h if wet else h_floor
            c = hc / hsafe if wet else 0.0
            cc = min(max(c, 0.0), 1.0)

            p = 0.5 * g * h * h
            if grass_a != 0.0 and umag > 0.0:
                qbc = grass_a * max(umag, 1e-300) ** (m_exp - 1.0)
            else:
                qbc = 0.0
            Fx[e, 0, q] = h * ux
            Fx[e, 1, q] = h * ux * ux + p
            Fx[e, 2, q] = h * uy * ux
            Fx[e, 3, q] = hc * ux
            Fx[e, 4, q] = qbc * ux
            Fy[e, 0, q] = h * uy
            Fy[e, 1, q] = h * ux * uy
            Fy[e, 2, q] = h * uy * uy + p
            Fy[e, 3, q] = hc * uy
            Fy[e, 4, q] = qbc * uy

            h13 = hsafe ** (1.0 / 3.0)
            tau_b = g * n_manning * n_manning * umag * umag / h13
            if shields_sqrt:
                theta = tau_b / math.sqrt(s_grav * g * d50)
            else:
                theta = tau_b / (s_grav * g * d50)
            if suspended:
                if wet and theta > theta_c:
                    hfac = 1.0 / hsafe if ent_u_over_h else h
                    E = min(phi_cal * (theta - theta_c) * umag * hfac, exchange_cap)
                else:
                    E = 0.0
                if cc > 0.0:
                    alpha_c = min(2.0, (1.0 - porosity) / cc)
                else:
                    alpha_c = 0.0
                Ca = cc * alpha_c
                D = w_settle * Ca * (1.0 - Ca) ** 2 if wet else 0.0
            else:
                E = 0.0
                D = 0.0
            rho = (1.0 - cc) * rho_w + cc * rho_s
            ed = (E - D) / (1.0 - porosity)

            inv_h = 1.0 / hsafe if wet else 0.0
            gcx = (dHC[e, 0, q] - cc * dH[e, 0, q]) * inv_h
            gcy = (dHC[e, 1, q] - cc * dH[e, 1, q]) * inv_h
            fric = friction_sign * g * n_manning * n_manning / h13 * umag if wet else 0.0
            sed_mom = (rho0 - rho) * (E - D) / (rho * (1.0 - porosity))
            cpress = (rho_s - rho_w) / (2.0 * rho) * g * h * h

            S[e, 0, q] = ed
            S[e, 1, q] = -g * h * dB[e, 0, q] - cpress * gcx - sed_mom * ux + fric * ux
            S[e, 2, q] = -g * h * dB[e, 1, q] - cpress * gcy - sed_mom * uy + fric * uy
            S[e, 3, q] = E - D
            S[e, 4, q] = -ed
    return Fx, Fy, S


@njit(cache=True, inline="always")
def _minmod1(a, b):
    if a * b > 0.0:
        if a >= 0.0:
            return min(a, b)
        return max(a, b)
    return 0.0


@njit(cache=True)
def limit_fields(coeffs, means, midv, nbr, pair_j, pair_alpha, pair_ok, mh2, nu, recon):
    nt, nc, nm = coeffs.shape
    out = coeffs.copy()
    fired = np.zeros(nt, dtype=np.bool_)
    lim = np.empty(3)
    for e in range(nt):
        for comp in range(nc):
            ub = means[e, comp]
            changed = False
            for i in range(3):
                ut = midv[e, comp, i] - ub
                if abs(ut) <= mh2[e] or not pair_ok[e, i]:
                    lim[i] = ut
                    continue
                dbar = 0.0
                for s in range(2):
                    j = pair_j[e, i, s]
                    n = nbr[e, j]
                    dm = (means[n, comp] - ub) if n >= 0 else 0.0
                    dbar += pair_alpha[e, i, s] * dm
                dbar *= nu
                v = _minmod1(ut, dbar)
                lim[i] = v
                if v != ut:
                    changed = True
            if not changed:
                continue
            pos = 0.0
            neg = 0.0
            for i in range(3):
                if lim[i] > 0.0:
                    pos += lim[i]
                else:
                    neg -= lim[i]
            tp = min(1.0, neg / pos) if pos > 0.0 else 0.0
            tm = min(1.0, pos / neg) if neg > 0.0 else 0.0
            s0 = 0.0
            s1 = 0.0
            for i in range(3):
                adj = tp * lim[i] if lim[i] > 0.0 else tm * lim[i]
                s0 += recon[0, i] * adj
                s1 += recon[1, i] * adj
            out[e, comp, 1] = s0
            out[e, comp, 2] = s1
            for m in range(3, nm):
                out[e, comp, m] = 0.0
            fired[e] = True
    return out, fired


@njit(cache=True)
def wetdry_repair(coeffs, phi_vert, v2m, mode0_to_mean, h_wet, void_factor=0.0):
    nt, nc, nm = coeffs.shape
    out = coeffs.copy()
    wet = np.ones(nt, dtype=np.bool_)
    neg_elem = -1
    hv = np.empty(3)
    for e in range(nt):
        for i in range(3):
            v = 0.0
            for m in range(nm):
                v += phi_vert[i, m] * out[e, 0, m]
            hv[i] = v
        mean = (hv[0] + hv[1] + hv[2]) / 3.0
        if mean < 0.0:
            if neg_elem < 0:
                neg_elem = e
        elif hv[0] < 0.0 or hv[1] < 0.0 or hv[2] < 0.0:
            ssum = 0.0
            for i in range(3):
                hv[i] = max(hv[i], 0.0)
                ssum += hv[i]
            scale = 3.0 * mean / ssum if ssum > 0.0 else 0.0
            for i in range(3):
                hv[i] *= scale
            for m in range(nm):
                v = 0.0
                for i in range(3):
                    v += v2m[m, i] * hv[i]
                out[e, 0, m] = v
        if mean < h_wet:
            wet[e] = False
            out[e, 4, 0] += void_factor * out[e, 3, 0]
            for m in range(nm):
                out[e, 1, m] = 0.0
                out[e, 2, m] = 0.0
                out[e, 3, m] = 0.0
                out[e, 0, m] = 0.0
            out[e, 0, 0] = max(mean, 0.0) / mode0_to_mean
    return out, wet, neg_elem
