"""Pure-numpy vectorized kernels (fallback backend).

Signatures and arithmetic mirror kernels_numba exactly; both paths use the
same guarded divisions so results agree to floating-point roundoff.

Edge kinds:
    0 normal      two live states (wet interior edge, or boundary + ghost)
    1 wall        UR (or UL) holds a mirror ghost; bed-load flux forced to 0
    2 dry right   flooding front, right side thin: dry-bed wave speeds
    3 dry left    flooding front, left side thin
    4 off         masked edge, zero flux
"""

import numpy as np

EDGE_NORMAL = 0
EDGE_WALL = 1
EDGE_DRY_R = 2
EDGE_DRY_L = 3
EDGE_OFF = 4


def _velocity(h, hux, huy, h_floor, u_cap):
    hsafe = np.where(h >= h_floor, h, h_floor)
    scale = np.where(h >= h_floor, 1.0 / hsafe, h / (h_floor * h_floor))
    scale = np.where(h > 0.0, scale, 0.0)
    ux = hux * scale
    uy = huy * scale
    if np.isfinite(u_cap):
        umag = np.sqrt(ux * ux + uy * uy)
        fac = np.where(umag > u_cap, u_cap / np.where(umag > u_cap, umag, 1.0), 1.0)
        ux = ux * fac
        uy = uy * fac
    return ux, uy


def _qb_normal(ux, uy, nx, ny, grass_a, m_exp):
    if grass_a == 0.0:
        return np.zeros(np.broadcast(ux, nx).shape)
    umag = np.sqrt(ux * ux + uy * uy)
    un = ux * nx + uy * ny
    out = np.where(
        umag > 0.0, grass_a * un * np.maximum(umag, 1e-300) ** (m_exp - 1.0), 0.0
    )
    return out


def hll_edge_flux(UL, UR, normal, kind, g, grass_a, m_exp, h_floor, u_cap=np.inf):
    """Single-valued interface flux in the left-element normal; (ne, 5, nq)."""
    nx = normal[:, 0][:, None]
    ny = normal[:, 1][:, None]
    hL, huxL, huyL, hcL = UL[:, 0], UL[:, 1], UL[:, 2], UL[:, 3]
    hR, huxR, huyR, hcR = UR[:, 0], UR[:, 1], UR[:, 2], UR[:, 3]
    uxL, uyL = _velocity(hL, huxL, huyL, h_floor, u_cap)
    uxR, uyR = _velocity(hR, huxR, huyR, h_floor, u_cap)
    unL = uxL * nx + uyL * ny
    unR = uxR * nx + uyR * ny
    aL = np.sqrt(g * np.maximum(hL, 0.0))
    aR = np.sqrt(g * np.maximum(hR, 0.0))

    k = kind[:, None]
    sl = np.minimum(unL - aL, unR - aR)
    sr = np.maximum(unL + aL, unR + aR)
    sl = np.where(k == EDGE_DRY_R, unL - aL, sl)
    sr = np.where(k == EDGE_DRY_R, unL + 2.0 * aL, sr)
    sl = np.where(k == EDGE_DRY_L, unR - 2.0 * aR, sl)
    sr = np.where(k == EDGE_DRY_L, unR + aR, sr)

    pL = 0.5 * g * hL * hL
    pR = 0.5 * g * hR * hR
    fL = np.stack([hL * unL, hL * uxL * unL + pL * nx, hL * uyL * unL + pL * ny, hcL * unL], 1)
    fR = np.stack([hR * unR, hR * uxR * unR + pR * nx, hR * uyR * unR + pR * ny, hcR * unR], 1)

    denom = sr - sl
    denom = np.where(denom > 0.0, denom, 1.0)
    rdiff = UR[:, :4] - UL[:, :4]
    slb = sl[:, None, :]
    srb = sr[:, None, :]
    fmid = (srb * fL - slb * fR + slb * srb * rdiff) / denom[:, None, :]
    F4 = np.where(slb > 0.0, fL, np.where(srb < 0.0, fR, fmid))

    # upwinded bed-load flux by the Roe-averaged normal velocity
    sqL = np.sqrt(np.maximum(hL, 0.0))
    sqR = np.sqrt(np.maximum(hR, 0.0))
    wsum = sqL + sqR
    uhatn = np.where(wsum > 0.0, (unL * sqL + unR * sqR) / np.where(wsum > 0.0, wsum, 1.0), 0.0)
    qbL = _qb_normal(uxL, uyL, nx, ny, grass_a, m_exp)
    qbR = _qb_normal(uxR, uyR, nx, ny, grass_a, m_exp)
    qbn = np.where(uhatn >= 0.0, qbL, qbR)
    qbn = np.where(k == EDGE_WALL, 0.0, qbn)

    F = np.concatenate([F4, qbn[:, None, :]], axis=1)
    F = np.where(k[:, None, :] == EDGE_OFF, 0.0, F)
    return F


def hdg_edge_flux(UL, UR, RH, normal, kind, g, grass_a, m_exp, h_floor, u_cap=np.inf):
    """Per-side hybridized fluxes G(r_hat).n_side + tau (r_side - r_hat).

    RH holds the trace values (ne, 4, nq). Returns (FL, FR), each in its
    own element's outward normal.
    """
    nx = normal[:, 0][:, None]
    ny = normal[:, 1][:, None]
    hh, hux, huy, hhc = RH[:, 0], RH[:, 1], RH[:, 2], RH[:, 3]
    ux, uy = _velocity(hh, hux, huy, h_floor, u_cap)
    un = ux * nx + uy * ny
    tau = np.abs(un) + np.sqrt(g * np.maximum(hh, 0.0))
    ph = 0.5 * g * hh * hh
    Gn = np.stack([hh * un, hux * un + ph * nx, huy * un + ph * ny, hhc * un], 1)

    taub = tau[:, None, :]
    FL4 = Gn + taub * (UL[:, :4] - RH)
    FR4 = -Gn + taub * (UR[:, :4] - RH)

    uxL, uyL = _velocity(UL[:, 0], UL[:, 1], UL[:, 2], h_floor, u_cap)
    uxR, uyR = _velocity(UR[:, 0], UR[:, 1], UR[:, 2], h_floor, u_cap)
    unL = uxL * nx + uyL * ny
    unR = uxR * nx + uyR * ny
    sqL = np.sqrt(np.maximum(UL[:, 0], 0.0))
    sqR = np.sqrt(np.maximum(UR[:, 0], 0.0))
    wsum = sqL + sqR
    uhatn = np.where(wsum > 0.0, (unL * sqL + unR * sqR) / np.where(wsum > 0.0, wsum, 1.0), 0.0)
    qbL = _qb_normal(uxL, uyL, nx, ny, grass_a, m_exp)
    qbR = _qb_normal(uxR, uyR, nx, ny, grass_a, m_exp)
    k = kind[:, None]
    qbn = np.where(uhatn >= 0.0, qbL, qbR)
    qbn = np.where(k == EDGE_WALL, 0.0, qbn)

    FL = np.concatenate([FL4, qbn[:, None, :]], axis=1)
    FR = np.concatenate([FR4, -qbn[:, None, :]], axis=1)
    off = k[:, None, :] == EDGE_OFF
    FL = np.where(off, 0.0, FL)
    FR = np.where(off, 0.0, FR)
    return FL, FR


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
    """Pointwise fluxes and sources at the volume quadrature points.

    U (nt, 5, nq); dH, dHC, dB (nt, 2, nq) broken gradients of h, hc, b.
    Returns Fx, Fy (nt, 5, nq) and S (nt, 5, nq); rows of inactive
    elements are zero.
    """
    h = U[:, 0]
    hux = U[:, 1]
    huy = U[:, 2]
    hc = U[:, 3]
    ux, uy = _velocity(h, hux, huy, h_floor, u_cap)
    umag = np.sqrt(ux * ux + uy * uy)
    wet = h >= h_floor
    hsafe = np.where(wet, h, h_floor)
    c = np.where(wet, hc / hsafe, 0.0)
    cc = np.minimum(np.maximum(c, 0.0), 1.0)

    p = 0.5 * g * h * h
    if grass_a == 0.0:
        qb_coef = np.zeros_like(umag)
    else:
        qb_coef = np.where(
            umag > 0.0, grass_a * np.maximum(umag, 1e-300) ** (m_exp - 1.0), 0.0
        )
    Fx = np.stack([h * ux, h * ux * ux + p, h * uy * ux, hc * ux, qb_coef * ux], 1)
    Fy = np.stack([h * uy, h * ux * uy, h * uy * uy + p, hc * uy, qb_coef * uy], 1)

    # closures
    h13 = hsafe ** (1.0 / 3.0)
    tau_b = g * n_manning * n_manning * umag * umag / h13
    s_grav = rho_s / rho_w - 1.0
    if shields_sqrt:
        theta = tau_b / np.sqrt(s_grav * g * d50)
    else:
        theta = tau_b / (s_grav * g * d50)
    if suspended:
        hfac = 1.0 / hsafe if ent_u_over_h else h
        E = np.where(
            wet & (theta > theta_c), phi_cal * (theta - theta_c) * umag * hfac, 0.0
        )
        E = np.minimum(E, exchange_cap)
        alpha_c = np.where(cc > 0.0, np.minimum(2.0, (1.0 - porosity) / np.where(cc > 0.0, cc, 1.0)), 0.0)
        Ca = cc * alpha_c
        D = np.where(wet, w_settle * Ca * (1.0 - Ca) ** 2, 0.0)
    else:
        E = np.zeros_like(h)
        D = np.zeros_like(h)
    rho = (1.0 - cc) * rho_w + cc * rho_s
    rho0 = (1.0 - porosity) * rho_s + porosity * rho_w
    ed = (E - D) / (1.0 - porosity)

    inv_h = np.where(wet, 1.0 / hsafe, 0.0)
    gcx = (dHC[:, 0] - cc * dH[:, 0]) * inv_h
    gcy = (dHC[:, 1] - cc * dH[:, 1]) * inv_h
    fric = friction_sign * g * n_manning * n_manning / h13 * umag
    fric = np.where(wet, fric, 0.0)
    sed_mom = (rho0 - rho) * (E - D) / (rho * (1.0 - porosity))
    cpress = (rho_s - rho_w) / (2.0 * rho) * g * h * h

    S = np.empty_like(U)
    S[:, 0] = ed
    S[:, 1] = -g * h * dB[:, 0] - cpress * gcx - sed_mom * ux + fric * ux
    S[:, 2] = -g * h * dB[:, 1] - cpress * gcy - sed_mom * uy + fric * uy
    S[:, 3] = E - D
    S[:, 4] = -ed

    act = active[:, None, None]
    return Fx * act, Fy * act, S * act


def _minmod(a, b):
    return np.where(a * b > 0.0, np.sign(a) * np.minimum(np.abs(a), np.abs(b)), 0.0)


def limit_fields(coeffs, means, midv, nbr, pair_j, pair_alpha, pair_ok, mh2, nu, recon):
    """TVB minmod slope limiting; element means are never touched.

    coeffs (nt, nc, nm) is copied, limited components get their linear
    modes rebuilt from limited midpoint increments and any higher modes
    zeroed. Returns (new_coeffs, fired) where fired marks elements whose
    slopes changed.
    """
    nt, nc, nm = coeffs.shape
    out = coeffs.copy()
    nbm = np.where(nbr >= 0, nbr, 0)
    has = nbr >= 0

    fired_any = np.zeros(nt, dtype=bool)
    for comp in range(nc):
        ub = means[:, comp]
        nb_mean = np.where(has, ub[nbm], ub[:, None])  # ghost: zero gradient
        diff = nb_mean - ub[:, None]  # (nt, 3)
        j1 = pair_j[:, :, 0]
        j2 = pair_j[:, :, 1]
        d1 = np.take_along_axis(diff, j1, axis=1)
        d2 = np.take_along_axis(diff, j2, axis=1)
        dbar = nu * (pair_alpha[:, :, 0] * d1 + pair_alpha[:, :, 1] * d2)
        ut = midv[:, comp, :] - ub[:, None]
        keep = np.abs(ut) <= mh2[:, None]
        lim = np.where(keep | ~pair_ok, ut, _minmod(ut, dbar))
        changed = np.any(lim != ut, axis=1)
        if not np.any(changed):
            continue
        # restore a zero sum, then rebuild the linear modes
        pos = np.sum(np.maximum(lim, 0.0), axis=1)
        neg = np.sum(np.maximum(-lim, 0.0), axis=1)
        tp = np.where(pos > 0.0, np.minimum(1.0, neg / np.where(pos > 0.0, pos, 1.0)), 0.0)
        tm = np.where(neg > 0.0, np.minimum(1.0, pos / np.where(neg > 0.0, neg, 1.0)), 0.0)
        adj = tp[:, None] * np.maximum(lim, 0.0) - tm[:, None] * np.maximum(-lim, 0.0)
        slopes = adj @ recon.T  # (nt, 2)
        sel = changed
        out[sel, comp, 1] = slopes[sel, 0]
        out[sel, comp, 2] = slopes[sel, 1]
        if nm > 3:
            out[sel, comp, 3:] = 0.0
        fired_any |= changed
    return out, fired_any


def wetdry_repair(coeffs, phi_vert, v2m, mode0_to_mean, h_wet, void_factor=0.0):
    """Positivity repair and wet flagging (order p = 1 fields).

    Negative depth vertices are clipped and the excess removed from the
    positive vertices proportionally, preserving the element mean. Elements
    with mean depth below h_wet are flagged dry: momentum and suspended
    load zeroed, depth flattened to its mean. Bed is untouched.

    Returns (coeffs, wet, neg_elem) with neg_elem the first element whose
    mean depth is negative (-1 if none; caller raises).
    """
    out = coeffs.copy()
    hv = out[:, 0, :] @ phi_vert.T  # (nt, 3)
    mean = hv.mean(axis=1)
    neg_elem = -1
    bad = mean < 0.0
    if np.any(bad):
        neg_elem = int(np.nonzero(bad)[0][0])

    clip = np.any(hv < 0.0, axis=1) & ~bad
    if np.any(clip):
        hvc = np.maximum(hv[clip], 0.0)
        ssum = hvc.sum(axis=1)
        scale = np.where(ssum > 0.0, 3.0 * mean[clip] / np.where(ssum > 0.0, ssum, 1.0), 0.0)
        hvc *= scale[:, None]
        out[clip, 0, :] = hvc @ v2m.T

    wet = mean >= h_wet
    dry = ~wet
    if np.any(dry):
        out[dry, 1, :] = 0.0
        out[dry, 2, :] = 0.0
        # suspended load of a drying element settles onto the bed so the
        # sediment pairing Sum(hc) + (1-p) Sum(b) stays exact
        out[dry, 4, 0] += void_factor * out[dry, 3, 0]
        out[dry, 3, :] = 0.0
        out[dry, 0, :] = 0.0
        out[dry, 0, 0] = np.maximum(mean[dry], 0.0) / mode0_to_mean
    return out, wet, neg_elem
