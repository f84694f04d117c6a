"""Interface numerical fluxes and the hybridized edge-trace solve.

Wave-speed naming note: the truncated speed called "plus" upstream of this
code base is the MINIMUM (left-going) speed and "minus" the maximum; here
they are simply `s_min` and `s_max` to avoid sign confusion.

The scalar functions below are the reference/oracle-facing API on single
states; the batched twins used by the stepper live in the kernel backends.
"""

import numpy as np

from .discretization import Discretization
from .mesh import FLOW, LAND, RADIATION
from .physics import ConservedState, bedload_qb, flux_G


class TraceSolveError(RuntimeError):
    def __init__(self, edge_id, residual):
        super().__init__(
            f"edge trace solve did not converge on edge {edge_id} "
            f"(residual {residual:.3e})"
        )
        self.edge_id = edge_id


def roe_velocity(left: ConservedState, right: ConservedState, h_wet=1e-6):
    """Depth-weighted Roe average of the two side velocities."""
    left.require_wet(h_wet)
    right.require_wet(h_wet)
    sl = np.sqrt(left.h)
    sr = np.sqrt(right.h)
    return (left.u * sl + right.u * sr) / (sl + sr)


def bedload_flux_star(left, right, normal, params):
    """Upwinded normal bed-load flux; ties (u_hat.n = 0) take the left value."""
    normal = np.asarray(normal, dtype=float)
    un = float(roe_velocity(left, right, params.h_wet) @ normal)
    state = left if un >= 0.0 else right
    return float(bedload_qb(state, params) @ normal)


def hll_flux(left: ConservedState, right: ConservedState, normal, g=9.81, h_wet=1e-6):
    """HLL flux of the (h, hu, hc) subsystem with truncated speeds."""
    left.require_wet(h_wet)
    right.require_wet(h_wet)
    normal = np.asarray(normal, dtype=float)
    unl = float(left.hu @ normal) / left.h
    unr = float(right.hu @ normal) / right.h
    al = np.sqrt(g * left.h)
    ar = np.sqrt(g * right.h)
    s_min = min(unl - al, unr - ar)
    s_max = max(unl + al, unr + ar)
    assert s_max > s_min, "coincident wave speeds on a wet edge"
    GLn = flux_G(left, g, h_wet) @ normal
    GRn = flux_G(right, g, h_wet) @ normal
    if s_min > 0.0:
        return GLn
    if s_max < 0.0:
        return GRn
    rl = np.array([left.h, *left.hu, left.hc])
    rr = np.array([right.h, *right.hu, right.hc])
    return (s_max * GLn - s_min * GRn + s_min * s_max * (rr - rl)) / (s_max - s_min)


def hdg_flux(element: ConservedState, trace: ConservedState, normal, g=9.81, h_wet=1e-6):
    """G(r_hat).n + tau (r - r_hat), tau the spectral radius at the trace."""
    trace.require_wet(h_wet)
    normal = np.asarray(normal, dtype=float)
    un = float(trace.hu @ normal) / trace.h
    tau = abs(un) + np.sqrt(g * trace.h)
    Gn = flux_G(trace, g, h_wet) @ normal
    r = np.array([element.h, *element.hu, element.hc])
    rh = np.array([trace.h, *trace.hu, trace.hc])
    return Gn + tau * (r - rh)


# -- eigenstructure of the normal Jacobian ------------------------------------------


def _eigen_apply(rhat, normal, vec, g, func):
    """Apply func(A) to vec where A is the normal Jacobian at rhat.

    rhat, vec: (..., 4) arrays; normal: (..., 2). Uses the analytic
    eigen-decomposition of the shallow-water-plus-passive-tracer system.
    """
    rhat = np.asarray(rhat, dtype=float)
    vec = np.asarray(vec, dtype=float)
    normal = np.asarray(normal, dtype=float)
    h = rhat[..., 0]
    ux = rhat[..., 1] / h
    uy = rhat[..., 2] / h
    c = rhat[..., 3] / h
    nx, ny = normal[..., 0], normal[..., 1]
    un = ux * nx + uy * ny
    ut = -ux * ny + uy * nx
    a = np.sqrt(g * h)

    dh = vec[..., 0]
    dmn = vec[..., 1] * nx + vec[..., 2] * ny
    dmt = -vec[..., 1] * ny + vec[..., 2] * nx
    ds = vec[..., 3]

    z = (dmn - un * dh) / a
    b1 = 0.5 * (dh - z)
    b2 = 0.5 * (dh + z)
    b3 = dmt - dh * ut
    b4 = ds - c * dh

    l1 = func(un - a)
    l2 = func(un + a)
    l3 = func(un)

    out = np.empty_like(vec)
    out[..., 0] = l1 * b1 + l2 * b2
    mx = l1 * b1 * (ux - a * nx) + l2 * b2 * (ux + a * nx) + l3 * b3 * (-ny)
    my = l1 * b1 * (uy - a * ny) + l2 * b2 * (uy + a * ny) + l3 * b3 * nx
    out[..., 1] = mx
    out[..., 2] = my
    out[..., 3] = l1 * b1 * c + l2 * b2 * c + l3 * b4
    return out


def normal_jacobian_apply(rhat, normal, vec, g=9.81):
    """A @ vec with A = d(G.n)/dr evaluated at rhat."""
    return _eigen_apply(rhat, normal, vec, g, lambda lam: lam)


def abs_jacobian_apply(rhat, normal, vec, g=9.81):
    """|A| @ vec via the analytic eigen-decomposition."""
    return _eigen_apply(rhat, normal, vec, g, np.abs)


def normal_jacobian(rhat, normal, g=9.81):
    """Dense 4x4 normal Jacobian (testing convenience)."""
    cols = [normal_jacobian_apply(rhat, normal, e, g) for e in np.eye(4)]
    return np.column_stack(cols)


def abs_jacobian(rhat, normal, g=9.81):
    cols = [abs_jacobian_apply(rhat, normal, e, g) for e in np.eye(4)]
    return np.column_stack(cols)


def slip_state(r, normal):
    """State with the normal momentum component removed; r is (..., 4)."""
    r = np.asarray(r, dtype=float)
    normal = np.asarray(normal, dtype=float)
    out = r.copy()
    mn = r[..., 1] * normal[..., 0] + r[..., 2] * normal[..., 1]
    out[..., 1] -= mn * normal[..., 0]
    out[..., 2] -= mn * normal[..., 1]
    return out


def boundary_operator(kind, element_state, trace, normal, external_state=None, g=9.81):
    """Weak boundary residual B_h; zero when the trace satisfies the condition.

    kind 'land': B = r_hat - r_slip(r).
    kind 'flow': B = A+ r - |A| r_hat - A- r_inf, A evaluated at the trace.
    """
    r = np.asarray(element_state, dtype=float)
    rh = np.asarray(trace, dtype=float)
    normal = np.asarray(normal, dtype=float)
    if kind == "land":
        return rh - slip_state(r, normal)
    if kind == "flow":
        if external_state is None:
            raise ValueError("flow boundary needs an external state")
        rinf = np.asarray(external_state, dtype=float)
        Ar = normal_jacobian_apply(rh, normal, r, g)
        absAr = abs_jacobian_apply(rh, normal, r, g)
        absArh = abs_jacobian_apply(rh, normal, rh, g)
        Arinf = normal_jacobian_apply(rh, normal, rinf, g)
        absArinf = abs_jacobian_apply(rh, normal, rinf, g)
        Aplus_r = 0.5 * (Ar + absAr)
        Aminus_rinf = 0.5 * (Arinf - absArinf)
        return Aplus_r - absArh - Aminus_rinf
    raise ValueError(f"unknown boundary kind {kind!r}")


# -- edge trace solve -----------------------------------------------------------------


def _project_edge(disc: Discretization, vals):
    """L2 projection of edge-point values onto the edge basis.

    vals (ne, 4, nqe) -> modal (ne, 4, p+1); the edge length cancels
    against the edge mass matrix.
    """
    return np.einsum("ecq,q,qa->eca", vals, disc.tw, disc.psi)


def trace_values(disc: Discretization, modal):
    return np.einsum("eca,qa->ecq", modal, disc.psi)


def _flow_residual(disc, edges, modal, UL, rinf, g):
    """Edge-integrated weak residual of the flow boundary operator."""
    rh = np.einsum("eca,qa->ecq", modal, disc.psi)  # (ne, 4, nq)
    n = disc.mesh.edge_normal[edges]  # (ne, 2)
    rhp = np.moveaxis(rh, 1, 2)  # (ne, nq, 4)
    ulp = np.moveaxis(UL, 1, 2)
    nb = np.broadcast_to(n[:, None, :], rhp.shape[:-1] + (2,))
    rinfb = np.broadcast_to(rinf[:, None, :], rhp.shape)
    B = (
        0.5
        * (
            _eigen_apply(rhp, nb, ulp, g, lambda lam: lam)
            + _eigen_apply(rhp, nb, ulp, g, np.abs)
        )
        - _eigen_apply(rhp, nb, rhp, g, np.abs)
        - 0.5
        * (
            _eigen_apply(rhp, nb, rinfb, g, lambda lam: lam)
            - _eigen_apply(rhp, nb, rinfb, g, np.abs)
        )
    )  # (ne, nq, 4)
    L = disc.mesh.edge_length[edges]
    R = np.einsum("eqc,q,qa->eca", B, disc.tw, disc.psi) * L[:, None, None]
    return R


def solve_trace(
    disc: Discretization,
    coeffs,
    g=9.81,
    flow_state=None,
    h_floor=1e-6,
    tol=1e-12,
    max_iter=50,
    check_interior=False,
    traces=None,
):
    """Single-valued edge traces of the (h, hu, hc) subsystem.

    Interior edges: the flux-conservation condition with tau evaluated at
    the trace is solved exactly by the L2 projection of the side average
    (the G(r_hat).n parts cancel pointwise between the two sides).
    Land/radiation edges project the slip/interior state; flow edges run a
    damped finite-difference Newton on the weak boundary residual.

    Returns modal traces (ne, 4, p+1).
    """
    mesh = disc.mesh
    if traces is not None:
        UL, UR = traces
    else:
        UL, UR = disc.eval_traces(coeffs[:, :4, :])
    interior = mesh.edge_elems[:, 1] >= 0
    vals = np.where(interior[:, None, None], 0.5 * (UL + UR), UL)
    modal = _project_edge(disc, vals)

    nrm = mesh.edge_normal
    bnd = ~interior
    land = bnd & (mesh.edge_tag == LAND)
    if np.any(land):
        r = np.moveaxis(UL[land], 1, 2)  # (ne, nq, 4)
        nb = np.broadcast_to(nrm[land][:, None, :], r.shape[:-1] + (2,))
        slip = np.moveaxis(slip_state(r, nb), 2, 1)
        modal[land] = _project_edge(disc, slip)
    rad = bnd & (mesh.edge_tag == RADIATION)
    if np.any(rad):
        modal[rad] = _project_edge(disc, UL[rad])

    flow = bnd & (mesh.edge_tag == FLOW)
    if np.any(flow):
        if flow_state is None:
            raise ValueError("mesh has flow boundary edges but no external state")
        edges = np.nonzero(flow)[0]
        ULf = UL[flow]
        rinf = np.broadcast_to(np.asarray(flow_state, dtype=float), (edges.size, 4)).copy()
        rinf_vals = np.broadcast_to(rinf[:, :, None], ULf.shape)
        x = _project_edge(disc, 0.5 * (ULf + rinf_vals))
        nmod = 4 * disc.psi.shape[1]
        hmax = np.maximum(ULf[:, 0].max(axis=1), h_floor)
        lam = np.abs(ULf[:, 1:3]).max(axis=(1, 2)) / hmax + np.sqrt(g * hmax)
        scale = disc.mesh.edge_length[edges] * lam * (
            1.0 + np.abs(ULf).max(axis=(1, 2)) + np.abs(rinf).max(axis=1)
        )
        R = _flow_residual(disc, edges, x, ULf, rinf, g)
        for it in range(max_iter):
            rn = np.abs(R).reshape(edges.size, -1).max(axis=1)
            todo = rn > tol * scale
            if not np.any(todo):
                break
            J = np.empty((edges.size, nmod, nmod))
            xf = x.reshape(edges.size, nmod)
            eps = 1e-7 * (1.0 + np.abs(xf).max(axis=1))
            for k in range(nmod):
                xp = xf.copy()
                xp[:, k] += eps
                Rp = _flow_residual(
                    disc, edges, xp.reshape(x.shape), ULf, rinf, g
                )
                J[:, :, k] = (Rp - R).reshape(edges.size, nmod) / eps[:, None]
            try:
                dx = np.linalg.solve(J, -R.reshape(edges.size, nmod, 1))[:, :, 0]
            except np.linalg.LinAlgError:
                dx = np.stack(
                    [
                        np.linalg.lstsq(J[i], -R.reshape(edges.size, nmod)[i], rcond=None)[0]
                        for i in range(edges.size)
                    ]
                )
            alpha = np.ones(edges.size)
            for _ in range(6):
                xn = (xf + alpha[:, None] * dx).reshape(x.shape)
                Rn = _flow_residual(disc, edges, xn, ULf, rinf, g)
                rnn = np.abs(Rn).reshape(edges.size, -1).max(axis=1)
                worse = (rnn > rn) & todo
                if not np.any(worse):
                    break
                alpha[worse] *= 0.5
            x = (xf + alpha[:, None] * dx).reshape(x.shape)
            R = _flow_residual(disc, edges, x, ULf, rinf, g)
        rn = np.abs(R).reshape(edges.size, -1).max(axis=1)
        bad = rn > tol * scale * 100.0
        if np.any(bad):
            i = int(np.nonzero(bad)[0][0])
            raise TraceSolveError(int(edges[i]), float(rn[i]))
        modal[flow] = x

    if check_interior:
        residual_norm = interior_trace_residual(disc, coeffs, modal, g, h_floor)
        worst = float(residual_norm.max(initial=0.0))
        if worst > 1e-10:
            e = int(np.argmax(residual_norm))
            raise TraceSolveError(e, worst)
    return modal


def interior_trace_residual(disc: Discretization, coeffs, modal, g=9.81, h_floor=1e-6):
    """Edge-integrated L2 norm of G*(r+, rhat) + G*(r-, rhat) per interior edge.

    Normalized by edge length and the local flux scale so the solver
    contract (< 1e-10) is resolution independent.
    """
    mesh = disc.mesh
    UL, UR = disc.eval_traces(coeffs[:, :4, :])
    rh = trace_values(disc, modal)
    n = mesh.edge_normal
    h = np.maximum(rh[:, 0], h_floor)
    un = (rh[:, 1] * n[:, 0][:, None] + rh[:, 2] * n[:, 1][:, None]) / h
    tau = np.abs(un) + np.sqrt(g * np.maximum(rh[:, 0], 0.0))
    # G(rhat).n cancels between the sides; the two-sided sum reduces to
    # tau (r+ + r- - 2 rhat)
    misfit = tau[:, None, :] * (UL + UR - 2.0 * rh)
    w = disc.tw[None, None, :]
    norm2 = np.einsum("ecq,ecq->e", misfit * w, misfit) * mesh.edge_length
    scale = np.maximum(
        np.einsum("ecq,ecq->e", UL * w, UL) * mesh.edge_length, 1e-30
    )
    out = np.sqrt(norm2 / scale)
    out[mesh.edge_elems[:, 1] < 0] = 0.0
    return out
