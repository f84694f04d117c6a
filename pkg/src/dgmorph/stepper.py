"""Time integration of the hyperbolic subsystem and its stage guards.

One SHSMStepper owns the mesh-dependent tables (edge gather maps, limiter
geometry) plus the mutable wet/active flags, and advances modal coefficient
arrays (nt, 5, nm). Post-stage order is fixed: slope limiting, then wet/dry
repair, then the concentration clamp (limiting may create small negatives
that the wet/dry pass must catch).

Wetting and drying: elements with mean depth below h_wet are dry (momentum
and suspended load zeroed, zero time derivative). A dry element becomes
active again when a wet neighbor's mean free surface exceeds its mean bed
level; until then the shared edge is a slip wall. Flooding edges use
dry-bed wave-speed estimates.
"""

from dataclasses import dataclass

import numpy as np

from . import backend
from .discretization import IB, IH, IHC, Discretization
from .fluxes import solve_trace, trace_values, interior_trace_residual
from .kernels_numpy import EDGE_DRY_L, EDGE_DRY_R, EDGE_NORMAL, EDGE_OFF, EDGE_WALL
from .mesh import FLOW, LAND, RADIATION
from .physics import SedimentParams


class NumericalAbort(RuntimeError):
    def __init__(self, msg, element=-1, step=-1):
        super().__init__(msg + (f" [element {element}]" if element >= 0 else "") +
                         (f" [step {step}]" if step >= 0 else ""))
        self.element = element
        self.step = step


class PositivityError(NumericalAbort):
    pass


class NanError(NumericalAbort):
    pass


@dataclass
class StepControls:
    dt: float
    scheme: str = "euler"  # euler | rk2
    flux_scheme: str = "hll_dg"  # hll_dg | np_hdg
    strang_enabled: bool = False
    breaking_threshold: float = 1.0
    limiter_M: float = 50.0
    h_wet: float = 1e-6
    limiter_enabled: bool = True
    debug_checks: bool = False

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.breaking_threshold <= 0.0:
            raise ValueError("breaking threshold must be positive")
        if self.h_wet <= 0.0:
            raise ValueError("h_wet must be positive")
        if self.scheme not in ("euler", "rk2"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.flux_scheme not in ("hll_dg", "np_hdg"):
            raise ValueError(f"unknown flux scheme {self.flux_scheme!r}")


_CS_NU = 1.5  # forward-difference weight of the Cockburn-Shu comparison


def _limiter_geometry(mesh):
    """Midpoint decomposition tables for the geometric minmod comparison.

    For each element and edge midpoint m_i, find two neighbor-centroid
    directions whose non-negative combination reproduces m_i - centroid.
    Boundary edges contribute reflected ghost centroids (their means are
    read as the element's own, i.e. zero-gradient ghosts).
    """
    nt = mesh.n_elements
    cent = mesh.centroids
    dirs = np.empty((nt, 3, 2))
    for k in range(3):
        e = mesh.elem_edges[:, k]
        nb = mesh.neighbors[:, k]
        have = nb >= 0
        dirs[have, k] = cent[nb[have]] - cent[have]
        # ghost: reflect the centroid across the boundary edge line
        miss = ~have
        if np.any(miss):
            a = mesh.vertices[mesh.edges[e[miss], 0]]
            n = mesh.edge_normal[e[miss]]
            d = cent[miss] - a
            dist = d[:, 0] * n[:, 0] + d[:, 1] * n[:, 1]
            ghost = cent[miss] - 2.0 * dist[:, None] * n
            dirs[miss, k] = ghost - cent[miss]
    mids = 0.5 * (
        mesh.vertices[mesh.triangles]
        + mesh.vertices[np.roll(mesh.triangles, -1, axis=1)]
    )  # (nt, 3, 2)

    pair_j = np.zeros((nt, 3, 2), dtype=np.int64)
    pair_alpha = np.zeros((nt, 3, 2))
    pair_ok = np.zeros((nt, 3), dtype=bool)
    pairs = ((0, 1), (0, 2), (1, 2))
    for i in range(3):
        rhs = mids[:, i, :] - cent
        done = np.zeros(nt, dtype=bool)
        for j1, j2 in pairs:
            d1 = dirs[:, j1, :]
            d2 = dirs[:, j2, :]
            det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
            ok = np.abs(det) > 1e-14
            det_safe = np.where(ok, det, 1.0)
            a1 = (rhs[:, 0] * d2[:, 1] - rhs[:, 1] * d2[:, 0]) / det_safe
            a2 = (d1[:, 0] * rhs[:, 1] - d1[:, 1] * rhs[:, 0]) / det_safe
            good = ok & (a1 >= -1e-12) & (a2 >= -1e-12) & ~done
            pair_j[good, i, 0] = j1
            pair_j[good, i, 1] = j2
            pair_alpha[good, i, 0] = np.maximum(a1[good], 0.0)
            pair_alpha[good, i, 1] = np.maximum(a2[good], 0.0)
            done |= good
        pair_ok[:, i] = done
    return pair_j, pair_alpha, pair_ok


class SHSMStepper:
    def __init__(self, disc: Discretization, params: SedimentParams,
                 controls: StepControls, flow_state=None):
        self.disc = disc
        self.params = params
        self.controls = controls
        self.flow_state = None if flow_state is None else np.asarray(flow_state, float)
        self.kernels = backend.get_kernels()
        mesh = disc.mesh

        if controls.h_wet < 1e-300:
            raise ValueError("h_wet must be positive")
        if disc.p != 1:
            # vertex-based positivity repair relies on linear elements
            raise NotImplementedError("time stepping is implemented for p = 1")

        self.wet = np.ones(mesh.n_elements, dtype=bool)
        self.active = np.ones(mesh.n_elements, dtype=bool)
        self.clamp_events = 0
        self.steps_taken = 0

        # gather maps: per element, its three edges and whether it is the
        # designated left element there
        self.elem_edges = mesh.elem_edges
        self.is_left = mesh.edge_elems[mesh.elem_edges, 0] == np.arange(
            mesh.n_elements
        )[:, None]

        pj, pa, pok = _limiter_geometry(mesh)
        self._pair_j = pj
        self._pair_alpha = pa
        self._pair_ok = pok
        self._recon = np.linalg.pinv(disc.phi_midpoint[:, 1:3])
        self._mh2 = controls.limiter_M * mesh.diameters**2

        bnd = mesh.edge_elems[:, 1] < 0
        self._land_b = bnd & (mesh.edge_tag == LAND)
        self._flow_b = bnd & (mesh.edge_tag == FLOW)
        self._rad_b = bnd & (mesh.edge_tag == RADIATION)
        if np.any(self._flow_b) and self.flow_state is None:
            raise ValueError("mesh has flow boundaries but no external state given")
        self._ik_exponent = 0.5 * (disc.p + 1)

    # -- state management -------------------------------------------------------

    def initialize(self, coeffs):
        """Set wet/active flags from an initial field (no repair errors)."""
        coeffs, wet, neg = self.kernels.wetdry_repair(
            np.ascontiguousarray(coeffs),
            self.disc.phi_vertex,
            self.disc.vertex_to_modal,
            self.disc.mode0_to_mean,
            self.controls.h_wet,
            1.0 / (1.0 - self.params.porosity),
        )
        if neg >= 0:
            raise PositivityError("negative mean depth in initial state", element=neg)
        self.wet = wet
        self._rewet(coeffs)
        return coeffs

    def _rewet(self, coeffs):
        """Active = wet plus dry elements floodable from a wet neighbor."""
        mesh = self.disc.mesh
        active = self.wet.copy()
        eL = mesh.edge_elems[:, 0]
        eR = mesh.edge_elems[:, 1]
        interior = eR >= 0
        hbar = self.disc.eval_means(coeffs[:, IH, :])
        bbar = self.disc.eval_means(coeffs[:, IB, :])
        surf = hbar + bbar
        wl = self.wet[eL]
        wr = self.wet[np.maximum(eR, 0)] & interior
        flood_r = interior & wl & ~wr & (surf[eL] > surf[np.maximum(eR, 0)])
        flood_l = interior & wr & ~wl & (surf[np.maximum(eR, 0)] > surf[eL])
        active[np.maximum(eR, 0)[flood_r]] = True
        active[eL[flood_l]] = True
        self.active = active

    # -- right-hand side ----------------------------------------------------------

    def _edge_kind_and_states(self, UL, UR):
        mesh = self.disc.mesh
        ne = mesh.n_edges
        kind = np.full(ne, EDGE_NORMAL, dtype=np.int8)
        eL = mesh.edge_elems[:, 0]
        eR = mesh.edge_elems[:, 1]
        interior = eR >= 0
        eRs = np.maximum(eR, 0)

        def mirror(U, sel):
            n = mesh.edge_normal[sel]
            out = U[sel].copy()
            mun = out[:, 1] * n[:, 0][:, None] + out[:, 2] * n[:, 1][:, None]
            out[:, 1] -= 2.0 * mun * n[:, 0][:, None]
            out[:, 2] -= 2.0 * mun * n[:, 1][:, None]
            return out

        if np.any(self._land_b):
            UR[self._land_b] = mirror(UL, self._land_b)
            kind[self._land_b] = EDGE_WALL
        if np.any(self._rad_b):
            UR[self._rad_b] = UL[self._rad_b]
        if np.any(self._flow_b):
            ghost = UL[self._flow_b].copy()
            ghost[:, :4] = self.flow_state[None, :, None]
            UR[self._flow_b] = ghost

        wl = self.wet[eL] & interior
        wr = self.wet[eRs] & interior
        al = self.active[eL]
        ar = self.active[eRs]
        dry_r = wl & ~wr & ar
        dry_l = wr & ~wl & al
        wall_l = wl & ~ar  # wet left against inactive right
        wall_r = wr & ~al
        kind[dry_r] = EDGE_DRY_R
        kind[dry_l] = EDGE_DRY_L
        if np.any(wall_l):
            UR[wall_l] = mirror(UL, wall_l)
            kind[wall_l] = EDGE_WALL
        if np.any(wall_r):
            UL[wall_r] = mirror(UR, wall_r)
            kind[wall_r] = EDGE_WALL
        kind[interior & ~wl & ~wr] = EDGE_OFF
        return kind

    def _drain_limit(self, F_mass_like, lw, hbar, dt):
        """Per-donor scale factors keeping element means non-negative.

        F_mass_like: (ne, nq) single-valued normal mass flux (left normal).
        Returns theta (ne,) in (0, 1]; theta < 1 only at near-dry donors
        whose one-step outflow would exceed a safety fraction of their
        content, so resolved regions are untouched (lake-at-rest exactly).
        """
        mesh = self.disc.mesh
        rate = (F_mass_like * lw[:, 0, :]).sum(axis=1)  # net volume rate per edge
        outgoing = np.where(self.is_left, rate[self.elem_edges], -rate[self.elem_edges])
        out_sum = np.maximum(outgoing, 0.0).sum(axis=1)
        avail = 0.9 * np.maximum(hbar, 0.0) * (0.5 * self.disc.detJ) / max(dt, 1e-300)
        theta_elem = np.ones_like(out_sum)
        needs = out_sum > avail
        np.divide(avail, out_sum, out=theta_elem, where=needs)
        theta_elem = np.clip(theta_elem, 0.0, 1.0)
        donor_left = rate >= 0.0
        eL = mesh.edge_elems[:, 0]
        eR = np.maximum(mesh.edge_elems[:, 1], 0)
        theta = np.where(donor_left, theta_elem[eL], theta_elem[eR])
        theta[(mesh.edge_elems[:, 1] < 0) & ~donor_left] = 1.0
        return theta

    def rhs(self, coeffs, dt=None):
        """Semidiscrete time derivative of the modal coefficients.

        dt feeds the drain limiter (outflow of a nearly dry element is
        scaled so one step of size dt cannot empty it); dt=None uses the
        configured step.
        """
        d = self.disc
        mesh = d.mesh
        par = self.params
        ker = self.kernels
        dt = self.controls.dt if dt is None else dt
        coeffs = np.ascontiguousarray(coeffs)
        hbar = self.disc.eval_means(coeffs[:, IH, :])

        U = np.matmul(coeffs, d.phiT)  # (nt, 5, nq)
        # broken gradients of h, hc, b in one batched product
        gsel = np.matmul(
            d.dphi.reshape(mesh.n_elements, -1, d.nmodes),
            coeffs[:, (IH, IHC, IB), :].transpose(0, 2, 1),
        ).reshape(mesh.n_elements, d.nq, 2, 3)
        dH = np.ascontiguousarray(gsel[:, :, :, 0].transpose(0, 2, 1))
        dHC = np.ascontiguousarray(gsel[:, :, :, 1].transpose(0, 2, 1))
        dB = np.ascontiguousarray(gsel[:, :, :, 2].transpose(0, 2, 1))
        Fx, Fy, S = ker.volume_terms(
            np.ascontiguousarray(U),
            np.ascontiguousarray(dH),
            np.ascontiguousarray(dHC),
            np.ascontiguousarray(dB),
            self.active,
            par.g,
            par.rho_s,
            par.rho_w,
            par.porosity,
            par.theta_c,
            par.d50,
            par.phi_cal,
            par.settling_velocity,
            par.grass_a,
            par.m_exp,
            par.n_manning,
            par.friction_sign,
            par.shields_form == "sqrt",
            par.entrainment_form == "u_over_h",
            par.max_exchange_rate,
            par.suspended,
            self.controls.h_wet,
            par.u_max,
        )
        wq = self.disc.qw[None, None, :]
        dqdt = np.matmul(Fx * wq, d.dphi[:, :, 0, :])
        dqdt += np.matmul(Fy * wq, d.dphi[:, :, 1, :])
        dqdt += np.matmul(S * wq, d.phi)

        UL, UR = d.eval_traces(coeffs)
        UL = np.ascontiguousarray(UL)
        UR = np.ascontiguousarray(UR)
        if self.controls.flux_scheme == "np_hdg":
            # solve before ghost substitution mutates the trace arrays
            trace_modal = solve_trace(
                d, coeffs, par.g, self.flow_state, self.controls.h_wet,
                traces=(UL[:, :4], UR[:, :4]), check_interior=False,
            )
        kind = self._edge_kind_and_states(UL, UR)

        lw = d.tw[None, None, :] * mesh.edge_length[:, None, None]
        if self.controls.flux_scheme == "hll_dg":
            F = ker.hll_edge_flux(
                UL, UR, mesh.edge_normal, kind, par.g, par.grass_a, par.m_exp,
                self.controls.h_wet, par.u_max,
            )
            theta = self._drain_limit(F[:, 0, :], lw, hbar, dt)
            if np.any(theta < 1.0):
                # the limited parcel keeps its composition: all rows scale
                # together (pressure is negligible at the thin donors where
                # theta engages)
                F = F * theta[:, None, None]
            Fw = F * lw
            liftL = np.matmul(Fw, d.traceL)
            liftR = -np.matmul(Fw, d.traceR)
        else:
            RH = np.ascontiguousarray(trace_values(d, trace_modal))
            # slip-wall traces at wet/dry wall interfaces use the mirror
            # ghosts already substituted into UL/UR by the edge classifier
            wall = kind == EDGE_WALL
            if np.any(wall):
                avg = 0.5 * (UL[wall][:, :4] + UR[wall][:, :4])
                RH[wall] = avg
            FL, FR = ker.hdg_edge_flux(
                UL, UR, RH, mesh.edge_normal, kind, par.g, par.grass_a, par.m_exp,
                self.controls.h_wet, par.u_max,
            )
            theta = self._drain_limit(0.5 * (FL[:, 0, :] - FR[:, 0, :]), lw, hbar, dt)
            if np.any(theta < 1.0):
                FL = FL * theta[:, None, None]
                FR = FR * theta[:, None, None]
            if self.controls.debug_checks:
                res = interior_trace_residual(d, coeffs, trace_modal, par.g,
                                              self.controls.h_wet)
                live = (kind != EDGE_OFF) & (kind != EDGE_WALL)
                worst = float((res * live).max(initial=0.0))
                assert worst < 1e-10, f"trace residual {worst:.3e}"
            liftL = np.einsum("ecq,eqm->ecm", FL * lw, d.traceL)
            liftR = np.einsum("ecq,eqm->ecm", FR * lw, d.traceR)

        side = self.is_left[:, :, None, None]
        gathered = np.where(
            side, liftL[self.elem_edges], liftR[self.elem_edges]
        ).sum(axis=1)
        # the volume/source detJ cancels against the mass matrix; only the
        # edge lift carries the division
        dqdt -= gathered / self.detJ_col
        dqdt[~self.active] = 0.0

        if not np.all(np.isfinite(dqdt)):
            elem = int(np.nonzero(~np.isfinite(dqdt).all(axis=(1, 2)))[0][0])
            term = "edge flux"
            if not np.all(np.isfinite(S[elem])):
                term = "source"
            elif not np.all(np.isfinite(Fx[elem])) or not np.all(np.isfinite(Fy[elem])):
                term = "volume flux"
            raise NanError(f"non-finite {term}", element=elem, step=self.steps_taken)
        return dqdt

    @property
    def detJ_col(self):
        return self.disc.detJ[:, None, None]

    # -- stage guards ----------------------------------------------------------------

    def apply_limiter(self, coeffs):
        if not self.controls.limiter_enabled:
            return coeffs
        d = self.disc
        means = self.disc.eval_means(coeffs)  # (nt, 5)
        midv = coeffs @ d.phi_midpoint.T  # (nt, 5, 3)
        out, _ = self.kernels.limit_fields(
            np.ascontiguousarray(coeffs),
            np.ascontiguousarray(means),
            np.ascontiguousarray(midv),
            self.disc.mesh.neighbors,
            self._pair_j,
            self._pair_alpha,
            self._pair_ok,
            self._mh2,
            _CS_NU,
            self._recon,
        )
        return out

    def wet_dry_correction(self, coeffs):
        coeffs, wet, neg = self.kernels.wetdry_repair(
            np.ascontiguousarray(coeffs),
            self.disc.phi_vertex,
            self.disc.vertex_to_modal,
            self.disc.mode0_to_mean,
            self.controls.h_wet,
            1.0 / (1.0 - self.params.porosity),
        )
        if neg >= 0:
            raise PositivityError(
                "stage produced negative element-mean depth",
                element=neg, step=self.steps_taken,
            )
        self.wet = wet
        return coeffs

    def clamp_concentration(self, coeffs):
        """Clamp mean concentration into [0, 1 - p].

        The clamped suspended mass is exchanged with the bed
        (delta(hc) = -x, delta(b) = +x/(1-p)), which keeps the sediment
        invariant Sum(hc) + (1-p) Sum(b) exact. The water+bed volume
        invariant moves by x/(1-p) per event; events are counted and the
        audit reports the resulting drift.
        """
        par = self.params
        if not par.suspended:
            return coeffs
        root2 = self.disc.mode0_to_mean
        hbar = coeffs[:, IH, 0] * root2
        hcbar = coeffs[:, IHC, 0] * root2
        cmax = 1.0 - par.porosity
        over = self.wet & (hcbar > cmax * hbar)
        under = self.wet & (hcbar < 0.0)
        n_over = int(np.count_nonzero(over))
        n_under = int(np.count_nonzero(under))
        if n_over + n_under == 0:
            return coeffs
        coeffs = coeffs.copy()
        void = 1.0 / (1.0 - par.porosity)
        if n_over:
            excess = hcbar[over] - cmax * hbar[over]
            coeffs[over, IHC, 0] -= excess / root2
            coeffs[over, IHC, 1:] = 0.0
            coeffs[over, IB, 0] += excess * void / root2
        if n_under:
            deficit = -hcbar[under]
            coeffs[under, IHC, 0] += deficit / root2
            coeffs[under, IHC, 1:] = 0.0
            coeffs[under, IB, 0] -= deficit * void / root2
        self.clamp_events += n_over + n_under
        return coeffs

    def post_stage(self, coeffs):
        coeffs = self.apply_limiter(coeffs)
        coeffs = self.wet_dry_correction(coeffs)
        coeffs = self.clamp_concentration(coeffs)
        self._rewet(coeffs)
        return coeffs

    # -- time stepping ------------------------------------------------------------------

    def euler_step(self, coeffs, dt=None):
        dt = self.controls.dt if dt is None else dt
        out = self.post_stage(coeffs + dt * self.rhs(coeffs, dt))
        self.steps_taken += 1
        return out

    def rk2_step(self, coeffs, dt=None):
        dt = self.controls.dt if dt is None else dt
        c1 = self.post_stage(coeffs + dt * self.rhs(coeffs, dt))
        out = self.post_stage(0.5 * coeffs + 0.5 * (c1 + dt * self.rhs(c1, dt)))
        self.steps_taken += 1
        return out

    def s1_step(self, coeffs, dt=None):
        if self.controls.scheme == "rk2":
            return self.rk2_step(coeffs, dt)
        return self.euler_step(coeffs, dt)

    def strang_step(self, coeffs, dt=None, dispersive=None):
        """S1(dt/2) S2(dt) S1(dt/2); S2 drops out when disabled or masked."""
        dt = self.controls.dt if dt is None else dt
        mask = None
        if self.controls.strang_enabled and dispersive is not None:
            _, mask = self.breaking_indicator(coeffs)
        coeffs = self.s1_step(coeffs, 0.5 * dt)
        if self.controls.strang_enabled and dispersive is not None:
            coeffs = dispersive.step(coeffs, dt, breaking_mask=mask, stepper=self)
        coeffs = self.s1_step(coeffs, 0.5 * dt)
        return coeffs

    # -- diagnostics ---------------------------------------------------------------------

    def breaking_indicator(self, coeffs):
        """Inflow-face depth-jump indicator and the S2 shutoff mask."""
        d = self.disc
        mesh = d.mesh
        UL, UR = d.eval_traces(coeffs[:, :3, :])  # h, hu_x, hu_y traces
        hL, hR = UL[:, 0], UR[:, 0]
        n = mesh.edge_normal
        tw = d.tw[None, :]
        hfloor = self.controls.h_wet

        def un_of(U):
            h = U[:, 0]
            hs = np.where(h >= hfloor, h, hfloor)
            sc = np.where(h > 0.0, np.where(h >= hfloor, 1.0 / hs, h / (hfloor * hfloor)), 0.0)
            return (U[:, 1] * n[:, 0][:, None] + U[:, 2] * n[:, 1][:, None]) * sc

        unL = (un_of(UL) * tw).sum(axis=1)
        unR = (un_of(UR) * tw).sum(axis=1)
        jump = ((hL - hR) * tw).sum(axis=1) * mesh.edge_length

        interior = mesh.edge_elems[:, 1] >= 0
        nt = mesh.n_elements
        num = np.zeros(nt)
        lin = np.zeros(nt)
        eL = mesh.edge_elems[interior, 0]
        eR = mesh.edge_elems[interior, 1]
        jmp = np.abs(jump[interior])
        ln = mesh.edge_length[interior]
        inflow_L = unL[interior] < 0.0
        inflow_R = -unR[interior] < 0.0
        np.add.at(num, eL[inflow_L], jmp[inflow_L])
        np.add.at(lin, eL[inflow_L], ln[inflow_L])
        np.add.at(num, eR[inflow_R], jmp[inflow_R])
        np.add.at(lin, eR[inflow_R], ln[inflow_R])

        hmax = np.abs(coeffs[:, IH, :] @ d.phi.T).max(axis=1)
        denom = mesh.diameters**self._ik_exponent * lin * hmax
        ik = np.where((lin > 0.0) & (hmax > 0.0) & self.wet, num / np.where(denom > 0.0, denom, 1.0), 0.0)
        return ik, ik > self.controls.breaking_threshold

    def cfl_advisory(self, coeffs):
        """Advisory dt bound C * min(diam / lambda_max) over wet elements."""
        d = self.disc
        U = np.einsum("ecm,qm->ecq", coeffs[:, :3, :], d.phi)
        h = U[:, 0]
        hfloor = self.controls.h_wet
        hs = np.where(h >= hfloor, h, hfloor)
        sc = np.where(h > 0.0, np.where(h >= hfloor, 1.0 / hs, h / (hfloor * hfloor)), 0.0)
        umag = np.sqrt(U[:, 1] ** 2 + U[:, 2] ** 2) * sc
        lam = (umag + np.sqrt(self.params.g * np.maximum(h, 0.0))).max(axis=1)
        wet = self.wet & (lam > 0.0)
        if not np.any(wet):
            return np.inf
        C = 1.0 / (2.0 * d.p + 1.0)
        return float(C * np.min(d.mesh.diameters[wet] / lam[wet]))
