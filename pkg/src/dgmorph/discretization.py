"""Element-wise DG machinery: geometry factors, projections, traces,
weak derivative recovery.

Fields are plain numpy coefficient arrays. A scalar field has shape
(n_elements, nmodes); the conserved state is (n_elements, 5, nmodes) with
component order (h, hu_x, hu_y, hc, b). The basis is orthonormal on the
reference triangle, so the element mass matrix is detJ * I and projection
never requires a linear solve.
"""

import numpy as np

from .basis import EdgeBasis, TriangleBasis, edge_quadrature, triangle_quadrature
from .mesh import Mesh, ref_edge_points

# component indices of the conserved vector
IH, IHUX, IHUY, IHC, IB = 0, 1, 2, 3, 4


class Discretization:
    """Precomputed tables tying a Mesh to a modal TriangleBasis.

    Immutable after construction; safe to share between workers.
    """

    def __init__(self, mesh: Mesh, p: int = 1, vol_degree=None, n_edge_points=None):
        self.mesh = mesh
        self.p = p
        self.basis = TriangleBasis(p)
        self.edge_basis = EdgeBasis(p)
        self.nmodes = self.basis.nmodes

        # volume quadrature, exact for degree 2p + 2 by default
        deg = vol_degree if vol_degree is not None else 2 * p + 2
        self.qp, self.qw = triangle_quadrature(deg)
        self.nq = self.qp.shape[0]
        self.phi = self.basis.eval(self.qp)  # (nq, nm)
        self.phiT = np.ascontiguousarray(self.phi.T)
        dphi_ref = self.basis.grad(self.qp)  # (nq, 2, nm)

        tris = mesh.triangles
        verts = mesh.vertices
        v0 = verts[tris[:, 0]]
        J = np.empty((mesh.n_elements, 2, 2))
        J[:, :, 0] = verts[tris[:, 1]] - v0
        J[:, :, 1] = verts[tris[:, 2]] - v0
        self.jac = J
        self.detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        invJ = np.empty_like(J)
        invJ[:, 0, 0] = J[:, 1, 1]
        invJ[:, 0, 1] = -J[:, 0, 1]
        invJ[:, 1, 0] = -J[:, 1, 0]
        invJ[:, 1, 1] = J[:, 0, 0]
        invJ /= self.detJ[:, None, None]
        self.invJ = invJ
        # physical gradients: grad_x phi = J^{-T} grad_ref phi
        self.dphi = np.einsum("eij,qim->eqjm", invJ, dphi_ref)  # (nt, nq, 2, nm)
        self.qpts_phys = v0[:, None, :] + np.einsum("eij,qj->eqi", J, self.qp)

        # edge quadrature and trace tables; the right element sees the edge
        # parameter reversed (conforming CCW meshes traverse shared edges in
        # opposite directions)
        nqe = n_edge_points if n_edge_points is not None else p + 2
        self.te, self.tw = edge_quadrature(nqe)
        self.nqe = nqe
        self.psi = self.edge_basis.eval(self.te)  # (nqe, p+1)
        ne = mesh.n_edges
        self.traceL = np.empty((ne, nqe, self.nmodes))
        self.traceR = np.zeros((ne, nqe, self.nmodes))
        refL = {k: self.basis.eval(ref_edge_points(k, self.te)) for k in range(3)}
        refR = {k: self.basis.eval(ref_edge_points(k, 1.0 - self.te)) for k in range(3)}
        for e in range(ne):
            self.traceL[e] = refL[int(mesh.edge_local[e, 0])]
            if mesh.edge_elems[e, 1] >= 0:
                self.traceR[e] = refR[int(mesh.edge_local[e, 1])]
        self._traceL_T = np.ascontiguousarray(self.traceL.transpose(0, 2, 1))
        self._traceR_T = np.ascontiguousarray(self.traceR.transpose(0, 2, 1))
        a = verts[mesh.edges[:, 0]]
        b = verts[mesh.edges[:, 1]]
        self.edge_pts_phys = a[:, None, :] + self.te[None, :, None] * (b - a)[:, None, :]

        # per-element edge gather maps: the three edges of each element and
        # whether the element is the designated left side there
        self.elem_edges = mesh.elem_edges
        self.elem_is_left = (
            mesh.edge_elems[mesh.elem_edges, 0] == np.arange(mesh.n_elements)[:, None]
        )

        # point-evaluation tables shared by all elements
        self.phi_vertex = self.basis.eval(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]))
        self.phi_midpoint = self.basis.eval(
            np.array([[0.5, 0.0], [0.5, 0.5], [0.0, 0.5]])
        )
        self.phi_centroid = self.basis.eval(np.array([[1 / 3, 1 / 3]]))[0]
        if p == 1:
            self.vertex_to_modal = np.linalg.inv(self.phi_vertex)
        else:
            self.vertex_to_modal = None
        # mean value of a field equals mode0_to_mean * mode-0 coefficient
        self.mode0_to_mean = self.basis.eval(np.array([[0.0, 0.0]]))[0, 0]

    # -- projection and evaluation ---------------------------------------------

    def project_function(self, f):
        """L2 projection of f(x, y) into the modal space; (nt, nm)."""
        vals = np.asarray(
            f(self.qpts_phys[:, :, 0], self.qpts_phys[:, :, 1]), dtype=float
        )
        vals = np.broadcast_to(vals, (self.mesh.n_elements, self.nq))
        if not np.all(np.isfinite(vals)):
            raise ValueError("projection input is not finite at quadrature points")
        return self.project_values(vals)

    def project_values(self, vals):
        """Projection from values at the volume quadrature points.

        The detJ in the load vector cancels against the element mass
        matrix, so coefficients are plain weighted sums.
        """
        return np.einsum("eq,qm->em", vals * self.qw[None, :], self.phi)

    def eval_volume(self, coeffs):
        """Field values at the volume quadrature points; (nt, nq)."""
        return coeffs @ self.phi.T

    def grad_volume(self, coeffs):
        """Broken (element-local) gradient at volume points; (nt, 2, nq)."""
        return np.einsum("em,eqdm->edq", coeffs, self.dphi)

    def eval_vertices(self, coeffs):
        return coeffs @ self.phi_vertex.T

    def eval_means(self, coeffs):
        return coeffs[..., 0] * self.mode0_to_mean

    def eval_traces(self, coeffs):
        """Left/right traces at edge quadrature points.

        Returns (UL, UR), each (ne, ..., nqe). Boundary-edge rows of UR are
        zero; the caller substitutes ghost states there.
        """
        eL = self.mesh.edge_elems[:, 0]
        eR = self.mesh.edge_elems[:, 1]
        if coeffs.ndim == 3:  # batched matmul beats einsum on the hot path
            UL = np.matmul(coeffs[eL], self._traceL_T)
            UR = np.matmul(coeffs[np.maximum(eR, 0)], self._traceR_T)
        else:
            UL = np.einsum("e...m,eqm->e...q", coeffs[eL], self.traceL)
            UR = np.einsum("e...m,eqm->e...q", coeffs[np.maximum(eR, 0)], self.traceR)
        UR[eR < 0] = 0.0
        return UL, UR

    def eval_at(self, coeffs, elems, ref_pts):
        """Evaluate at caller-supplied reference points inside given elements."""
        phi = self.basis.eval(ref_pts)
        return np.einsum("p...m,pm->p...", coeffs[elems], phi)

    def elemental_operators(self, elem):
        """Mass, derivative, and edge-lift matrices of one element.

        Returns (mass, (Dx, Dy), lifts). mass is detJ * I by orthonormality;
        Dx/Dy map modal coefficients to the modal coefficients of the
        broken x/y derivatives; lifts[k] integrates an edge-quadrature trace
        against the volume basis for local edge k (pre-divided by the mass,
        i.e. one lift step of the explicit update).
        """
        e = int(elem)
        if not 0 <= e < self.mesh.n_elements:
            raise IndexError(f"element id {e} out of range")
        mass = self.detJ[e] * np.eye(self.nmodes)
        D = np.einsum("qdm,q,qa->dam", self.dphi[e], self.qw, self.phi)
        mesh = self.mesh
        lifts = []
        for k in range(3):
            ed = mesh.elem_edges[e, k]
            tr = self.traceL[ed] if mesh.edge_elems[ed, 0] == e else self.traceR[ed]
            w = self.tw * mesh.edge_length[ed]
            lifts.append(np.einsum("q,qa,qm->am", w, tr, tr) / self.detJ[e])
        return mass, (D[0], D[1]), lifts

    # -- integrals ---------------------------------------------------------------

    def element_integral(self, coeffs):
        """Integral over each element of a scalar field; (nt,)."""
        return self.detJ * coeffs[..., 0] * (0.5 * self.mode0_to_mean)

    def integral(self, coeffs):
        """Domain integral of a scalar modal field (fixed-order sum)."""
        return float(np.sum(self.element_integral(coeffs)))

    # -- edge accumulation helper --------------------------------------------------

    def accumulate_edge_lift(self, lift_left, lift_right):
        """Sum per-edge modal lifts into per-element arrays by gathering.

        lift_left/right: (ne, ..., nm) contributions as seen by the left /
        right element (signs already folded in). Returns (nt, ..., nm).
        Gather-based (three edges per element), so the reduction order is
        fixed and there is no scatter contention.
        """
        idx = self.elem_edges
        sel = self.elem_is_left[(...,) + (None,) * (lift_left.ndim - 1)]
        return np.where(sel, lift_left[idx], lift_right[idx]).sum(axis=1)

    # -- weak derivative recovery (centered traces) --------------------------------

    def edge_average(self, coeffs):
        """Centered single-valued trace; interior value on boundary edges."""
        UL, UR = self.eval_traces(coeffs)
        bnd = self.mesh.edge_elems[:, 1] < 0
        avg = 0.5 * (UL + UR)
        avg[bnd] = UL[bnd]
        return avg

    def weak_gradient(self, coeffs):
        """DG gradient with centered numerical fluxes; (nt, 2, nm)."""
        mesh = self.mesh
        vals = self.eval_volume(coeffs) * self.qw[None, :]
        vol = -np.einsum("eq,eqdm->edm", vals, self.dphi)
        avg = self.edge_average(coeffs) * (self.tw[None, :] * mesh.edge_length[:, None])
        liftL = np.einsum("eq,ed,eqm->edm", avg, mesh.edge_normal, self.traceL)
        liftR = -np.einsum("eq,ed,eqm->edm", avg, mesh.edge_normal, self.traceR)
        acc = self.accumulate_edge_lift(liftL, liftR)
        return vol + acc / self.detJ[:, None, None]

    def weak_divergence(self, vec_coeffs):
        """DG divergence of a vector field (nt, 2, nm) -> (nt, nm)."""
        gx = self.weak_gradient(vec_coeffs[:, 0, :])
        gy = self.weak_gradient(vec_coeffs[:, 1, :])
        return gx[:, 0, :] + gy[:, 1, :]

    @property
    def edge_length(self):
        return self.mesh.edge_length

    # -- point location --------------------------------------------------------------

    def locate(self, points, tol=1e-12):
        """Containing element of each physical point (lowest id wins ties).

        Returns (elem_ids, ref_coords); elem id -1 when outside the mesh.
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        npts = points.shape[0]
        elems = np.full(npts, -1, dtype=np.int64)
        refs = np.zeros((npts, 2))
        mesh = self.mesh
        v0 = mesh.vertices[mesh.triangles[:, 0]]
        for i in range(npts):
            d = points[i] - v0
            xi = np.einsum("eij,ej->ei", self.invJ, d)
            lam = 1.0 - xi[:, 0] - xi[:, 1]
            inside = (xi[:, 0] >= -tol) & (xi[:, 1] >= -tol) & (lam >= -tol)
            ids = np.nonzero(inside)[0]
            if ids.size:
                elems[i] = ids[0]
                refs[i] = xi[ids[0]]
        return elems, refs
