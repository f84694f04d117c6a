"""Modal basis and quadrature on the reference triangle.

Reference element: T = {(x, y): x >= 0, y >= 0, x + y <= 1}. The volume
basis is a Dubiner-type orthonormal modal family built by a graded
Gram-Schmidt over monomials; the monomial Gram matrix is analytic
(int_T x^a y^b = a! b! / (a+b+2)!), so the reference mass matrix is the
identity to round-off and mass inversion in explicit stepping is a scalar
divide. Edge spaces use shifted Legendre polynomials, orthonormal on
[0, 1].

Volume quadrature is a collapsed (Duffy) Gauss-Legendre x Gauss-Jacobi
rule of requested exactness degree; edge quadrature is Gauss-Legendre.
"""

from math import factorial

import numpy as np
from scipy.special import eval_legendre, roots_jacobi, roots_legendre


def monomial_exponents(p: int):
    """Graded monomial exponents [(0,0),(1,0),(0,1),(2,0),...] up to degree p."""
    return [(d - j, j) for d in range(p + 1) for j in range(d + 1)]


def triangle_quadrature(degree: int):
    """Quadrature on T exact for total polynomial degree <= degree.

    Returns (points, weights) with points shape (nq, 2); weights sum to
    the reference area 1/2.
    """
    n = max(1, (degree + 2) // 2)
    xa, wa = roots_legendre(n)
    xb, wb = roots_jacobi(n, 1.0, 0.0)  # weight (1 - x) on [-1, 1]
    a = 0.5 * (xa + 1.0)
    wa = 0.5 * wa
    b = 0.5 * (xb + 1.0)
    wb = 0.25 * wb  # folds in the (1 - b) Duffy Jacobian
    A, B = np.meshgrid(a, b, indexing="ij")
    pts = np.column_stack([(A * (1.0 - B)).ravel(), B.ravel()])
    w = np.outer(wa, wb).ravel()
    return pts, w


def edge_quadrature(npts: int):
    """Gauss-Legendre rule on [0, 1]; weights sum to 1."""
    x, w = roots_legendre(npts)
    return 0.5 * (x + 1.0), 0.5 * w


class TriangleBasis:
    """Orthonormal modal basis of total degree <= p on the reference triangle."""

    def __init__(self, p: int):
        if p < 0:
            raise ValueError("polynomial order must be >= 0")
        self.p = p
        self.exponents = monomial_exponents(p)
        self.nmodes = len(self.exponents)
        G = np.empty((self.nmodes, self.nmodes))
        for i, (a, b) in enumerate(self.exponents):
            for j, (c, d) in enumerate(self.exponents):
                G[i, j] = (
                    factorial(a + c) * factorial(b + d) / factorial(a + b + c + d + 2)
                )
        L = np.linalg.cholesky(G)
        # columns of C express each mode in the monomial basis; Gram of the
        # new family is C^T G C = I
        self.coeffs = np.linalg.inv(L).T

    def _vandermonde(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        V = np.empty((pts.shape[0], self.nmodes))
        for m, (a, b) in enumerate(self.exponents):
            V[:, m] = pts[:, 0] ** a * pts[:, 1] ** b
        return V

    def eval(self, pts):
        """Basis values at reference points; shape (npts, nmodes)."""
        return self._vandermonde(pts) @ self.coeffs

    def grad(self, pts):
        """Reference gradients at points; shape (npts, 2, nmodes)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        n = pts.shape[0]
        Dx = np.zeros((n, self.nmodes))
        Dy = np.zeros((n, self.nmodes))
        for m, (a, b) in enumerate(self.exponents):
            if a > 0:
                Dx[:, m] = a * pts[:, 0] ** (a - 1) * pts[:, 1] ** b
            if b > 0:
                Dy[:, m] = b * pts[:, 0] ** a * pts[:, 1] ** (b - 1)
        out = np.empty((n, 2, self.nmodes))
        out[:, 0, :] = Dx @ self.coeffs
        out[:, 1, :] = Dy @ self.coeffs
        return out


class EdgeBasis:
    """Shifted Legendre basis, orthonormal on [0, 1], dimension p + 1."""

    def __init__(self, p: int):
        self.p = p
        self.nmodes = p + 1

    def eval(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        V = np.empty((t.shape[0], self.nmodes))
        for k in range(self.nmodes):
            V[:, k] = np.sqrt(2.0 * k + 1.0) * eval_legendre(k, 2.0 * t - 1.0)
        return V
