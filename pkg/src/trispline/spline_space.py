"""Global spline spaces ``S^r_d`` over a triangulation.

Global Bernstein coefficients are stored triangle by triangle: coefficient
``t * d* + m`` belongs to triangle ``t`` and local index ``m`` (see
:func:`trispline.bernstein.indices`). Smoothness across interior edges is
imposed as ``H @ gamma = 0`` and removed by the reparametrization
``gamma = Q2 @ theta`` with ``Q2`` an orthonormal basis of ``ker(H)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import factorial

import numpy as np
import scipy.linalg
import scipy.sparse as sp

from . import bernstein
from .exceptions import ValidationError
from .mesh import Triangulation

__all__ = ["SplineSpace", "EvalMatrix", "build_constraints", "nullspace", "build_eval_matrix"]


def _local_index(d, tri_vertices, exps):
    """Local coefficient index from a ``{global_vertex: exponent}`` mapping."""
    e = [exps.get(int(v), 0) for v in tri_vertices]
    return bernstein.index_of(d, e[0], e[1], e[2])


def build_constraints(mesh, d, r):
    """Sparse matrix of the ``C^r`` smoothness conditions across interior edges.

    For every interior edge shared by ``T = (u, a, b)`` and ``T' = (w, a, b)``
    and every ``s = 0..r`` the conditions are

        c'_{s,j,k} = sum_{nu+mu+kappa=s} c_{nu, j+mu, k+kappa} B^s_{nu,mu,kappa}(w)

    for ``j + k = d - s``, where ``B^s`` is evaluated at the barycentric
    coordinates of ``w`` relative to ``T``. Each ``s`` yields ``d - s + 1`` rows.
    """
    if not isinstance(mesh, Triangulation):
        raise ValidationError("mesh must be a Triangulation")
    if d < 0 or r < 0:
        raise ValidationError("degree and smoothness must be nonnegative")
    if r > d:
        raise ValidationError(f"smoothness r={r} exceeds degree d={d}")
    ds = bernstein.n_basis(d)
    n_coeff = mesh.n_triangles * ds
    if d == 0:
        return sp.csr_matrix((0, n_coeff))

    rows, cols, vals = [], [], []
    row = 0
    tris = mesh.triangles
    for ta, tb, a, b in mesh.interior_edges:
        Ta, Tb = tris[ta], tris[tb]
        u = int(next(v for v in Ta if v != a and v != b))
        w = int(next(v for v in Tb if v != a and v != b))
        lam_full = mesh.barycentric(ta, mesh.vertices[w])[0]
        lam = {int(v): lam_full[p] for p, v in enumerate(Ta)}
        lu, la, lb = lam[u], lam[int(a)], lam[int(b)]
        for s in range(r + 1):
            for j in range(d - s, -1, -1):
                k = d - s - j
                rows.append(row)
                cols.append(tb * ds + _local_index(d, Tb, {w: s, int(a): j, int(b): k}))
                vals.append(1.0)
                for nu in range(s, -1, -1):
                    for mu in range(s - nu, -1, -1):
                        kap = s - nu - mu
                        coef = factorial(s) / (factorial(nu) * factorial(mu) * factorial(kap))
                        coef *= lu**nu * la**mu * lb**kap
                        if coef == 0.0:
                            continue
                        rows.append(row)
                        cols.append(ta * ds + _local_index(d, Ta, {u: nu, int(a): j + mu, int(b): k + kap}))
                        vals.append(-coef)
                row += 1
    H = sp.coo_matrix((vals, (rows, cols)), shape=(row, n_coeff)).tocsr()
    H.sum_duplicates()
    return H


def nullspace(H, rank_tol=1e-10):
    """Orthonormal basis of ``ker(H)`` from a pivoted QR factorization of ``H^T``.

    The rank is the number of diagonal entries of ``R`` whose magnitude exceeds
    ``rank_tol`` times the largest one.
    """
    Hd = H.toarray() if sp.issparse(H) else np.asarray(H, dtype=float)
    if Hd.ndim != 2:
        raise ValidationError("constraint matrix must be 2-dimensional")
    n = Hd.shape[1]
    Hd = Hd[np.any(Hd != 0, axis=1)]
    if Hd.shape[0] == 0:
        return np.eye(n)
    Q, R, _ = scipy.linalg.qr(Hd.T, mode="full", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > rank_tol * diag.max())) if diag.size and diag.max() > 0 else 0
    return np.ascontiguousarray(Q[:, rank:])


@dataclass(frozen=True)
class EvalMatrix:
    """Basis evaluation at pixel centres.

    Attributes
    ----------
    B : scipy.sparse.csr_matrix, shape (N, n_coeff)
    inside_mask : ndarray of bool, shape (N,)
    triangle : ndarray of int, shape (N,)
        Containing triangle per pixel, ``-1`` outside.
    bary : ndarray, shape (N, 3)
    """

    B: sp.csr_matrix
    inside_mask: np.ndarray
    triangle: np.ndarray
    bary: np.ndarray

    @property
    def n_inside(self):
        return int(self.inside_mask.sum())


class SplineSpace:
    """Spline space of degree ``d`` and smoothness ``r`` over ``mesh``.

    Parameters
    ----------
    mesh : Triangulation
    d : int
        Polynomial degree on each triangle.
    r : int
        Global smoothness across interior edges.
    rank_tol : float, default 1e-10
        Relative threshold on the QR diagonal used to determine ``rank(H)``.
    allow_low_degree : bool, default False
        For ``r >= 1`` the space is required to satisfy ``d >= 3r + 2``; set to
        True to build lower degrees anyway (a warning is issued).

    Attributes
    ----------
    H : scipy.sparse.csr_matrix
        Smoothness conditions.
    Q2 : ndarray, shape (n_coeff, q)
    P : scipy.sparse.csr_matrix
        Block-diagonal energy matrix.
    D : ndarray, shape (q, q)
        Reduced penalty ``Q2.T @ P @ Q2``.
    """

    def __init__(self, mesh, d, r=0, rank_tol=1e-10, allow_low_degree=False):
        d, r = int(d), int(r)
        if d < 0 or r < 0:
            raise ValidationError("degree and smoothness must be nonnegative")
        if r > d:
            raise ValidationError(f"smoothness r={r} exceeds degree d={d}")
        if r >= 1 and d < 3 * r + 2:
            msg = f"degree d={d} is below 3r+2={3 * r + 2} for smoothness r={r}"
            if not allow_low_degree:
                raise ValidationError(msg + " (pass allow_low_degree=True to override)")
            warnings.warn(msg, stacklevel=2)
        self.mesh = mesh
        self.d = d
        self.r = r
        self.rank_tol = float(rank_tol)
        self.dstar = bernstein.n_basis(d)
        self.n_coeff = mesh.n_triangles * self.dstar
        self.H = build_constraints(mesh, d, r)
        self.Q2 = nullspace(self.H, rank_tol)
        self.Q2.setflags(write=False)
        self.q = self.Q2.shape[1]

        blocks = []
        D = np.zeros((self.q, self.q))
        ds = self.dstar
        for t in range(mesh.n_triangles):
            _, E = bernstein.gram_and_energy(d, mesh.triangle_vertices(t))
            blocks.append(E)
            if d >= 2:
                Qt = self.Q2[t * ds:(t + 1) * ds]
                D += Qt.T @ E @ Qt
        self.P = sp.block_diag(blocks, format="csr")
        self.D = 0.5 * (D + D.T)
        self.D.setflags(write=False)

    @property
    def dimension(self):
        return self.q

    def get_params(self):
        return {"d": self.d, "r": self.r, "rank_tol": self.rank_tol}

    def __repr__(self):
        return f"SplineSpace(d={self.d}, r={self.r}, n_triangles={self.mesh.n_triangles}, dimension={self.q})"

    # ---------------------------------------------------------------- helpers
    def expand(self, theta):
        """Full Bernstein coefficients ``Q2 @ theta`` (last axis of ``theta``)."""
        return np.asarray(theta) @ self.Q2.T

    def energy(self, gamma):
        g = np.asarray(gamma, dtype=float)
        return float(g @ (self.P @ g))

    def evaluate_on_triangle(self, gamma, t, points, order=(0, 0)):
        """Evaluate the polynomial piece on triangle ``t`` (extrapolating if needed)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        b = self.mesh.barycentric(t, pts)
        grads = bernstein.barycentric_gradients(self.mesh.triangle_vertices(t))
        vals = bernstein._derivs_unchecked(self.d, grads, b, int(order[0]), int(order[1]))
        g = np.asarray(gamma, dtype=float)[t * self.dstar:(t + 1) * self.dstar]
        return vals @ g

    def evaluate(self, gamma, points):
        """Evaluate a spline with full coefficients ``gamma`` at ``points`` (NaN outside)."""
        ev = build_eval_matrix(self, points)
        out = np.asarray(ev.B @ np.asarray(gamma, dtype=float), dtype=float)
        out[~ev.inside_mask] = np.nan
        return out


def build_eval_matrix(space, pixels):
    """Sparse basis-evaluation matrix at ``pixels`` (rows zero outside the domain)."""
    pts = np.atleast_2d(np.asarray(pixels, dtype=float))
    if pts.ndim != 2 or pts.shape[1] != 2:
        raise ValidationError(f"pixels must have shape (N, 2), got {pts.shape}")
    if not np.all(np.isfinite(pts)):
        raise ValidationError("pixel coordinates must be finite")
    tri, bary = space.mesh.locate_many(pts)
    inside = tri >= 0
    rows_in = np.flatnonzero(inside)
    ds = space.dstar
    vals = bernstein._basis_unchecked(space.d, bary[inside])
    rows = np.repeat(rows_in, ds)
    cols = (tri[inside][:, None] * ds + np.arange(ds)[None, :]).ravel()
    B = sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(len(pts), space.n_coeff))
    return EvalMatrix(B=B, inside_mask=inside, triangle=tri, bary=bary)
