"""Bernstein basis polynomials on a triangle in barycentric form.

Coefficients of a degree-``d`` polynomial on one triangle are indexed by
triples ``(i, j, k)`` with ``i + j + k = d``, enumerated with ``i`` descending
and then ``j`` descending. Every matrix in the package uses this order.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb, factorial

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .exceptions import MeshError, ValidationError

__all__ = [
    "n_basis",
    "indices",
    "index_of",
    "eval_basis",
    "eval_derivatives",
    "barycentric_gradients",
    "triangle_quadrature",
    "gram_and_energy",
    "mass_matrix_exact",
]


def n_basis(d):
    """Number of basis polynomials per triangle, ``(d+1)(d+2)/2``."""
    return (d + 1) * (d + 2) // 2


@lru_cache(maxsize=None)
def _indices(d):
    out = [(i, j, d - i - j) for i in range(d, -1, -1) for j in range(d - i, -1, -1)]
    arr = np.array(out, dtype=np.int64).reshape(-1, 3)
    arr.setflags(write=False)
    return arr


def indices(d):
    """Index triples ``(i, j, k)`` in the fixed order, shape ``(d*, 3)``."""
    if d < 0:
        raise ValidationError("degree must be nonnegative")
    return _indices(int(d))


def index_of(d, i, j, k):
    """Position of ``(i, j, k)`` in the ordering of :func:`indices`."""
    if min(i, j, k) < 0 or i + j + k != d:
        raise ValidationError(f"({i}, {j}, {k}) is not a degree-{d} index")
    # rows before block i hold indices with a larger first entry
    a = d - i
    return a * (a + 1) // 2 + (d - i - j)


@lru_cache(maxsize=None)
def _multinomials(d):
    idx = _indices(d)
    f = factorial(d)
    c = np.array([f // (factorial(i) * factorial(j) * factorial(k)) for i, j, k in idx], dtype=float)
    c.setflags(write=False)
    return c


def _check_bary(bary):
    b = np.asarray(bary, dtype=float)
    single = b.ndim == 1
    b = np.atleast_2d(b)
    if b.shape[-1] != 3:
        raise ValidationError(f"barycentric coordinates must have 3 entries, got shape {b.shape}")
    if not np.all(np.isfinite(b)):
        raise ValidationError("barycentric coordinates must be finite")
    if np.any(np.abs(b.sum(axis=1) - 1.0) > 1e-9):
        raise ValidationError("barycentric coordinates must sum to 1 (tolerance 1e-9)")
    if np.any(b < -1e-12):
        raise ValidationError("barycentric coordinates must be nonnegative (tolerance 1e-12)")
    return b, single


def _basis_unchecked(d, b):
    # b: (m, 3); returns (m, d*)
    if d == 0:
        return np.ones((len(b), 1))
    idx = _indices(d)
    powers = b[:, None, :] ** np.arange(d + 1)[None, :, None]  # (m, d+1, 3)
    vals = powers[:, idx[:, 0], 0] * powers[:, idx[:, 1], 1] * powers[:, idx[:, 2], 2]
    return vals * _multinomials(d)


def eval_basis(d, bary):
    """Values of all degree-``d`` Bernstein polynomials.

    Parameters
    ----------
    d : int
    bary : array_like, shape (3,) or (m, 3)

    Returns
    -------
    ndarray, shape (d*,) or (m, d*)
    """
    if d < 0:
        raise ValidationError("degree must be nonnegative")
    b, single = _check_bary(bary)
    vals = _basis_unchecked(int(d), b)
    return vals[0] if single else vals


def barycentric_gradients(vertices):
    """Cartesian gradients of the three barycentric coordinates, shape (3, 2)."""
    V = np.asarray(vertices, dtype=float)
    if V.shape != (3, 2):
        raise ValidationError(f"triangle vertices must have shape (3, 2), got {V.shape}")
    M = np.vstack([V.T, np.ones(3)])
    area2 = (V[1, 0] - V[0, 0]) * (V[2, 1] - V[0, 1]) - (V[1, 1] - V[0, 1]) * (V[2, 0] - V[0, 0])
    scale = max(np.ptp(V[:, 0]), np.ptp(V[:, 1])) ** 2
    if abs(area2) <= 1e-12 * max(scale, np.finfo(float).tiny):
        raise MeshError("degenerate triangle")
    return np.linalg.inv(M)[:, :2]


@lru_cache(maxsize=None)
def _shift_table(d, k):
    """For each degree-d index and each shift pattern of length k, the position
    of the lowered degree-(d-k) index (or -1)."""
    idx = _indices(d)
    patterns = np.array(np.meshgrid(*[np.arange(3)] * k, indexing="ij")).reshape(k, -1).T
    lower = {tuple(t): n for n, t in enumerate(_indices(d - k))}
    table = np.full((len(idx), len(patterns)), -1, dtype=np.int64)
    for a, alpha in enumerate(idx):
        for p, pat in enumerate(patterns):
            beta = alpha.copy()
            for v in pat:
                beta[v] -= 1
            if beta.min() >= 0:
                table[a, p] = lower[tuple(beta)]
    return patterns, table


def eval_derivatives(d, vertices, bary, order):
    """Cartesian partial derivatives of all basis polynomials.

    Parameters
    ----------
    d : int
    vertices : array_like, shape (3, 2)
        Triangle vertices, in the order matching the barycentric coordinates.
    bary : array_like, shape (3,) or (m, 3)
    order : tuple of int
        ``(a1, a2)``: number of derivatives in ``z1`` and ``z2``, total at most 2.

    Returns
    -------
    ndarray, shape (d*,) or (m, d*)
    """
    a1, a2 = (int(o) for o in order)
    if a1 < 0 or a2 < 0:
        raise ValidationError("derivative orders must be nonnegative")
    if a1 + a2 > 2:
        raise ValidationError("derivatives of total order above 2 are not supported")
    grads = barycentric_gradients(vertices)
    b, single = _check_bary(bary)
    out = _derivs_unchecked(int(d), grads, b, a1, a2)
    return out[0] if single else out


def _derivs_unchecked(d, grads, b, a1, a2):
    k = a1 + a2
    if k == 0:
        return _basis_unchecked(d, b)
    if d < k:
        return np.zeros((len(b), n_basis(d)))
    dirs = [grads[:, 0]] * a1 + [grads[:, 1]] * a2  # each (3,)
    patterns, table = _shift_table(d, k)
    coef = np.ones(len(patterns))
    for t in range(k):
        coef = coef * dirs[t][patterns[:, t]]
    lower = _basis_unchecked(d - k, b)  # (m, (d-k)*)
    lower = np.concatenate([lower, np.zeros((len(b), 1))], axis=1)  # slot -1 -> 0
    vals = lower[:, table]  # (m, d*, 3^k)
    return (factorial(d) // factorial(d - k)) * vals @ coef


@lru_cache(maxsize=None)
def _quadrature(m):
    # collapsed Gauss rule on the reference triangle: exact to total degree 2m-1
    tj, wj = roots_jacobi(m, 1.0, 0.0)
    tl, wl = roots_legendre(m)
    u = (1.0 + tj) / 2.0
    v = (1.0 + tl) / 2.0
    U, Vv = np.meshgrid(u, v, indexing="ij")
    W = np.outer(wj / 4.0, wl / 2.0)
    x = U.ravel()
    y = (Vv * (1.0 - U)).ravel()
    bary = np.column_stack([1.0 - x - y, x, y])
    w = 2.0 * W.ravel()
    bary.setflags(write=False)
    w.setflags(write=False)
    return bary, w


def triangle_quadrature(degree):
    """Quadrature on a triangle exact for polynomials of total degree ``degree``.

    Returns barycentric nodes ``(M, 3)`` and weights summing to one, so that
    ``area * w @ f(nodes)`` integrates ``f`` over the triangle.
    """
    m = max(1, (int(degree) + 2) // 2)
    return _quadrature(m)


def gram_and_energy(d, vertices):
    """Mass and energy matrices of the degree-``d`` basis on one triangle.

    The energy matrix has entries
    ``∫ (B_xx B'_xx + 2 B_xy B'_xy + B_yy B'_yy)``. Both matrices are formed by a
    quadrature rule exact for degree ``2d``.
    """
    V = np.asarray(vertices, dtype=float)
    grads = barycentric_gradients(V)
    area = 0.5 * abs((V[1, 0] - V[0, 0]) * (V[2, 1] - V[0, 1]) - (V[1, 1] - V[0, 1]) * (V[2, 0] - V[0, 0]))
    nodes, w = triangle_quadrature(2 * d)
    Bq = _basis_unchecked(d, nodes)
    mass = area * (Bq.T * w) @ Bq
    if d < 2:
        energy = np.zeros((n_basis(d), n_basis(d)))
    else:
        dxx = _derivs_unchecked(d, grads, nodes, 2, 0)
        dxy = _derivs_unchecked(d, grads, nodes, 1, 1)
        dyy = _derivs_unchecked(d, grads, nodes, 0, 2)
        energy = area * ((dxx.T * w) @ dxx + 2.0 * (dxy.T * w) @ dxy + (dyy.T * w) @ dyy)
    return 0.5 * (mass + mass.T), 0.5 * (energy + energy.T)


def mass_matrix_exact(d, area):
    """Closed-form Bernstein mass matrix: ``C(d,a)C(d,b)/C(2d,a+b) * 2A/((2d+1)(2d+2))``."""
    idx = _indices(d)
    fac = [factorial(t) for t in range(2 * d + 1)]
    n = len(idx)
    M = np.empty((n, n))
    for p, a in enumerate(idx):
        for q, b in enumerate(idx):
            s = a + b
            num = comb(d, int(a[0])) * comb(d - int(a[0]), int(a[1])) * comb(d, int(b[0])) * comb(d - int(b[0]), int(b[1]))
            den = fac[2 * d] // (fac[s[0]] * fac[s[1]] * fac[s[2]])
            M[p, q] = num / den
    return M * 2.0 * area / ((2 * d + 1) * (2 * d + 2))
