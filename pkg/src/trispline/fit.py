"""Penalized least-squares fitting of image-on-scalar models.

The model for subject ``i`` at pixel ``z_j`` is
``Y_ij = sum_l X_il beta_l(z_j) + noise`` with every ``beta_l`` in a spline
space. With a single space shared by all coefficients the normal equations are

    (S kron G + R kron D) vec(Theta) = vec(X^T Y B~)

where ``S = X^T X``, ``G = B~^T B~`` over inside pixels, ``D`` the reduced
energy matrix and ``R = diag(rho)``. :class:`KroneckerSolver` diagonalizes this
system from two small generalized eigenproblems, so the ``nN x (p+1)q`` design
is never formed and refits with new data or penalties are cheap.
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .exceptions import EmptyTriangleError, NumericalError, ValidationError
from .spline_space import EvalMatrix, SplineSpace, build_eval_matrix

__all__ = [
    "Dataset",
    "Design",
    "FitResult",
    "KroneckerSolver",
    "make_design",
    "fit_bpst",
    "fit_pcst",
    "cross_validate",
    "default_rho_grid",
    "fit_bpst_cv",
    "pcst_triangle_means",
]

PIVOT_TOL = 1e-12
COND_MAX = 1e12


@dataclass(frozen=True)
class Dataset:
    """Covariates, images and pixel centres.

    Parameters
    ----------
    X : ndarray, shape (n, p+1)
        First column must be all ones.
    Y : ndarray, shape (n, N)
        May hold NaN only at pixels outside the domain.
    pixels : ndarray, shape (N, 2)
    """

    X: np.ndarray
    Y: np.ndarray
    pixels: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        Y = np.asarray(self.Y, dtype=float)
        Z = np.asarray(self.pixels, dtype=float)
        if X.ndim != 2:
            raise ValidationError(f"X must be 2-dimensional, got shape {X.shape}")
        if Y.ndim != 2:
            raise ValidationError(f"Y must be 2-dimensional, got shape {Y.shape}")
        if Z.ndim != 2 or Z.shape[1] != 2:
            raise ValidationError(f"pixels must have shape (N, 2), got {Z.shape}")
        n = X.shape[0]
        if n < 2:
            raise ValidationError("at least two subjects are required")
        if Y.shape[0] != n:
            raise ValidationError(f"X has {n} rows but Y has {Y.shape[0]}")
        if Y.shape[1] != Z.shape[0]:
            raise ValidationError(f"Y has {Y.shape[1]} columns but there are {Z.shape[0]} pixels")
        if not np.all(np.isfinite(X)):
            raise ValidationError("X contains non-finite entries")
        if not np.all(np.isfinite(Z)):
            raise ValidationError("pixel coordinates must be finite")
        if not np.allclose(X[:, 0], 1.0):
            raise ValidationError("the first column of X must be the intercept (all ones)")
        cond = np.linalg.cond(X.T @ X)
        if not np.isfinite(cond) or cond > COND_MAX:
            raise ValidationError(f"columns of X are collinear (condition number of X^T X = {cond:.3g})")
        for name, arr in (("X", X), ("Y", Y), ("pixels", Z)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self):
        return self.X.shape[0]

    @property
    def n_coef(self):
        return self.X.shape[1]

    @property
    def N(self):
        return self.Y.shape[1]


class KroneckerSolver:
    """Diagonalizing solver for ``S kron G + R kron D`` with ``R`` diagonal.

    The space-level step solves ``G T = (G + cD) T diag(mu)`` once, giving
    ``T^T G T = diag(mu)`` and ``T^T D T = diag(nu)``. For covariate Gram ``S``
    and penalties ``rho`` the data-level step solves ``S E = (S + R) E diag(omega)``
    and the system becomes diagonal with entries
    ``lam[a, k] = omega_a mu_k + (1 - omega_a) nu_k`` in ``E kron T`` coordinates.
    """

    def __init__(self, G, D):
        G = np.asarray(G, dtype=float)
        D = np.asarray(D, dtype=float)
        trD = float(np.trace(D))
        self.scale = float(np.trace(G)) / trD if trD > 0 else 0.0
        A = G + self.scale * D
        try:
            mu, T = scipy.linalg.eigh(G, A)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                "spline basis is not identifiable on the pixel set (G + cD is not positive definite)"
            ) from exc
        mu = np.clip(mu, 0.0, 1.0)
        self.mu = mu
        self.nu = (1.0 - mu) / self.scale if self.scale > 0 else np.zeros_like(mu)
        self.T = T

    def factor(self, S, rho):
        """Data-level factorization for covariate Gram ``S`` and penalties ``rho``."""
        S = np.asarray(S, dtype=float)
        rho = np.asarray(rho, dtype=float)
        omega, E = scipy.linalg.eigh(S, S + np.diag(rho))
        omega = np.clip(omega, 0.0, 1.0)
        lam = omega[:, None] * self.mu[None, :] + (1.0 - omega)[:, None] * self.nu[None, :]
        lmax = float(lam.max())
        lmin = float(lam.min())
        if not lmax > 0 or lmin <= PIVOT_TOL * lmax:
            raise NumericalError(
                f"penalized normal equations are singular (smallest pivot {lmin:.3e}, "
                f"relative {lmin / lmax if lmax > 0 else 0.0:.3e})"
            )
        return DataFactor(E=E, omega=omega, lam=lam)

    def solve(self, fac, Bm):
        """Solve for ``Theta`` (shape ``(p+1, q)``) given right-hand side ``Bm = X^T Y B~``."""
        Phi = (fac.E.T @ Bm @ self.T) / fac.lam
        return fac.E @ Phi @ self.T.T


@dataclass(frozen=True)
class DataFactor:
    E: np.ndarray
    omega: np.ndarray
    lam: np.ndarray


class Design:
    """A spline space evaluated at a pixel set.

    Attributes
    ----------
    space : SplineSpace
    eval : EvalMatrix
    Bt : ndarray, shape (N_in, q)
        Reduced basis ``B Q2`` restricted to inside pixels.
    G : ndarray, shape (q, q)
        ``Bt^T Bt``.
    """

    def __init__(self, space, pixels):
        self.space = space
        self.pixels = np.asarray(pixels, dtype=float)
        self.eval: EvalMatrix = build_eval_matrix(space, self.pixels)
        inside = self.eval.inside_mask
        self.inside = inside
        self.N_in = int(inside.sum())
        if self.N_in == 0:
            raise ValidationError("no pixel lies inside the triangulation")
        Bin = self.eval.B[inside]
        self.Bt = np.ascontiguousarray(np.asarray(Bin @ space.Q2))
        self.G = self.Bt.T @ self.Bt
        self._solver = None

    @property
    def solver(self):
        if self._solver is None:
            self._solver = KroneckerSolver(self.G, self.space.D)
        return self._solver

    @property
    def q(self):
        return self.space.q

    def pixel_counts(self):
        tri = self.eval.triangle[self.inside]
        return np.bincount(tri, minlength=self.space.mesh.n_triangles)


def make_design(space, pixels):
    return Design(space, pixels)


@dataclass
class FitResult:
    """Fitted coefficient surfaces.

    Attributes
    ----------
    theta : ndarray, shape (p+1, q)
    gamma : ndarray, shape (p+1, n_coeff)
    beta_surfaces : ndarray, shape (p+1, N)
        ``B @ gamma`` at every pixel (zero outside the domain).
    rho : ndarray, shape (p+1,)
    cv_score : float or None
    method : {'bpst', 'pcst'}
    """

    theta: np.ndarray
    gamma: np.ndarray
    beta_surfaces: np.ndarray
    rho: np.ndarray
    method: str
    design: Design
    cv_score: float | None = None
    factor: DataFactor | None = None
    S: np.ndarray | None = None
    cv_table: list | None = None
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    @property
    def inside_mask(self):
        return self.design.inside

    def beta_inside(self):
        return self.beta_surfaces[:, self.design.inside]

    def predict(self, X):
        """Fitted mean images ``X @ beta`` at every pixel."""
        return np.asarray(X, dtype=float) @ self.beta_surfaces


def _inside_Y(data, design):
    if data.pixels.shape != design.pixels.shape or not np.array_equal(data.pixels, design.pixels):
        raise ValidationError("the design was built on a different pixel set than the data")
    Yin = data.Y[:, design.inside]
    if not np.all(np.isfinite(Yin)):
        bad = np.flatnonzero(~np.all(np.isfinite(Yin), axis=0))
        raise ValidationError(f"Y has missing or non-finite values at {len(bad)} inside pixel(s)")
    return Yin


def _as_design(space_or_design, data):
    if isinstance(space_or_design, Design):
        return space_or_design
    if isinstance(space_or_design, SplineSpace):
        return Design(space_or_design, data.pixels)
    raise ValidationError("expected a SplineSpace or Design")


def _rho_vector(rho, p1):
    r = np.atleast_1d(np.asarray(rho, dtype=float))
    if r.size == 1:
        r = np.full(p1, float(r[0]))
    if r.shape != (p1,):
        raise ValidationError(f"rho must be a scalar or have {p1} entries, got {r.shape}")
    if np.any(r < 0) or not np.all(np.isfinite(r)):
        raise ValidationError("penalty parameters must be finite and nonnegative")
    return r


def _surfaces(design, gamma):
    return np.asarray((design.eval.B @ gamma.T).T)


def fit_bpst(data, space, rho=0.0, *, C=None):
    """Penalized spline fit with a spline space shared by all coefficients.

    Parameters
    ----------
    data : Dataset
    space : SplineSpace or Design
        A :class:`Design` caches the basis evaluation and the space-level
        factorization; pass one when fitting repeatedly on the same pixels.
    rho : float or array_like of shape (p+1,)
    C : ndarray, shape (n, q), optional
        Precomputed ``Y_in @ Bt``.

    Returns
    -------
    FitResult
    """
    if isinstance(space, (list, tuple)):
        return _fit_bpst_multi(data, space, rho)
    t0 = time.perf_counter()
    design = _as_design(space, data)
    rho = _rho_vector(rho, data.n_coef)
    if C is None:
        C = _inside_Y(data, design) @ design.Bt
    S = data.X.T @ data.X
    solver = design.solver
    fac = solver.factor(S, rho)
    theta = solver.solve(fac, data.X.T @ C)
    gamma = theta @ design.space.Q2.T
    return FitResult(
        theta=theta,
        gamma=gamma,
        beta_surfaces=_surfaces(design, gamma),
        rho=rho,
        method="bpst",
        design=design,
        factor=fac,
        S=S,
        wall_time=time.perf_counter() - t0,
    )


def _fit_bpst_multi(data, spaces, rho):
    """Dense block system for coefficient-specific spaces."""
    t0 = time.perf_counter()
    p1 = data.n_coef
    if len(spaces) != p1:
        raise ValidationError(f"expected {p1} spline spaces, got {len(spaces)}")
    designs = [_as_design(s, data) for s in spaces]
    inside = designs[0].inside
    if any(not np.array_equal(d.inside, inside) for d in designs):
        raise ValidationError("all spline spaces must cover the same pixels")
    rho = _rho_vector(rho, p1)
    Yin = _inside_Y(data, designs[0])
    S = data.X.T @ data.X
    qs = [d.q for d in designs]
    off = np.concatenate([[0], np.cumsum(qs)])
    A = np.zeros((off[-1], off[-1]))
    rhs = np.zeros(off[-1])
    for a in range(p1):
        rhs[off[a]:off[a + 1]] = designs[a].Bt.T @ (Yin.T @ data.X[:, a])
        for b in range(p1):
            A[off[a]:off[a + 1], off[b]:off[b + 1]] = S[a, b] * designs[a].Bt.T @ designs[b].Bt
        A[off[a]:off[a + 1], off[a]:off[a + 1]] += rho[a] * designs[a].space.D
    try:
        cf = scipy.linalg.cho_factor(A)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("penalized normal equations are singular") from exc
    piv = np.diag(cf[0]) ** 2
    if piv.min() <= PIVOT_TOL * piv.max():
        raise NumericalError(f"penalized normal equations are singular (smallest pivot {piv.min():.3e})")
    sol = scipy.linalg.cho_solve(cf, rhs)
    theta = [sol[off[a]:off[a + 1]] for a in range(p1)]
    gamma = [theta[a] @ designs[a].space.Q2.T for a in range(p1)]
    beta = np.vstack([np.asarray(designs[a].eval.B @ gamma[a]) for a in range(p1)])
    res = FitResult(
        theta=theta, gamma=gamma, beta_surfaces=beta, rho=rho, method="bpst",
        design=designs[0], S=S, wall_time=time.perf_counter() - t0,
    )
    res.extra["designs"] = designs
    res.extra["system"] = A
    return res


def pcst_triangle_means(data, design):
    """Per-subject mean response over each triangle's pixels, shape ``(n, T)``."""
    Yin = _inside_Y(data, design)
    tri = design.eval.triangle[design.inside]
    counts = design.pixel_counts()
    p1 = data.n_coef
    bad = np.flatnonzero(counts < p1)
    if len(bad):
        raise EmptyTriangleError(
            f"{len(bad)} triangle(s) contain fewer than {p1} pixels: {bad.tolist()}", bad
        )
    T = design.space.mesh.n_triangles
    sums = np.zeros((data.n, T))
    np.add.at(sums.T, tri, Yin.T)
    return sums / counts


def fit_pcst(data, space):
    """Piecewise-constant fit: per-triangle OLS of the triangle-mean images on ``X``."""
    t0 = time.perf_counter()
    design = _as_design(space, data)
    if design.space.d != 0:
        raise ValidationError("the piecewise-constant estimator needs a degree-0 space")
    Ybar = pcst_triangle_means(data, design)
    S = data.X.T @ data.X
    gamma = scipy.linalg.solve(S, data.X.T @ Ybar, assume_a="pos")
    theta = gamma @ design.space.Q2  # Q2 is the identity for d = 0
    return FitResult(
        theta=theta,
        gamma=gamma,
        beta_surfaces=_surfaces(design, gamma),
        rho=np.zeros(data.n_coef),
        method="pcst",
        design=design,
        S=S,
        wall_time=time.perf_counter() - t0,
    )


def default_rho_grid(design, size=10, S=None):
    """``size`` log-spaced penalties in ``[1e-3 s, 1e5 s]``.

    ``s = tr(G) / tr(D)``, multiplied by ``tr(S) / (p+1)`` when the covariate
    Gram ``S`` is given, so that the grid follows the size of the data term.
    """
    s = design.solver.scale
    if s <= 0:
        return np.zeros(1)
    if S is not None:
        S = np.asarray(S, dtype=float)
        s *= float(np.trace(S)) / S.shape[0]
    return np.logspace(np.log10(1e-3 * s), np.log10(1e5 * s), size)


def cross_validate(data, space, rho_grid=None, K=5, seed=0, per_coefficient=False):
    """K-fold cross-validation of the penalty over a grid.

    Subjects are shuffled with ``numpy.random.default_rng(seed)`` and split into
    ``K`` near-equal folds. The score of a grid point is
    ``K^-1 sum_k (|V_k| N)^-1 sum_{i in V_k} ||Y_i - X_i^T beta_{-k}||^2``.

    Returns
    -------
    best_rho : ndarray, shape (p+1,)
    table : list of (rho, score)
        ``rho`` is a float for a shared grid and a tuple for ``per_coefficient``.
        Ties are resolved toward the smallest penalty.
    """
    design = _as_design(space, data)
    if rho_grid is None:
        grid = default_rho_grid(design, S=data.X.T @ data.X)
    else:
        grid = np.atleast_1d(np.asarray(rho_grid, dtype=float))
    if grid.size == 0:
        raise ValidationError("the penalty grid is empty")
    if np.any(grid < 0) or not np.all(np.isfinite(grid)):
        raise ValidationError("penalty grid values must be finite and nonnegative")
    K = int(K)
    n, p1 = data.n, data.n_coef
    if K < 2:
        raise ValidationError("K must be at least 2")
    if n < K:
        raise ValidationError(f"K={K} folds need at least {K} subjects, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(perm, K)

    Yin = _inside_Y(data, design)
    C = Yin @ design.Bt
    ysq = np.einsum("ij,ij->i", Yin, Yin)
    X = data.X
    solver = design.solver
    G = design.G
    Nin = design.N_in

    if per_coefficient:
        candidates = [np.array(c) for c in itertools.product(np.sort(grid), repeat=p1)]
    else:
        candidates = [np.full(p1, g) for g in np.sort(grid)]

    fold_data = []
    for fold in folds:
        train = np.setdiff1d(np.arange(n), fold)
        if len(train) < p1:
            raise ValidationError(f"a training fold has {len(train)} subjects, fewer than p+1={p1}")
        Xt = X[train]
        St = Xt.T @ Xt
        if np.linalg.cond(St) > COND_MAX:
            raise ValidationError("covariates are collinear within a training fold")
        fold_data.append((fold, St, Xt.T @ C[train]))

    table = []
    for rho in candidates:
        total = 0.0
        for fold, St, Bm in fold_data:
            fac = solver.factor(St, rho)
            theta = solver.solve(fac, Bm)
            Xv = X[fold]
            W = Xv @ theta  # (|V|, q)
            sse = ysq[fold].sum() - 2.0 * np.einsum("iq,iq->", W, C[fold]) + np.einsum("iq,qr,ir->", W, G, W)
            total += sse / (len(fold) * Nin)
        table.append((tuple(float(v) for v in rho) if per_coefficient else float(rho[0]), total / K))

    scores = np.array([s for _, s in table])
    best = int(np.flatnonzero(scores <= scores.min())[0])  # candidates sorted, so first is smallest
    return candidates[best].copy(), table


def fit_bpst_cv(data, space, rho_grid=None, K=5, seed=0, per_coefficient=False):
    """Cross-validate the penalty, then refit on all subjects."""
    t0 = time.perf_counter()
    design = _as_design(space, data)
    rho, table = cross_validate(data, design, rho_grid, K=K, seed=seed, per_coefficient=per_coefficient)
    res = fit_bpst(data, design, rho)
    key = tuple(rho) if per_coefficient else float(rho[0])
    res.cv_score = float(dict(table)[key])
    res.cv_table = table
    res.wall_time = time.perf_counter() - t0
    return res
