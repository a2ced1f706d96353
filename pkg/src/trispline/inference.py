"""Pointwise intervals, bootstrap-calibrated simultaneous bands and significance maps.

Simultaneous bands are calibrated by a wild bootstrap. Replicate ``b`` builds

    Y*_ij = mu_i(z_j) + delta_i eta_i(z_j) + delta_ij eps_ij

with independent Rademacher signs, refits with the original penalty, recomputes
the standard errors and records ``t_b(z) = |beta*_b(z) - beta(z)| / se*_b(z)``.
A band at level ``alpha`` covers the original estimate at ``z`` in replicate
``b`` exactly when ``t_b(z) <= z_{1-alpha/2}``, so coverage is monotone in
``alpha`` by construction and each pixel's calibrated level is read off an
order statistic of ``t``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse as sp
from scipy.stats import norm

from .exceptions import ValidationError
from .fit import FitResult, _inside_Y
from .variance import (
    BpstSE,
    CovarianceEstimate,
    SESurfaces,
    _covariance,
    _se_bpst_dense,
    _se_pcst_core,
    make_projector,
    standard_errors,
)

__all__ = [
    "Band",
    "BoundaryWarning",
    "SignificanceMap",
    "bootstrap_responses",
    "default_alpha_grid",
    "pci",
    "scc",
    "significance_map",
]

MIN_B = 50


class BoundaryWarning(UserWarning):
    """The calibrated level sits at an end of the search grid."""


@dataclass
class Band:
    """Confidence band over inside pixels.

    Attributes
    ----------
    lower, upper : ndarray, shape (p+1, N_in)
    estimate, se : ndarray, shape (p+1, N_in)
    alpha_nominal : float
    alpha_adjusted : ndarray, shape (p+1,)
        Level actually used for each coefficient (equal to ``alpha_nominal``
        for pointwise intervals).
    kind : {'PCI', 'SCC'}
    boundary : list of {None, 'lower', 'upper'}
        ``'lower'`` when no grid level reached the target coverage (the
        smallest grid level is used), ``'upper'`` when the calibrated level
        equals the nominal one.
    alpha_pixel : ndarray, shape (p+1, N_in), optional
        Per-pixel calibrated levels (NaN where none reached the target).
    """

    lower: np.ndarray
    upper: np.ndarray
    estimate: np.ndarray
    se: np.ndarray
    alpha_nominal: float
    alpha_adjusted: np.ndarray
    kind: str
    inside_mask: np.ndarray
    boundary: list = field(default_factory=list)
    alpha_pixel: np.ndarray | None = None
    B: int | None = None

    def width(self):
        """Mean of ``upper - lower`` over inside pixels, per coefficient."""
        return np.mean(self.upper - self.lower, axis=1)

    def covers(self, truth):
        """Whether ``truth`` (inside pixels, or all pixels) lies in the band everywhere."""
        truth = np.asarray(truth, dtype=float)
        if truth.shape[1] == self.inside_mask.size and truth.shape[1] != self.lower.shape[1]:
            truth = truth[:, self.inside_mask]
        return np.all((self.lower <= truth) & (truth <= self.upper), axis=1)

    def full(self, which="lower", fill=np.nan):
        """An inside-pixel array expanded to every pixel."""
        arr = getattr(self, which)
        out = np.full((arr.shape[0], self.inside_mask.size), fill, dtype=float)
        out[:, self.inside_mask] = arr
        return out


@dataclass
class SignificanceMap:
    """Codes ``+1`` (band above zero), ``-1`` (below zero) and ``0`` per inside pixel."""

    codes: np.ndarray
    inside_mask: np.ndarray

    def full(self):
        out = np.zeros((self.codes.shape[0], self.inside_mask.size), dtype=np.int8)
        out[:, self.inside_mask] = self.codes
        return out


def _check_alpha(alpha, name="alpha"):
    a = float(alpha)
    if not 0.0 < a < 1.0:
        raise ValidationError(f"{name} must lie in (0, 1), got {alpha}")
    return a


def _se_array(se):
    return se.se if isinstance(se, SESurfaces) else np.asarray(se, dtype=float)


def pci(fit, se, alpha=0.05):
    """Pointwise ``100(1 - alpha)%`` intervals ``beta +- z_{1-alpha/2} se``."""
    alpha = _check_alpha(alpha)
    s = _se_array(se)
    est = fit.beta_inside()
    if s.shape != est.shape:
        raise ValidationError(f"standard errors have shape {s.shape}, estimates {est.shape}")
    z = norm.ppf(1.0 - alpha / 2.0)
    p1 = est.shape[0]
    return Band(
        lower=est - z * s,
        upper=est + z * s,
        estimate=est,
        se=s,
        alpha_nominal=alpha,
        alpha_adjusted=np.full(p1, alpha),
        kind="PCI",
        inside_mask=fit.inside_mask,
        boundary=[None] * p1,
    )


def significance_map(band):
    """``+1`` where ``0 < lower``, ``-1`` where ``upper < 0``, else ``0``."""
    codes = np.zeros(band.lower.shape, dtype=np.int8)
    codes[band.lower > 0] = 1
    codes[band.upper < 0] = -1
    return SignificanceMap(codes=codes, inside_mask=band.inside_mask)


def default_alpha_grid(alpha0=0.05, size=60):
    """``size`` log-spaced levels in ``[1e-3, alpha0]``, descending."""
    alpha0 = _check_alpha(alpha0, "alpha0")
    lo = min(1e-3, alpha0)
    g = np.logspace(np.log10(alpha0), np.log10(lo), size)
    g[0], g[-1] = alpha0, lo  # exact end points
    return g


# --------------------------------------------------------------- resampling
def _seed_root(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed.entropy, tuple(seed.spawn_key)
    return int(seed), ()


def _signs(rng, size):
    return 2.0 * rng.integers(0, 2, size=size, dtype=np.int8) - 1.0


def rademacher(seed, b, n, N):
    """Subject signs ``(n,)`` and pixel signs ``(n, N)`` of bootstrap replicate ``b``.

    Subject signs come from ``SeedSequence(seed, spawn_key=(b, 0))`` and the
    pixel signs of subject ``i`` from ``spawn_key=(b, 1, i)``, so every draw is
    fixed by its indices alone.
    """
    entropy, key = _seed_root(seed)
    d_i = _signs(np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=key + (b, 0))), n)
    d_ij = np.empty((n, N))
    for i in range(n):
        d_ij[i] = _signs(np.random.default_rng(np.random.SeedSequence(entropy, spawn_key=key + (b, 1, i))), N)
    return d_i, d_ij


def bootstrap_responses(data, fit, cov, b, seed=0):
    """Inside-pixel responses ``Y*`` of replicate ``b`` (shape ``(n, N_in)``)."""
    mu = data.X @ fit.beta_inside()
    d_i, d_ij = rademacher(seed, b, data.n, mu.shape[1])
    return mu + d_i[:, None] * cov.eta_hat + d_ij * cov.eps_hat


class _Refitter:
    """Refit with the original penalty and recompute standard errors for new responses."""

    def __init__(self, data, fit, projector):
        self.X = data.X
        self.n = data.n
        self.fit = fit
        self.projector = projector
        design = fit.design
        self.design = design
        if fit.method == "pcst":
            tri = design.eval.triangle[design.inside]
            counts = design.pixel_counts()
            N_in = design.N_in
            self.tri = tri
            self.avg = sp.csr_matrix(
                (1.0 / counts[tri], (np.arange(N_in), tri)), shape=(N_in, design.space.mesh.n_triangles)
            )
            self.S_cf = scipy.linalg.cho_factor(fit.S)
            self.kind = "pcst"
        elif "designs" in fit.extra:
            self.designs = fit.extra["designs"]
            self.A_cf = scipy.linalg.cho_factor(fit.extra["system"])
            self.kind = "multi"
        else:
            self.se_fn = BpstSE(design, fit.factor)
            self.kind = "kron"

    def beta(self, Ys):
        X = self.X
        if self.kind == "pcst":
            gamma = scipy.linalg.cho_solve(self.S_cf, X.T @ np.asarray(Ys @ self.avg))
            return gamma[:, self.tri]
        if self.kind == "kron":
            solver = self.design.solver
            Bt = self.design.Bt
            theta = solver.solve(self.fit.factor, X.T @ (Ys @ Bt))
            return theta @ Bt.T
        rhs = np.concatenate([d.Bt.T @ (Ys.T @ X[:, a]) for a, d in enumerate(self.designs)])
        sol = scipy.linalg.cho_solve(self.A_cf, rhs)
        off = np.concatenate([[0], np.cumsum([d.q for d in self.designs])])
        return np.vstack([d.Bt @ sol[off[a]:off[a + 1]] for a, d in enumerate(self.designs)])

    def se(self, Ys, beta):
        cov = _covariance(Ys - self.X @ beta, self.projector)
        if self.kind == "pcst":
            return _se_pcst_core(self.design, self.fit.S, self.n, cov.G_diag, cov.sigma2_hat)
        if self.kind == "kron":
            return self.se_fn(cov.eta_hat, cov.sigma2_hat)
        return _se_bpst_dense(self.fit, cov.eta_hat, cov.sigma2_hat)


def scc(data, fit, cov, se=None, alpha0=0.05, B=100, alpha_grid=None, seed=0, projector=None,
        warn=True, return_stats=False):
    """Simultaneous confidence corridors calibrated by the wild bootstrap.

    Parameters
    ----------
    data : Dataset
    fit : FitResult
    cov : CovarianceEstimate
        From :func:`trispline.variance.estimate_covariance` on ``fit``.
    se : SESurfaces, optional
        Standard errors of the original fit (recomputed when omitted).
    alpha0 : float
        Nominal level.
    B : int
        Bootstrap replicates; at least 50 and at least ``2 / alpha0``.
    alpha_grid : array_like, optional
        Candidate levels in ``(0, alpha0]``; default :func:`default_alpha_grid`.
    seed : int or numpy.random.SeedSequence
    projector : EtaProjector, optional
        Projection used for the subject effects; defaults to ``cov.projector``.
    warn : bool
        Issue a :class:`BoundaryWarning` when a calibrated level hits a grid end.
    return_stats : bool
        Also return the ``(B, p+1, N_in)`` array of bootstrap statistics.

    Returns
    -------
    Band
        For each coefficient, each pixel's level is the largest grid value
        whose bootstrap coverage reaches ``1 - alpha0``; the band uses the
        smallest of these over pixels.
    """
    alpha0 = _check_alpha(alpha0, "alpha0")
    B = int(B)
    if B < MIN_B:
        raise ValidationError(f"B must be at least {MIN_B}, got {B}")
    if B < 2.0 / alpha0:
        raise ValidationError(f"B={B} is too small to resolve alpha0={alpha0}; need B >= {math.ceil(2 / alpha0)}")
    grid = default_alpha_grid(alpha0) if alpha_grid is None else np.asarray(alpha_grid, dtype=float).ravel()
    if grid.size == 0 or np.any(grid <= 0) or np.any(grid > alpha0 * (1 + 1e-12)):
        raise ValidationError("alpha_grid values must lie in (0, alpha0]")
    grid = np.sort(grid)[::-1]
    projector = projector or cov.projector
    if projector is None:
        projector = make_projector(fit.design)
    if se is None:
        se = standard_errors(data, fit, cov)
    se0 = _se_array(se)
    est = fit.beta_inside()
    _inside_Y(data, fit.design)  # pixel-set check

    refit = _Refitter(data, fit, projector)
    p1, N_in = est.shape
    stats = np.empty((B, p1, N_in))
    mu = data.X @ est
    for b in range(B):
        d_i, d_ij = rademacher(seed, b, data.n, N_in)
        Ys = mu + d_i[:, None] * cov.eta_hat + d_ij * cov.eps_hat
        beta_b = refit.beta(Ys)
        se_b = refit.se(Ys, beta_b)
        diff = np.abs(beta_b - est)
        stats[b] = np.divide(diff, se_b, out=np.zeros_like(diff), where=se_b > 0)

    # covered at level a  <=>  t_b <= z_{1-a/2}; count needed for tau >= 1 - alpha0
    k = int(math.ceil((1.0 - alpha0) * B - 1e-9))
    k = min(max(k, 1), B)
    qk = np.partition(stats, k - 1, axis=0)[k - 1]  # (p1, N_in)
    zgrid = norm.ppf(1.0 - grid / 2.0)  # increasing along the descending grid
    # index of first (largest) grid level with z >= qk
    pos = np.searchsorted(zgrid, qk, side="left")
    alpha_pix = np.where(pos < grid.size, grid[np.minimum(pos, grid.size - 1)], np.nan)

    alpha_hat = np.empty(p1)
    boundary = []
    for l in range(p1):
        worst = int(pos[l].max())
        if worst >= grid.size:
            alpha_hat[l] = grid[-1]
            boundary.append("lower")
        else:
            alpha_hat[l] = grid[worst]
            boundary.append("upper" if worst == 0 and np.isclose(grid[0], alpha0) else None)
    if warn:
        for l, flag in enumerate(boundary):
            if flag == "lower":
                warnings.warn(
                    f"coefficient {l}: no grid level reaches bootstrap coverage {1 - alpha0:.3g}; "
                    f"using the smallest grid level {grid[-1]:.3g}",
                    BoundaryWarning,
                    stacklevel=2,
                )
            elif flag == "upper":
                warnings.warn(
                    f"coefficient {l}: calibrated level equals the nominal level {alpha0:.3g}",
                    BoundaryWarning,
                    stacklevel=2,
                )
    z = norm.ppf(1.0 - alpha_hat / 2.0)[:, None]
    band = Band(
        lower=est - z * se0,
        upper=est + z * se0,
        estimate=est,
        se=se0,
        alpha_nominal=alpha0,
        alpha_adjusted=alpha_hat,
        kind="SCC",
        inside_mask=fit.inside_mask,
        boundary=boundary,
        alpha_pixel=alpha_pix,
        B=B,
    )
    return (band, stats) if return_stats else band
