"""Covariance of the subject-level process, noise variance and standard errors.

Residual images are projected, without penalty, onto a spline space to give
smooth subject effects ``eta_i``; what remains is measurement noise. The
covariance ``G(z, z') = n^-1 sum_i eta_i(z) eta_i(z')`` is kept in factored form
through the ``n x q_eta`` coefficient matrix and never stored as ``N x N``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .exceptions import NumericalError, ValidationError
from .fit import Design, FitResult, _inside_Y

__all__ = [
    "CovarianceEstimate",
    "SESurfaces",
    "EtaProjector",
    "BpstSE",
    "make_projector",
    "estimate_covariance",
    "se_bpst",
    "se_pcst",
    "standard_errors",
]

SIGMA2_FLOOR = 1e-12


class EtaProjector:
    """Least-squares projection of images onto a spline space over fixed pixels.

    Parameters
    ----------
    design : Design
        Space and pixel set; the projection uses the inside pixels of ``mask``.
    mask : ndarray of bool, optional
        Pixels to use (defaults to the design's inside pixels). All of them must
        lie inside the design's triangulation.
    """

    def __init__(self, design, mask=None):
        self.design = design
        if mask is None:
            Bt = design.Bt
        else:
            mask = np.asarray(mask, dtype=bool)
            if np.any(mask & ~design.inside):
                raise ValidationError("the eta triangulation does not cover every fitted pixel")
            rows = np.flatnonzero(mask[design.inside])
            Bt = design.Bt[rows]
        self.Bt = Bt
        G = Bt.T @ Bt
        try:
            self._chol = scipy.linalg.cho_factor(G, lower=False)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(
                "the eta spline space is rank-deficient on the pixel set; "
                "use a lower degree or a coarser eta triangulation"
            ) from exc
        piv = np.diag(self._chol[0]) ** 2
        if piv.min() <= 1e-12 * piv.max():
            raise NumericalError(
                "the eta spline space is rank-deficient on the pixel set "
                f"(smallest pivot {piv.min():.3e}); use a lower degree or a coarser eta triangulation"
            )

    def project(self, R):
        """Coefficients ``(n, q_eta)`` and fitted images ``(n, N_in)`` for residual rows ``R``."""
        coef = scipy.linalg.cho_solve(self._chol, self.Bt.T @ np.asarray(R).T).T
        return coef, coef @ self.Bt.T


@dataclass
class CovarianceEstimate:
    """Estimated subject-level process and noise variance over inside pixels.

    Attributes
    ----------
    eta_hat : ndarray, shape (n, N_in)
    eta_coeffs : ndarray, shape (n, q_eta)
    eps_hat : ndarray, shape (n, N_in)
    sigma2_hat : ndarray, shape (N_in,)
    G_diag : ndarray, shape (N_in,)
    """

    eta_hat: np.ndarray
    eta_coeffs: np.ndarray
    eps_hat: np.ndarray
    sigma2_hat: np.ndarray
    G_diag: np.ndarray
    projector: EtaProjector | None = None

    @property
    def n(self):
        return self.eta_hat.shape[0]

    def G(self, j, k):
        """``G(z_j, z_k)`` for inside-pixel indices ``j`` and ``k`` (broadcasting)."""
        j = np.asarray(j)
        k = np.asarray(k)
        return np.einsum("i...,i...->...", self.eta_hat[:, j], self.eta_hat[:, k]) / self.n

    def G_quadratic(self, v):
        """``v^T G v`` for a weight vector over inside pixels."""
        w = self.eta_hat @ np.asarray(v, dtype=float)
        return float(w @ w) / self.n


def _covariance(R, projector):
    coef, eta = projector.project(R)
    eps = R - eta
    return CovarianceEstimate(
        eta_hat=eta,
        eta_coeffs=coef,
        eps_hat=eps,
        sigma2_hat=np.mean(eps**2, axis=0),
        G_diag=np.mean(eta**2, axis=0),
        projector=projector,
    )


def estimate_covariance(data, fit, eta_space=None, projector=None):
    """Smooth each subject's residual image and split it into process and noise.

    Parameters
    ----------
    data : Dataset
    fit : FitResult
    eta_space : SplineSpace or Design, optional
        Space for the subject effects; defaults to the fit's own space.
    projector : EtaProjector, optional
        Reuse a factorization across calls.
    """
    design = fit.design
    if projector is None:
        projector = make_projector(design, eta_space)
    Yin = _inside_Y(data, design)
    R = Yin - data.X @ fit.beta_inside()
    return _covariance(R, projector)


def make_projector(design, eta_space=None):
    """Projection onto ``eta_space`` restricted to the pixels used by ``design``."""
    if eta_space is None:
        return EtaProjector(design)
    eta_design = eta_space if isinstance(eta_space, Design) else Design(eta_space, design.pixels)
    if not np.array_equal(eta_design.pixels, design.pixels):
        raise ValidationError("the eta design was built on a different pixel set")
    return EtaProjector(eta_design, mask=design.inside)


@dataclass
class SESurfaces:
    """Pointwise standard errors, shape ``(p+1, N_in)`` over inside pixels."""

    se: np.ndarray
    method: str


class BpstSE:
    """Reusable diagonal of the sandwich variance for a factorized fit.

    With ``A^-1 = S kron G + R kron D`` and middle matrix ``S kron K0``,
    ``K0 = n^-1 C C^T + Bt^T diag(sigma2) Bt`` and ``C = Bt^T eta^T``, the
    variance of ``beta_l(z_j)`` is
    ``sum_a E[l,a]^2 omega_a h_j^T K h_j / lam_a^2`` with ``h_j = T^T Bt_j``
    and ``K = T^T K0 T``.

    Parameters
    ----------
    design : Design
    fac : DataFactor
    precompute : bool or None
        Store ``(H_a H^T)**2`` per covariate so that each call costs
        ``O(N^2)`` instead of ``O(N q^2)``. ``None`` decides from memory use.
    """

    MEMORY_BUDGET = 3e8

    def __init__(self, design, fac, precompute=None):
        self.design = design
        self.fac = fac
        self.T = design.solver.T
        self.H = design.Bt @ self.T
        self.HtT = self.T.T @ design.Bt.T  # (q, N_in)
        p1, N = fac.E.shape[0], self.H.shape[0]
        self.coef = fac.E**2 * fac.omega[None, :]  # (p1, p1): [l, a]
        self.Ha = [self.H / fac.lam[a] for a in range(p1)]
        if precompute is None:
            precompute = 8.0 * N * N * p1 <= self.MEMORY_BUDGET
        self.W = [(Ha @ self.H.T) ** 2 for Ha in self.Ha] if precompute else None

    def __call__(self, eta_hat, sigma2):
        n = eta_hat.shape[0]
        s2 = np.maximum(sigma2, SIGMA2_FLOOR)
        Ceta = self.HtT @ eta_hat.T  # (q, n)
        Ks = None if self.W is not None else (self.H.T * s2) @ self.H
        var = np.zeros((self.coef.shape[0], self.H.shape[0]))
        for a, Ha in enumerate(self.Ha):
            P = Ha @ Ceta
            v = np.einsum("jn,jn->j", P, P) / n
            if self.W is not None:
                v += self.W[a] @ s2
            else:
                v += np.einsum("jq,jq->j", Ha @ Ks, Ha)
            var += np.outer(self.coef[:, a], v)
        return np.sqrt(np.maximum(var, 0.0))


def _se_bpst_kron(design, fac, eta_hat, sigma2):
    return BpstSE(design, fac, precompute=False)(eta_hat, sigma2)


def _se_bpst_dense(fit, eta_hat, sigma2):
    designs = fit.extra["designs"]
    A = fit.extra["system"]
    S = fit.S
    n = eta_hat.shape[0]
    p1 = len(designs)
    qs = [d.q for d in designs]
    off = np.concatenate([[0], np.cumsum(qs)])
    s2 = np.maximum(sigma2, SIGMA2_FLOOR)
    M = np.zeros_like(A)
    Ce = [d.Bt.T @ eta_hat.T for d in designs]
    for a in range(p1):
        for b in range(p1):
            K0 = Ce[a] @ Ce[b].T / n + (designs[a].Bt.T * s2) @ designs[b].Bt
            M[off[a]:off[a + 1], off[b]:off[b + 1]] = S[a, b] * K0
    Ainv = scipy.linalg.inv(A)
    Ainv = 0.5 * (Ainv + Ainv.T)
    se = np.zeros((p1, designs[0].N_in))
    for l in range(p1):
        W = Ainv[:, off[l]:off[l + 1]] @ designs[l].Bt.T
        se[l] = np.sqrt(np.maximum(np.einsum("kj,kj->j", W, M @ W), 0.0))
    return se


def se_bpst(data, fit, cov):
    """Standard-error surfaces of the penalized spline coefficients.

    The plug-in sandwich ``Bt^T A {S kron K0} A Bt`` with ``A`` the inverse of
    the penalized normal-equation matrix used by the fit.
    """
    if fit.method != "bpst":
        raise ValidationError("se_bpst needs a penalized spline fit")
    if "designs" in fit.extra:
        return SESurfaces(_se_bpst_dense(fit, cov.eta_hat, cov.sigma2_hat), "bpst")
    if fit.factor is None:
        raise ValidationError("the fit carries no factorized normal equations")
    return SESurfaces(_se_bpst_kron(fit.design, fit.factor, cov.eta_hat, cov.sigma2_hat), "bpst")


def _se_pcst_core(design, S, n, G_diag, sigma2):
    mesh = design.space.mesh
    tri = design.eval.triangle[design.inside]
    A_rel = mesh.areas[tri] / mesh.domain_area
    Sinv = np.linalg.inv(S / n)
    inner = np.maximum(G_diag, 0.0) + np.maximum(sigma2, SIGMA2_FLOOR) / (design.N_in * A_rel)
    return np.sqrt(np.outer(np.diag(Sinv), inner) / n)


def se_pcst(data, fit, cov):
    """Closed-form standard errors of the piecewise-constant estimator.

    ``se_l(z) = n^-1/2 [ (S/n)^-1_ll { G(z,z) + sigma2(z) / (N A_m(z)) } ]^1/2`` with
    ``A_m(z)`` the containing triangle's share of the domain area.
    """
    if fit.method != "pcst":
        raise ValidationError("se_pcst needs a piecewise-constant fit")
    return SESurfaces(_se_pcst_core(fit.design, fit.S, data.n, cov.G_diag, cov.sigma2_hat), "pcst")


def standard_errors(data, fit, cov):
    return se_bpst(data, fit, cov) if fit.method == "bpst" else se_pcst(data, fit, cov)
