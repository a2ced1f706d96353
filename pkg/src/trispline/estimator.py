"""scikit-learn style estimators for image-on-scalar regression.

``fit(X, Y, pixels=...)`` takes covariates ``X`` of shape ``(n, p)``, images
``Y`` of shape ``(n, N)`` and pixel centres of shape ``(N, 2)``; ``predict``
returns fitted mean images.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from . import _fixtures
from ._validation import check_alpha, check_covariates, check_images, check_pixels
from .exceptions import ValidationError
from .fit import Dataset, Design, fit_bpst, fit_bpst_cv, fit_pcst
from .inference import pci, scc, significance_map
from .mesh import Triangulation, load_mesh
from .spline_space import SplineSpace
from .variance import estimate_covariance, make_projector, standard_errors

__all__ = ["BPSTRegressor", "PCSTRegressor", "resolve_mesh"]


def resolve_mesh(mesh):
    """A Triangulation from an instance, a file path or a shipped fixture name."""
    if isinstance(mesh, Triangulation):
        return mesh
    if mesh is None:
        raise ValidationError("a triangulation is required")
    if isinstance(mesh, str) and mesh in _fixtures.MESH_FILES:
        return _fixtures.shipped_mesh(mesh)
    return load_mesh(Path(mesh))


class _TriangulationRegressor(RegressorMixin, BaseEstimator):
    _method = None

    def _dataset(self, X, Y, pixels):
        X = check_covariates(X, self.fit_intercept)
        Y = check_images(Y, X.shape[0])
        if pixels is None:
            raise ValidationError("pixels are required")
        P = check_pixels(pixels, Y.shape[1])
        return Dataset(X=X, Y=Y, pixels=P)

    def _eta_design(self, design):
        if self.eta_mesh is None and self.eta_d is None:
            return design
        mesh = resolve_mesh(self.eta_mesh) if self.eta_mesh is not None else design.space.mesh
        d = self.eta_d if self.eta_d is not None else design.space.d
        r = self.eta_r if self.eta_r is not None else min(design.space.r, d)
        return Design(SplineSpace(mesh, d, r), design.pixels)

    def _post_fit(self, data, result):
        self.fit_result_ = result
        self.data_ = data
        self.design_ = result.design
        self.coef_ = result.beta_surfaces
        self.inside_mask_ = result.inside_mask
        self.rho_ = result.rho
        self.n_features_in_ = data.n_coef - (1 if self.fit_intercept else 0)
        eta_design = self._eta_design(result.design)
        self.projector_ = make_projector(result.design, None if eta_design is result.design else eta_design)
        self.covariance_ = estimate_covariance(data, result, projector=self.projector_)
        self.se_ = standard_errors(data, result, self.covariance_)
        return self

    def predict(self, X):
        """Fitted mean images ``X @ beta``, NaN outside the domain."""
        check_is_fitted(self, "coef_")
        Xf = check_covariates(X, self.fit_intercept)
        if Xf.shape[1] != self.coef_.shape[0]:
            raise ValidationError(f"X has {Xf.shape[1]} columns, expected {self.coef_.shape[0]}")
        out = Xf @ self.coef_
        out[:, ~self.inside_mask_] = np.nan
        return out

    def score(self, X, Y, sample_weight=None):
        """Coefficient of determination over inside pixels."""
        pred = self.predict(X)[:, self.inside_mask_]
        Y = check_images(Y, pred.shape[0])[:, self.inside_mask_]
        ss_res = np.sum((Y - pred) ** 2)
        ss_tot = np.sum((Y - Y.mean(axis=0)) ** 2)
        return 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0

    def standard_errors(self):
        check_is_fitted(self, "se_")
        return self.se_

    def confidence_bands(self, kind="scc", alpha=0.05, B=100, alpha_grid=None, seed=0, warn=True):
        """Pointwise (``'pci'``) or simultaneous (``'scc'``) bands on the training data."""
        check_is_fitted(self, "fit_result_")
        alpha = check_alpha(alpha)
        if kind == "pci":
            return pci(self.fit_result_, self.se_, alpha)
        if kind != "scc":
            raise ValidationError(f"kind must be 'pci' or 'scc', got {kind!r}")
        return scc(self.data_, self.fit_result_, self.covariance_, se=self.se_, alpha0=alpha, B=B,
                   alpha_grid=alpha_grid, seed=seed, projector=self.projector_, warn=warn)

    def significance(self, **band_kw):
        return significance_map(self.confidence_bands(**band_kw))


class BPSTRegressor(_TriangulationRegressor):
    """Penalized bivariate spline fit of every coefficient image.

    Parameters
    ----------
    mesh : Triangulation, path or fixture name
    d : int, default 5
    r : int, default 1
    rho : float or array_like, optional
        Fixed penalty; when omitted it is chosen by ``cv``-fold cross-validation.
    rho_grid : array_like, optional
    cv : int, default 5
    per_coefficient : bool, default False
        Cross-validate one penalty per coefficient on the Cartesian grid.
    random_state : int, default 0
        Seeds the fold assignment.
    fit_intercept : bool, default True
    eta_mesh, eta_d, eta_r : optional
        Space for the subject effects (defaults to the fit's space).
    """

    _method = "bpst"

    def __init__(self, mesh=None, d=5, r=1, rho=None, rho_grid=None, cv=5, per_coefficient=False,
                 random_state=0, fit_intercept=True, eta_mesh=None, eta_d=None, eta_r=None):
        self.mesh = mesh
        self.d = d
        self.r = r
        self.rho = rho
        self.rho_grid = rho_grid
        self.cv = cv
        self.per_coefficient = per_coefficient
        self.random_state = random_state
        self.fit_intercept = fit_intercept
        self.eta_mesh = eta_mesh
        self.eta_d = eta_d
        self.eta_r = eta_r

    def fit(self, X, Y, pixels=None):
        data = self._dataset(X, Y, pixels)
        space = SplineSpace(resolve_mesh(self.mesh), self.d, self.r)
        design = Design(space, data.pixels)
        if self.rho is not None:
            res = fit_bpst(data, design, self.rho)
        else:
            res = fit_bpst_cv(data, design, self.rho_grid, K=self.cv, seed=self.random_state,
                              per_coefficient=self.per_coefficient)
        return self._post_fit(data, res)


class PCSTRegressor(_TriangulationRegressor):
    """Piecewise-constant fit: ordinary least squares on triangle-averaged images.

    Parameters
    ----------
    mesh : Triangulation, path or fixture name
        Every triangle must contain at least ``p + 1`` pixels.
    fit_intercept : bool, default True
    eta_mesh, eta_d, eta_r : optional
        Space for the subject effects; a smooth space on a coarser mesh is
        recommended since the degree-0 space absorbs pixel noise.
    """

    _method = "pcst"

    def __init__(self, mesh=None, fit_intercept=True, eta_mesh=None, eta_d=None, eta_r=None):
        self.mesh = mesh
        self.fit_intercept = fit_intercept
        self.eta_mesh = eta_mesh
        self.eta_d = eta_d
        self.eta_r = eta_r

    def fit(self, X, Y, pixels=None):
        data = self._dataset(X, Y, pixels)
        design = Design(SplineSpace(resolve_mesh(self.mesh), 0, 0), data.pixels)
        return self._post_fit(data, fit_pcst(data, design))
