"""Input checks shared by the estimators and the command line."""

from __future__ import annotations

import numpy as np
from sklearn.utils.validation import check_array

from .exceptions import ValidationError


def check_covariates(X, fit_intercept=True):
    """2-D finite covariate matrix, with a leading column of ones when ``fit_intercept``."""
    try:
        X = check_array(X, dtype=np.float64, ensure_2d=True, ensure_min_samples=1)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    if fit_intercept:
        X = np.column_stack([np.ones(X.shape[0]), X])
    return X


def check_images(Y, n):
    """``(n, N)`` image matrix; NaN is allowed (it must fall outside the domain)."""
    try:
        Y = check_array(Y, dtype=np.float64, ensure_2d=True, ensure_all_finite="allow-nan")
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    if Y.shape[0] != n:
        raise ValidationError(f"X has {n} rows but Y has {Y.shape[0]}")
    if np.any(np.isinf(Y)):
        raise ValidationError("Y contains infinite values")
    return Y


def check_pixels(pixels, N=None):
    try:
        P = check_array(pixels, dtype=np.float64, ensure_2d=True)
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    if P.shape[1] != 2:
        raise ValidationError(f"pixels must have shape (N, 2), got {P.shape}")
    if N is not None and P.shape[0] != N:
        raise ValidationError(f"Y has {N} columns but there are {P.shape[0]} pixels")
    return P


def check_alpha(alpha, name="alpha"):
    a = float(alpha)
    if not 0.0 < a < 1.0:
        raise ValidationError(f"{name} must lie in (0, 1), got {alpha}")
    return a
