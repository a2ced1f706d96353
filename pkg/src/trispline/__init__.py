"""Penalized bivariate splines on triangulations for image-on-scalar regression."""

from .exceptions import (
    EmptyTriangleError,
    MeshError,
    NumericalError,
    TrisplineError,
    ValidationError,
)
from .mesh import MeshQuality, Triangulation, load_mesh, locate, quality, save_mesh, suggest_triangle_count
from .spline_space import SplineSpace, build_eval_matrix
from .fit import Dataset, Design, FitResult, cross_validate, fit_bpst, fit_bpst_cv, fit_pcst
from .variance import CovarianceEstimate, SESurfaces, estimate_covariance, se_bpst, se_pcst, standard_errors
from .inference import Band, BoundaryWarning, SignificanceMap, pci, scc, significance_map
from .simgen import SimDesign, generate, make_design, run_monte_carlo
from .estimator import BPSTRegressor, PCSTRegressor

__version__ = "0.1.0"

__all__ = [
    "BPSTRegressor",
    "Band",
    "BoundaryWarning",
    "CovarianceEstimate",
    "Dataset",
    "Design",
    "EmptyTriangleError",
    "FitResult",
    "MeshError",
    "MeshQuality",
    "NumericalError",
    "PCSTRegressor",
    "SESurfaces",
    "SignificanceMap",
    "SimDesign",
    "SplineSpace",
    "Triangulation",
    "TrisplineError",
    "ValidationError",
    "build_eval_matrix",
    "cross_validate",
    "estimate_covariance",
    "fit_bpst",
    "fit_bpst_cv",
    "fit_pcst",
    "generate",
    "load_mesh",
    "locate",
    "make_design",
    "pci",
    "quality",
    "run_monte_carlo",
    "save_mesh",
    "scc",
    "se_bpst",
    "se_pcst",
    "significance_map",
    "standard_errors",
    "suggest_triangle_count",
]
