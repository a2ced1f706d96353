"""Simulation designs and the Monte Carlo driver.

Two families are provided:

* ``ex1-smooth`` / ``ex1-jump`` on the horseshoe (100 x 50 pixels, one
  covariate), fitted with penalized splines on the coarse horseshoe mesh and
  with piecewise constants on the fine one;
* ``ex2-slice5`` / ``ex2-slice35`` on the brain-slice stand-ins (79 x 95
  pixels, two correlated covariates).

The coefficient functions of the horseshoe family are not available in closed
form elsewhere; the definitions below are explicit stand-ins built from the
classic horseshoe test function.
"""

from __future__ import annotations

import csv
import io
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _fixtures
from .exceptions import TrisplineError, ValidationError
from .fit import Dataset, Design, fit_bpst, fit_bpst_cv, fit_pcst
from .spline_space import SplineSpace

__all__ = [
    "SimDesign",
    "MethodConfig",
    "DESIGNS",
    "DEFAULT_SPACE",
    "MonteCarloResult",
    "mse_table",
    "coverage_table",
    "analytic_G",
    "make_design",
    "generate",
    "mse",
    "run_monte_carlo",
    "truth_surfaces",
    "eigenfunctions",
]


@dataclass(frozen=True)
class SimDesign:
    """One simulation setting.

    Parameters
    ----------
    domain : {'horseshoe', 'slice5', 'slice35'}
    coeff_kind : {'smooth', 'jump', 'example2'}
    n : int
    lam : tuple of float
        Variances ``(lambda_1, lambda_2)`` of the two process components.
    sigma : float
        Noise standard deviation.
    seed : int
    resolution : tuple of int, optional
        Must match the domain's pixel grid.
    """

    domain: str
    coeff_kind: str
    n: int = 50
    lam: tuple = (0.03, 0.006)
    sigma: float = 2.0
    seed: int = 0
    resolution: tuple | None = None

    def __post_init__(self):
        if self.domain not in ("horseshoe", "slice5", "slice35"):
            raise ValidationError(f"unknown domain fixture {self.domain!r}")
        allowed = ("smooth", "jump") if self.domain == "horseshoe" else ("example2",)
        if self.coeff_kind not in allowed:
            raise ValidationError(f"coefficient kind {self.coeff_kind!r} is not defined on {self.domain}")
        lam = tuple(float(v) for v in self.lam)
        if len(lam) != 2 or not lam[0] >= lam[1] >= 0:
            raise ValidationError("lambda must be a pair with lambda_1 >= lambda_2 >= 0")
        object.__setattr__(self, "lam", lam)
        if not self.sigma >= 0:
            raise ValidationError("sigma must be nonnegative")
        if int(self.n) < 1:
            raise ValidationError("n must be positive")
        shape = _fixtures.HORSESHOE_SHAPE if self.domain == "horseshoe" else _fixtures.SLICE_SHAPE
        if self.resolution is None:
            object.__setattr__(self, "resolution", shape)
        elif tuple(self.resolution) != shape:
            raise ValidationError(f"resolution {self.resolution} does not match the {self.domain} grid {shape}")

    @property
    def n_coef(self):
        return 2 if self.domain == "horseshoe" else 3


DESIGNS = {
    "ex1-smooth": dict(domain="horseshoe", coeff_kind="smooth", n=50, lam=(0.03, 0.006), sigma=2.0),
    "ex1-jump": dict(domain="horseshoe", coeff_kind="jump", n=50, lam=(0.03, 0.006), sigma=2.0),
    "ex2-slice5": dict(domain="slice5", coeff_kind="example2", n=50, lam=(0.1, 0.02), sigma=0.5),
    "ex2-slice35": dict(domain="slice35", coeff_kind="example2", n=50, lam=(0.1, 0.02), sigma=0.5),
}


DEFAULT_SPACE = {"horseshoe": (5, 0), "slice5": (5, 1), "slice35": (5, 1)}


def make_design(name, **overrides):
    """Named design with optional field overrides (``n``, ``lam``, ``sigma``, ``seed``)."""
    if name not in DESIGNS:
        raise ValidationError(f"unknown design {name!r}; choose from {sorted(DESIGNS)}")
    kw = dict(DESIGNS[name])
    kw.update({k: v for k, v in overrides.items() if v is not None})
    return SimDesign(**kw)


# ------------------------------------------------------------------ functions
def _fs(z):
    a, d = _fixtures.horseshoe_coords(z)
    return a + d**2


def truth_surfaces(design, z):
    """True coefficient functions at points ``z``, shape ``(p+1, len(z))``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    z1, z2 = z[:, 0], z[:, 1]
    if design.domain == "horseshoe":
        b0 = 1.0 + _fs(z) / 4.0
        b1 = 1.0 + 0.5 * np.sin(np.pi * z1 / 2.0) * np.cos(np.pi * z2)
        if design.coeff_kind == "jump":
            flip = np.where(z2 >= 0, 1.0, -1.0)
            b0, b1 = flip * b0, flip * b1
        return np.vstack([b0, b1])
    r2 = (z1 - 0.5) ** 2 + (z2 - 0.5) ** 2
    return np.vstack([5.0 * r2, -1.5 * z1**3 + 1.5 * z2**3, 2.0 - 2.0 * np.exp(-8.0 * r2)])


def eigenfunctions(design, z):
    """The two process components ``psi_1, psi_2`` at ``z``, shape ``(2, len(z))``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    z1, z2 = z[:, 0], z[:, 1]
    if design.domain == "horseshoe":
        return np.vstack([0.56 * np.sin(2 * np.pi * z1), 0.61 * np.cos(2 * np.pi * z2)])
    return np.vstack([1.488 * (np.sin(np.pi * z1) - 1.5), 1.939 * np.cos(2 * np.pi * z2)])


def analytic_G(design, z, z2=None):
    """``G(z, z') = sum_k lambda_k psi_k(z) psi_k(z')``; the diagonal when ``z2`` is None."""
    psi = eigenfunctions(design, z)
    lam = np.asarray(design.lam)[:, None]
    if z2 is None:
        return np.sum(lam * psi**2, axis=0)
    return (lam * psi).T @ eigenfunctions(design, z2)


@dataclass(frozen=True)
class Domain:
    pixels: np.ndarray
    inside: np.ndarray
    fit_mesh: str
    pcst_mesh: str


_DOMAINS: dict = {}


def domain(name):
    """Pixel grid and inside mask of a fixture domain (cached)."""
    if name not in _DOMAINS:
        if name == "horseshoe":
            pix = _fixtures.horseshoe_pixels()
            fit_mesh, pcst_mesh = "horseshoe-coarse", "horseshoe-fine"
        else:
            pix = _fixtures.slice_pixels()
            fit_mesh, pcst_mesh = f"{name}-bpst", f"{name}-pcst"
        inside = _fixtures.shipped_mesh(fit_mesh).contains(pix)
        pix.setflags(write=False)
        inside.setflags(write=False)
        _DOMAINS[name] = Domain(pix, inside, fit_mesh, pcst_mesh)
    return _DOMAINS[name]


# ----------------------------------------------------------------- generator
def _truncated_normal(rng, size, cov=None, bound=3.0):
    """Normal draws with every coordinate in ``[-bound, bound]``, by redrawing rejects."""
    n, p = size
    L = np.linalg.cholesky(np.asarray(cov)) if cov is not None else np.eye(p)
    out = np.empty((n, p))
    todo = np.arange(n)
    while len(todo):
        draw = rng.standard_normal((len(todo), p)) @ L.T
        ok = np.all(np.abs(draw) <= bound, axis=1)
        out[todo[ok]] = draw[ok]
        todo = todo[~ok]
    return out


def _rng(seed):
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(np.random.SeedSequence(int(seed)))


def generate(design, seed=None):
    """Draw one dataset.

    Returns
    -------
    data : Dataset
    truth : ndarray, shape (p+1, N)
        True coefficient surfaces (zero outside the domain).
    G_diag : ndarray, shape (N,)
        Analytic process variance (zero outside the domain).

    Notes
    -----
    Draw order: covariates, process scores, then pixel noise, from one
    generator seeded by ``seed`` (or ``design.seed``). Pixels outside the
    domain carry noise only.
    """
    dom = domain(design.domain)
    rng = _rng(design.seed if seed is None else seed)
    n = int(design.n)
    pix = dom.pixels
    inside = dom.inside
    if design.domain == "horseshoe":
        Xc = _truncated_normal(rng, (n, 1))
    else:
        Xc = _truncated_normal(rng, (n, 2), cov=[[1.0, 0.5], [0.5, 1.0]])
    X = np.column_stack([np.ones(n), Xc])
    xi = rng.standard_normal((n, 2))
    eps = rng.standard_normal((n, len(pix)))

    truth = np.zeros((X.shape[1], len(pix)))
    truth[:, inside] = truth_surfaces(design, pix[inside])
    psi = np.zeros((2, len(pix)))
    psi[:, inside] = eigenfunctions(design, pix[inside])
    eta = (xi * np.sqrt(design.lam)) @ psi
    Y = X @ truth + eta + design.sigma * eps
    Gd = np.zeros(len(pix))
    Gd[inside] = analytic_G(design, pix[inside])
    return Dataset(X=X, Y=Y, pixels=pix), truth, Gd


def mse(fit, truth, mask=None):
    """Mean over inside pixels of the squared coefficient error, per coefficient."""
    inside = fit.design.inside if mask is None else np.asarray(mask, dtype=bool)
    est = fit.beta_surfaces[:, inside]
    return np.mean((est - np.asarray(truth)[:, inside]) ** 2, axis=1)


# -------------------------------------------------------------- Monte Carlo
@dataclass(frozen=True)
class MethodConfig:
    """How to fit each replicate.

    ``mesh`` names a shipped triangulation (default: the domain's coarse mesh
    for ``bpst`` and fine mesh for ``pcst``).
    """

    method: str = "bpst"
    d: int = 5
    r: int = 0
    mesh: str | None = None
    rho: float | None = None
    rho_grid: tuple | None = None
    K: int = 5
    eta_mesh: str | None = None
    eta_d: int | None = None
    eta_r: int | None = None

    def __post_init__(self):
        if self.method not in ("bpst", "pcst"):
            raise ValidationError(f"unknown method {self.method!r}")
        if self.method == "pcst" and self.d != 0:
            object.__setattr__(self, "d", 0)
            object.__setattr__(self, "r", 0)


_SPACE_CACHE: dict = {}


def _design_for(mesh_name, d, r, pixels_key, pixels):
    key = (mesh_name, d, r, pixels_key)
    if key not in _SPACE_CACHE:
        space = SplineSpace(_fixtures.shipped_mesh(mesh_name), d, r)
        _SPACE_CACHE[key] = Design(space, pixels)
    return _SPACE_CACHE[key]


def _replicate(args):
    design, cfg, rep_seed, coverage, B, alpha0, threads = args
    from .inference import scc  # local: inference imports fit/variance only
    from .variance import make_projector, estimate_covariance, standard_errors

    with _blas_limit(threads):
        dom = domain(design.domain)
        data, truth, _ = generate(design, seed=rep_seed)
        mesh = cfg.mesh or (dom.fit_mesh if cfg.method == "bpst" else dom.pcst_mesh)
        des = _design_for(mesh, cfg.d, cfg.r, design.domain, dom.pixels)
        if not np.array_equal(des.inside, dom.inside):
            raise ValidationError(f"mesh {mesh} does not cover the {design.domain} pixels exactly")
        if cfg.method == "pcst":
            fit = fit_pcst(data, des)
        elif cfg.rho is not None:
            fit = fit_bpst(data, des, cfg.rho)
        else:
            grid = None if cfg.rho_grid is None else np.asarray(cfg.rho_grid, dtype=float)
            cv_seed = int(rep_seed.generate_state(1)[0])
            fit = fit_bpst_cv(data, des, grid, K=cfg.K, seed=cv_seed)
        row = {"mse": mse(fit, truth), "rho": float(fit.rho[0])}
        if coverage:
            eta_mesh = cfg.eta_mesh or (dom.fit_mesh if cfg.method == "bpst" else mesh)
            ed = cfg.d if cfg.eta_d is None else cfg.eta_d
            er = cfg.r if cfg.eta_r is None else cfg.eta_r
            eta_des = des if (eta_mesh, ed, er) == (mesh, cfg.d, cfg.r) else _design_for(
                eta_mesh, ed, er, design.domain, dom.pixels)
            proj = make_projector(des, None if eta_des is des else eta_des)
            cov = estimate_covariance(data, fit, projector=proj)
            se = standard_errors(data, fit, cov)
            boot_seed = rep_seed.spawn(1)[0]
            band = scc(data, fit, cov, se=se, alpha0=alpha0, B=B, seed=boot_seed, projector=proj, warn=False)
            tr = truth[:, des.inside]
            row["covered"] = np.all((band.lower <= tr) & (tr <= band.upper), axis=1)
            row["width"] = np.mean(band.upper - band.lower, axis=1)
            row["alpha_hat"] = band.alpha_adjusted
        return row


class _blas_limit:
    def __init__(self, threads):
        self.threads = threads
        self._ctx = None

    def __enter__(self):
        if self.threads:
            try:
                from threadpoolctl import threadpool_limits

                self._ctx = threadpool_limits(limits=int(self.threads))
            except ImportError:  # pragma: no cover
                self._ctx = None
        return self

    def __exit__(self, *exc):
        if self._ctx is not None:
            self._ctx.unregister()
        return False


@dataclass
class MonteCarloResult:
    design: SimDesign
    config: MethodConfig
    reps: int
    mse: np.ndarray  # (reps, p+1)
    rho: np.ndarray
    covered: np.ndarray | None = None
    width: np.ndarray | None = None
    alpha_hat: np.ndarray | None = None
    wall_time: float = 0.0
    extra: dict = field(default_factory=dict)

    def mse_mean(self):
        return self.mse.mean(axis=0)

    def coverage(self):
        return None if self.covered is None else self.covered.mean(axis=0)

    def mean_width(self):
        return None if self.width is None else self.width.mean(axis=0)


def replicate_seeds(master_seed, reps):
    """Independent per-replicate seed sequences derived from the master seed."""
    return [np.random.SeedSequence(int(master_seed), spawn_key=(r,)) for r in range(reps)]


def run_monte_carlo(design, config=None, reps=100, threads=1, coverage=False, B=100, alpha0=0.05,
                    progress=False):
    """Repeat generate-fit(-inference) ``reps`` times.

    Replicate ``r`` uses ``SeedSequence(design.seed, spawn_key=(r,))``; results
    do not depend on ``threads`` beyond floating-point summation order inside
    the linear algebra library.
    """
    config = config or MethodConfig()
    reps = int(reps)
    if reps < 1:
        raise ValidationError("reps must be at least 1")
    t0 = time.perf_counter()
    seeds = replicate_seeds(design.seed, reps)
    jobs = [(design, config, s, coverage, B, alpha0, 1 if threads and threads > 1 else threads) for s in seeds]
    rows = []
    if threads and threads > 1:
        with ProcessPoolExecutor(max_workers=int(threads)) as ex:
            for r, row in enumerate(ex.map(_replicate, jobs)):
                rows.append(row)
                _progress(progress, r + 1, reps, t0)
    else:
        for r, job in enumerate(jobs):
            try:
                rows.append(_replicate(job))
            except TrisplineError as exc:
                raise type(exc)(f"replicate {r}: {exc}") from exc
            _progress(progress, r + 1, reps, t0)
    res = MonteCarloResult(
        design=design,
        config=config,
        reps=reps,
        mse=np.array([row["mse"] for row in rows]),
        rho=np.array([row["rho"] for row in rows]),
        wall_time=time.perf_counter() - t0,
    )
    if coverage:
        res.covered = np.array([row["covered"] for row in rows])
        res.width = np.array([row["width"] for row in rows])
        res.alpha_hat = np.array([row["alpha_hat"] for row in rows])
    return res


def _progress(enabled, done, total, t0):
    if enabled:
        el = time.perf_counter() - t0
        print(f"  replicate {done}/{total}  ({el:.1f} s)", file=sys.stderr, flush=True)


FLOAT_FMT = "{:.6g}"


def _fmt(v):
    return FLOAT_FMT.format(float(v))


def mse_table(results):
    """CSV text with one row per (setting, method): mean MSE of each coefficient."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    p1 = max(r.mse.shape[1] for r in results)
    w.writerow(["design", "n", "lambda1", "lambda2", "sigma", "method", "reps"] + [f"mse_beta{l}" for l in range(p1)])
    for r in results:
        d = r.design
        w.writerow([f"{d.domain}-{d.coeff_kind}", d.n, _fmt(d.lam[0]), _fmt(d.lam[1]), _fmt(d.sigma),
                    r.config.method, r.reps] + [_fmt(v) for v in r.mse_mean()])
    return buf.getvalue()


def coverage_table(results):
    """CSV text with SCC coverage and mean width of each coefficient."""
    if any(r.covered is None for r in results):
        raise ValidationError("coverage tables need results run with coverage=True")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    p1 = max(r.covered.shape[1] for r in results)
    w.writerow(["design", "n", "lambda1", "lambda2", "sigma", "method", "reps"]
               + [f"coverage_beta{l}" for l in range(p1)] + [f"width_beta{l}" for l in range(p1)])
    for r in results:
        d = r.design
        w.writerow([f"{d.domain}-{d.coeff_kind}", d.n, _fmt(d.lam[0]), _fmt(d.lam[1]), _fmt(d.sigma),
                    r.config.method, r.reps] + [_fmt(v) for v in r.coverage()] + [_fmt(v) for v in r.mean_width()])
    return buf.getvalue()
