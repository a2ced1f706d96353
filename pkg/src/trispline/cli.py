"""Command-line interface.

Subcommands: ``fit``, ``scc``, ``cv``, ``simulate``, ``mesh-info`` and ``check``.
Every option can also be given in a flat ``key = value`` file passed with
``--config``; options on the command line take precedence.

Exit codes: 0 success, 2 usage or validation error, 3 numerical failure,
4 input/output error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from . import io as tio
from .exceptions import NumericalError, TrisplineError, ValidationError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

GRAY_PALETTE = {-1: 64, 0: 128, 1: 255}


class UsageError(ValidationError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ----------------------------------------------------------------- parsing
def _floats(text):
    try:
        vals = [float(t) for t in str(text).replace(";", ",").split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("expected at least one number")
    return vals


def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


def _add_common(p):
    p.add_argument("--config", help="flat key = value file with defaults for any option")
    p.add_argument("--threads", type=int, help="worker/BLAS thread cap (default: $TRISPLINE_THREADS or all cores)")


def _add_data(p):
    p.add_argument("--mesh", help="triangulation: JSON file, vertices/triangles CSV directory or fixture name")
    p.add_argument("--x", dest="x", help="covariate CSV (n rows, intercept column first, header)")
    p.add_argument("--y", dest="y", help="image CSV (n rows, N columns)")
    p.add_argument("--pixels", help="pixel-centre CSV (N rows: z1, z2)")
    p.add_argument("--method", choices=["bpst", "pcst"], default="bpst", help="estimator (default bpst)")
    p.add_argument("-d", "--degree", dest="d", type=int, default=None, help="spline degree (default 5; 0 for pcst)")
    p.add_argument("-r", "--smoothness", dest="r", type=int, default=None, help="smoothness (default 1; 0 for pcst)")
    p.add_argument("--rho", type=_floats, help="fixed penalty, one value or one per coefficient")
    p.add_argument("--rho-grid", dest="rho_grid", type=_floats, help="penalty grid for cross-validation")
    p.add_argument("--K", dest="K", type=int, default=5, help="cross-validation folds (default 5)")
    p.add_argument("--per-coefficient", dest="per_coefficient", type=_bool, nargs="?", const=True, default=False,
                   help="cross-validate one penalty per coefficient")
    p.add_argument("--seed", type=int, default=0, help="seed for folds and bootstrap (default 0)")
    p.add_argument("--eta-mesh", dest="eta_mesh", help="triangulation for the subject effects (default: fit mesh)")
    p.add_argument("--eta-d", dest="eta_d", type=int, help="degree for the subject effects (default: fit degree)")
    p.add_argument("--eta-r", dest="eta_r", type=int, help="smoothness for the subject effects")
    p.add_argument("--out", default="out", help="output directory (default ./out)")
    p.add_argument("--images", type=_bool, nargs="?", const=True, default=False, help="also write PGM images")


def build_parser():
    parser = _Parser(prog="trispline", description="Image-on-scalar regression with splines on triangulations.")
    parser.add_argument("--version", action="version", version=f"trispline {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("fit", help="fit coefficient images and standard errors")
    _add_common(p)
    _add_data(p)

    p = sub.add_parser("scc", help="fit, then build simultaneous confidence corridors")
    _add_common(p)
    _add_data(p)
    p.add_argument("--alpha0", type=float, default=0.05, help="nominal level (default 0.05)")
    p.add_argument("--B", dest="B", type=int, default=100, help="bootstrap replicates (default 100)")
    p.add_argument("--alpha-grid", dest="alpha_grid", type=_floats, help="candidate levels in (0, alpha0]")
    p.add_argument("--pci", type=_bool, nargs="?", const=True, default=False, help="also write pointwise intervals")
    p.add_argument("--from-fit", dest="from_fit", help="reuse method, space and penalty from a fit output directory")

    p = sub.add_parser("cv", help="cross-validation table of the penalty")
    _add_common(p)
    _add_data(p)

    p = sub.add_parser("simulate", help="Monte Carlo study on a named simulation design")
    _add_common(p)
    p.add_argument("--design", help="ex1-smooth, ex1-jump, ex2-slice5 or ex2-slice35")
    p.add_argument("--n", type=int, help="subjects per replicate (design default)")
    p.add_argument("--sigma", type=float, help="noise standard deviation (design default)")
    p.add_argument("--lambda", dest="lam", type=_floats, help="process variances lambda1,lambda2")
    p.add_argument("--reps", type=int, default=100, help="replicates (default 100)")
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument("--method", choices=["bpst", "pcst", "both"], default="bpst", help="estimator(s) (default bpst)")
    p.add_argument("-d", "--degree", dest="d", type=int, help="spline degree (design default)")
    p.add_argument("-r", "--smoothness", dest="r", type=int, help="smoothness (design default)")
    p.add_argument("--rho", type=float, help="fixed penalty instead of cross-validation")
    p.add_argument("--coverage", type=_bool, nargs="?", const=True, default=False, help="also run SCC coverage")
    p.add_argument("--B", dest="B", type=int, default=100, help="bootstrap replicates (default 100)")
    p.add_argument("--alpha0", type=float, default=0.05, help="nominal level (default 0.05)")
    p.add_argument("--out", default="out", help="output directory (default ./out)")
    p.add_argument("--progress", type=_bool, nargs="?", const=True, default=True, help="progress on stderr")

    p = sub.add_parser("mesh-info", help="summary and quality of a triangulation")
    _add_common(p)
    p.add_argument("mesh_pos", nargs="?", metavar="MESH", help="mesh path or fixture name")
    p.add_argument("--mesh", help="mesh path or fixture name")
    p.add_argument("--pixels", help="pixel CSV to count pixels per triangle")
    p.add_argument("--n", type=int, help="sample size for the suggested triangle count")
    p.add_argument("--json", type=_bool, nargs="?", const=True, default=False, help="print JSON")

    p = sub.add_parser("check", help="reload an output directory and re-verify its invariants")
    _add_common(p)
    p.add_argument("directory", nargs="?", help="output directory of fit, scc or simulate")
    p.add_argument("--tol", type=float, default=1e-8, help="relative tolerance (default 1e-8)")
    return parser


def _subparser(parser, name):
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            return action.choices[name]
    raise KeyError(name)


def _apply_config(sub, cfg_path):
    """Set parser defaults from a config file, converting with each option's type."""
    cfg = tio.load_config(cfg_path)
    by_dest = {a.dest: a for a in sub._actions if a.dest not in ("help", "config")}
    defaults = {}
    for key, raw in cfg.items():
        action = by_dest.get(key)
        if action is None:
            raise ValidationError(f"{cfg_path}: unknown option {key!r}")
        conv = action.type or (lambda s: s)
        try:
            val = conv(raw)
        except (argparse.ArgumentTypeError, ValueError) as exc:
            raise ValidationError(f"{cfg_path}: option {key!r}: {exc}") from None
        if action.choices is not None and val not in action.choices:
            raise ValidationError(f"{cfg_path}: option {key!r} must be one of {sorted(action.choices)}")
        defaults[key] = val
    sub.set_defaults(**defaults)


def parse_args(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        raise UsageError("trispline: a subcommand is required (fit, scc, cv, simulate, mesh-info, check)")
    if getattr(args, "config", None):
        sub = _subparser(parser, args.command)
        _apply_config(sub, args.config)
        args = parser.parse_args(argv)
    return args


def effective_config(args):
    skip = {"command", "config", "mesh_pos"}
    return {k: v for k, v in vars(args).items() if k not in skip and v is not None}


def resolve_threads(args):
    t = getattr(args, "threads", None)
    if t is None:
        env = os.environ.get("TRISPLINE_THREADS")
        if env:
            try:
                t = int(env)
            except ValueError:
                raise ValidationError(f"TRISPLINE_THREADS must be an integer, got {env!r}") from None
        else:
            t = os.cpu_count() or 1
    if t < 1:
        raise ValidationError(f"thread count must be positive, got {t}")
    return t


# ---------------------------------------------------------------- pipeline
def _require(args, *names):
    for name in names:
        if getattr(args, name, None) in (None, ""):
            raise UsageError(f"--{name.replace('_', '-')} is required")


def _check_file(label, path):
    if not Path(path).exists():
        raise ValidationError(f"{label} file not found: {path}")


def _load_inputs(args):
    _require(args, "mesh", "x", "y", "pixels")
    from ._fixtures import MESH_FILES

    for label, path in (("covariate", args.x), ("image", args.y), ("pixel", args.pixels)):
        _check_file(label, path)
    if args.mesh not in MESH_FILES:
        _check_file("mesh", args.mesh)
    from .estimator import resolve_mesh

    data = tio.read_dataset(args.x, args.y, args.pixels)
    return data, resolve_mesh(args.mesh)


def _space_params(args):
    if args.method == "pcst":
        if args.d not in (None, 0) or args.r not in (None, 0):
            raise ValidationError("the pcst method uses degree 0 and smoothness 0")
        return 0, 0
    d = 5 if args.d is None else args.d
    r = 1 if args.r is None else args.r
    return d, r


def _fit(args, data, mesh):
    from .fit import Design, fit_bpst, fit_bpst_cv, fit_pcst
    from .spline_space import SplineSpace

    d, r = _space_params(args)
    design = Design(SplineSpace(mesh, d, r), data.pixels)
    if args.method == "pcst":
        return fit_pcst(data, design)
    if args.rho is not None:
        return fit_bpst(data, design, args.rho)
    return fit_bpst_cv(data, design, args.rho_grid, K=args.K, seed=args.seed, per_coefficient=args.per_coefficient)


def _variance(args, data, fit):
    from .estimator import resolve_mesh
    from .fit import Design
    from .spline_space import SplineSpace
    from .variance import estimate_covariance, make_projector, standard_errors

    eta = None
    if args.eta_mesh is not None or args.eta_d is not None:
        mesh = resolve_mesh(args.eta_mesh) if args.eta_mesh is not None else fit.design.space.mesh
        ed = args.eta_d if args.eta_d is not None else fit.design.space.d
        er = args.eta_r if args.eta_r is not None else min(fit.design.space.r, ed)
        eta = Design(SplineSpace(mesh, ed, er), data.pixels)
    proj = make_projector(fit.design, eta)
    cov = estimate_covariance(data, fit, projector=proj)
    return proj, cov, standard_errors(data, fit, cov)


def _write_fit(out, args, data, fit, cov, se, extra=None):
    tio.ensure_dir(out)
    inside = fit.inside_mask
    from .mesh import save_mesh

    save_mesh(fit.design.space.mesh, out / "mesh.json")
    tio.write_coefficients(out / "coefficients.csv", fit.gamma)
    files = ["mesh.json", "coefficients.csv", "sigma2.csv"]
    for l in range(data.n_coef):
        tio.write_surface(out / f"beta_surface_{l}.csv", data.pixels, fit.beta_surfaces[l], inside)
        tio.write_surface(out / f"se_surface_{l}.csv", data.pixels, se.se[l], inside)
        files += [f"beta_surface_{l}.csv", f"se_surface_{l}.csv"]
        if args.images:
            full = np.full(data.N, np.nan)
            full[inside] = se.se[l]
            if tio.write_pgm(out / f"beta_{l}.pgm", data.pixels, fit.beta_surfaces[l], inside):
                tio.write_pgm(out / f"se_{l}.pgm", data.pixels, full, inside)
                files += [f"beta_{l}.pgm", f"se_{l}.pgm"]
            else:
                print("warning: pixels do not form a regular lattice; images skipped", file=sys.stderr)
    tio.write_surface(out / "sigma2.csv", data.pixels, cov.sigma2_hat, inside)
    run = {
        "command": args.command,
        "version": __version__,
        "method": fit.method,
        "d": fit.design.space.d,
        "r": fit.design.space.r,
        "dimension": int(fit.design.q),
        "n": data.n,
        "n_coef": data.n_coef,
        "N": data.N,
        "N_inside": int(fit.design.N_in),
        "rho": [float(v) for v in fit.rho],
        "cv_score": fit.cv_score,
        "cv_table": [[list(k) if isinstance(k, tuple) else k, float(s)] for k, s in (fit.cv_table or [])],
        "wall_time": fit.wall_time,
        "pixels": str(Path(args.pixels).resolve()),
        "files": files,
    }
    if extra:
        run.update(extra)
    tio.write_json(out / "run.json", run)
    (out / "config.txt").write_text(tio.dump_config(effective_config(args)), encoding="utf-8")
    return run


def _summary(fit):
    rho = ",".join(f"{v:.4g}" for v in fit.rho)
    cv = "n/a" if fit.cv_score is None else f"{fit.cv_score:.6g}"
    return f"method={fit.method} rho={rho} cv_score={cv} wall_time={fit.wall_time:.2f}s"


def cmd_fit(args):
    data, mesh = _load_inputs(args)
    with _blas(args):
        fit = _fit(args, data, mesh)
        _, cov, se = _variance(args, data, fit)
    _write_fit(Path(args.out), args, data, fit, cov, se)
    print(_summary(fit))
    return EXIT_OK


def _from_fit(args):
    run_path = Path(args.from_fit) / "run.json"
    if not run_path.is_file():
        raise ValidationError(f"fit output not found: {run_path}")
    run = json.loads(run_path.read_text(encoding="utf-8"))
    args.method = run["method"]
    args.d, args.r = run["d"], run["r"]
    if run["method"] == "bpst" and args.rho is None:
        args.rho = run["rho"]


def cmd_scc(args):
    from .inference import BoundaryWarning, pci, scc, significance_map

    if args.from_fit:
        _from_fit(args)
    data, mesh = _load_inputs(args)
    with _blas(args):
        fit = _fit(args, data, mesh)
        proj, cov, se = _variance(args, data, fit)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", BoundaryWarning)
            band = scc(data, fit, cov, se=se, alpha0=args.alpha0, B=args.B, alpha_grid=args.alpha_grid,
                       seed=args.seed, projector=proj)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    out = Path(args.out)
    extra = {
        "alpha0": args.alpha0,
        "B": args.B,
        "alpha_adjusted": [float(a) for a in band.alpha_adjusted],
        "boundary": band.boundary,
        "band_width": [float(v) for v in band.width()],
        "seed": args.seed,
    }
    run = _write_fit(out, args, data, fit, cov, se, extra)
    sig = significance_map(band).full()
    files = run["files"]
    inside = fit.inside_mask
    for l in range(data.n_coef):
        tio.write_surface(out / f"scc_lower_{l}.csv", data.pixels, band.lower[l], inside)
        tio.write_surface(out / f"scc_upper_{l}.csv", data.pixels, band.upper[l], inside)
        tio.write_codes(out / f"significance_{l}.csv", sig[l])
        files += [f"scc_lower_{l}.csv", f"scc_upper_{l}.csv", f"significance_{l}.csv"]
        if args.images and tio.write_pgm(out / f"significance_{l}.pgm", data.pixels, sig[l], inside,
                                         palette=GRAY_PALETTE):
            files.append(f"significance_{l}.pgm")
    if args.pci:
        pb = pci(fit, se, args.alpha0)
        for l in range(data.n_coef):
            tio.write_surface(out / f"pci_lower_{l}.csv", data.pixels, pb.lower[l], inside)
            tio.write_surface(out / f"pci_upper_{l}.csv", data.pixels, pb.upper[l], inside)
            files += [f"pci_lower_{l}.csv", f"pci_upper_{l}.csv"]
    run["files"] = files
    tio.write_json(out / "run.json", run)
    print(_summary(fit))
    for l, (a, flag) in enumerate(zip(band.alpha_adjusted, band.boundary)):
        note = f" ({flag} grid boundary)" if flag else ""
        print(f"beta_{l}: alpha_hat={a:.4g}{note} mean_width={band.width()[l]:.4g}")
    return EXIT_OK


def cmd_cv(args):
    from .fit import Design, cross_validate
    from .spline_space import SplineSpace

    if args.method != "bpst":
        raise ValidationError("cross-validation applies to the bpst method only")
    data, mesh = _load_inputs(args)
    d, r = _space_params(args)
    with _blas(args):
        design = Design(SplineSpace(mesh, d, r), data.pixels)
        best, table = cross_validate(data, design, args.rho_grid, K=args.K, seed=args.seed,
                                     per_coefficient=args.per_coefficient)
    out = tio.ensure_dir(args.out)
    p1 = data.n_coef
    header = [f"rho_{l}" for l in range(p1)] if args.per_coefficient else ["rho"]
    rows = [(list(k) if isinstance(k, tuple) else [k]) + [s] for k, s in table]
    tio._write_rows(out / "cv_table.csv", header + ["score"], [[tio._f(v) for v in row] for row in rows])
    print("best rho=" + ",".join(f"{v:.6g}" for v in best))
    return EXIT_OK


def cmd_simulate(args):
    from . import simgen

    _require(args, "design")
    if args.reps < 1:
        raise ValidationError(f"reps must be at least 1, got {args.reps}")
    overrides = {"n": args.n, "sigma": args.sigma, "seed": args.seed}
    if args.lam is not None:
        overrides["lam"] = tuple(args.lam)
    design = simgen.make_design(args.design, **overrides)
    threads = resolve_threads(args)
    methods = ["bpst", "pcst"] if args.method == "both" else [args.method]
    if "pcst" in methods and design.domain != "horseshoe":
        raise ValidationError("piecewise-constant fits are only defined on the horseshoe designs")
    d0, r0 = simgen.DEFAULT_SPACE[design.domain]
    results = []
    for m in methods:
        cfg = simgen.MethodConfig(
            method=m,
            d=(args.d if args.d is not None else d0) if m == "bpst" else 0,
            r=(args.r if args.r is not None else r0) if m == "bpst" else 0,
            rho=args.rho,
        )
        if args.progress:
            print(f"{args.design}: method={m} n={design.n} reps={args.reps}", file=sys.stderr)
        results.append(simgen.run_monte_carlo(design, cfg, reps=args.reps, threads=threads, coverage=args.coverage,
                                              B=args.B, alpha0=args.alpha0, progress=args.progress))
    out = tio.ensure_dir(args.out)
    (out / "mse_table.csv").write_text(simgen.mse_table(results), encoding="utf-8")
    files = ["mse_table.csv"]
    if args.coverage:
        (out / "coverage_table.csv").write_text(simgen.coverage_table(results), encoding="utf-8")
        files.append("coverage_table.csv")
    run = {"command": "simulate", "version": __version__, "design": args.design, "files": files,
           "config": effective_config(args)}
    tio.write_json(out / "run.json", {k: v for k, v in run.items() if k != "config"} | {"seed": args.seed})
    (out / "config.txt").write_text(tio.dump_config(effective_config(args)), encoding="utf-8")
    for r in results:
        print(f"{args.design} {r.config.method}: mse=" + ",".join(f"{v:.4g}" for v in r.mse_mean())
              + (" coverage=" + ",".join(f"{v:.3f}" for v in r.coverage()) if args.coverage else ""))
    return EXIT_OK


def cmd_mesh_info(args):
    from .estimator import resolve_mesh
    from .mesh import quality, suggest_triangle_count

    name = args.mesh or args.mesh_pos
    if not name:
        raise UsageError("a mesh is required")
    from ._fixtures import MESH_FILES

    if name not in MESH_FILES:
        _check_file("mesh", name)
    mesh = resolve_mesh(name)
    q = quality(mesh)
    info = {
        "vertices": mesh.n_vertices,
        "triangles": mesh.n_triangles,
        "edges": mesh.n_edges,
        "interior_edges": int(len(mesh.interior_edges)),
        "boundary_edges": int(len(mesh.boundary_edges)),
        "area": float(mesh.domain_area),
        "size": float(q.size),
        "shape_parameter": float(q.shape_parameter),
        "min_angle_deg": float(np.degrees(q.min_angle)),
    }
    if args.pixels:
        _check_file("pixel", args.pixels)
        P, _ = tio.read_table(args.pixels, name="pixels")
        tri, _ = mesh.locate_many(P[:, :2])
        counts = np.bincount(tri[tri >= 0], minlength=mesh.n_triangles)
        info.update({
            "pixels": int(len(P)),
            "pixels_inside": int((tri >= 0).sum()),
            "min_pixels_per_triangle": int(counts.min()),
            "max_pixels_per_triangle": int(counts.max()),
            "empty_triangles": np.flatnonzero(counts == 0).tolist(),
        })
        if args.n:
            info["suggested_triangles_bpst"] = int(suggest_triangle_count(args.n, int((tri >= 0).sum())))
    if args.json:
        print(json.dumps(info, indent=2))
    else:
        for k, v in info.items():
            print(f"{k}: {v}")
    return EXIT_OK


# -------------------------------------------------------------------- check
class _Checker:
    def __init__(self, directory, tol):
        self.dir = Path(directory)
        self.tol = tol
        self.problems = []
        self.checked = 0

    def fail(self, msg):
        self.problems.append(msg)

    def ok(self, cond, msg):
        self.checked += 1
        if not cond:
            self.fail(msg)


def cmd_check(args):
    _require(args, "directory")
    d = Path(args.directory)
    run_path = d / "run.json"
    if not run_path.is_file():
        raise ValidationError(f"not an output directory (no run.json): {d}")
    try:
        run = json.loads(run_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{run_path}: line {exc.lineno}: invalid JSON") from exc
    chk = _Checker(d, args.tol)
    for name in run.get("files", []):
        chk.ok((d / name).is_file(), f"missing artifact {name}")
    if chk.problems:
        raise ValidationError("; ".join(chk.problems))
    if run.get("command") == "simulate":
        _check_tables(chk, run)
    else:
        _check_fit_artifacts(chk, run)
    if chk.problems:
        for p in chk.problems:
            print(f"FAIL {p}", file=sys.stderr)
        raise ValidationError(f"{len(chk.problems)} of {chk.checked} checks failed in {d}")
    print(f"ok: {chk.checked} checks passed in {d}")
    return EXIT_OK


def _check_tables(chk, run):
    import csv

    for name in run["files"]:
        with open(chk.dir / name, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        head, body = rows[0], rows[1:]
        chk.ok(head[:7] == ["design", "n", "lambda1", "lambda2", "sigma", "method", "reps"], f"{name}: unexpected header")
        chk.ok(len(body) >= 1, f"{name}: no rows")
        for row in body:
            chk.ok(len(row) == len(head), f"{name}: ragged row")
            vals = np.array([float(v) for v in row[7:]])
            chk.ok(np.all(np.isfinite(vals)) and np.all(vals >= 0), f"{name}: invalid values")
            if name == "coverage_table.csv":
                k = (len(head) - 7) // 2
                chk.ok(np.all(vals[:k] <= 1.0), f"{name}: coverage above 1")


def _check_fit_artifacts(chk, run):
    from .fit import Design
    from .mesh import load_mesh
    from .spline_space import SplineSpace

    d = chk.dir
    mesh = load_mesh(d / "mesh.json")
    space = SplineSpace(mesh, run["d"], run["r"], allow_low_degree=True)
    gamma = tio.read_coefficients(d / "coefficients.csv")
    p1 = run["n_coef"]
    chk.ok(len(gamma) == p1, f"coefficients.csv holds {len(gamma)} coefficient functions, expected {p1}")
    pix, _ = tio.read_surface(d / "beta_surface_0.csv")
    design = Design(space, pix)
    chk.ok(design.N_in == run["N_inside"], "inside-pixel count differs from run.json")
    for l, g in enumerate(gamma[:p1]):
        chk.ok(g.size == space.n_coeff, f"coefficient {l}: {g.size} entries, expected {space.n_coeff}")
        if g.size != space.n_coeff:
            continue
        scale = max(1.0, float(np.abs(g).max()))
        if space.H.shape[0]:
            chk.ok(float(np.abs(space.H @ g).max()) <= chk.tol * scale * 1e2,
                   f"coefficient {l}: smoothness conditions violated")
        zp, beta = tio.read_surface(d / f"beta_surface_{l}.csv")
        chk.ok(np.allclose(zp, pix, rtol=0, atol=1e-12), f"beta_surface_{l}.csv: pixel grid differs")
        recon = np.asarray(design.eval.B @ g)
        chk.ok(np.array_equal(np.isfinite(beta), design.inside), f"beta_surface_{l}.csv: inside mask differs")
        chk.ok(np.allclose(beta[design.inside], recon[design.inside], rtol=chk.tol, atol=chk.tol * scale),
               f"beta_surface_{l}.csv: does not match the coefficients")
        _, se = tio.read_surface(d / f"se_surface_{l}.csv")
        chk.ok(np.all(se[design.inside] > 0), f"se_surface_{l}.csv: nonpositive standard errors")
        if (d / f"scc_lower_{l}.csv").is_file():
            _, lo = tio.read_surface(d / f"scc_lower_{l}.csv")
            _, hi = tio.read_surface(d / f"scc_upper_{l}.csv")
            ins = design.inside
            chk.ok(np.all(lo[ins] <= beta[ins] + 1e-12) and np.all(beta[ins] <= hi[ins] + 1e-12),
                   f"scc band {l}: estimate outside band")
            codes, _ = tio.read_table(d / f"significance_{l}.csv", header=True)
            c = codes[:, 1].astype(int)
            expect = np.zeros(len(c), dtype=int)
            expect[ins & (lo > 0)] = 1
            expect[ins & (hi < 0)] = -1
            chk.ok(np.array_equal(c, expect), f"significance_{l}.csv: codes inconsistent with the band")
            if run.get("alpha_adjusted") is not None:
                a = run["alpha_adjusted"][l]
                chk.ok(0 < a <= run["alpha0"] * (1 + 1e-12) or run["boundary"][l] == "lower",
                       f"alpha_hat {l} outside (0, alpha0]")
    _, s2 = tio.read_surface(d / "sigma2.csv")
    chk.ok(np.all(s2[design.inside] >= 0), "sigma2.csv: negative variance")
    for name in run["files"]:
        if name.endswith(".pgm"):
            img = tio.read_pgm(d / name)
            side = json.loads((d / name).with_suffix(".json").read_text(encoding="utf-8"))
            chk.ok(list(img.shape) == side["shape"], f"{name}: shape differs from sidecar")


# --------------------------------------------------------------------- main
class _blas:
    def __init__(self, args):
        self.threads = resolve_threads(args)
        self.ctx = None

    def __enter__(self):
        from threadpoolctl import threadpool_limits

        self.ctx = threadpool_limits(limits=self.threads)
        return self

    def __exit__(self, *exc):
        self.ctx.unregister()
        return False


COMMANDS = {
    "fit": cmd_fit,
    "scc": cmd_scc,
    "cv": cmd_cv,
    "simulate": cmd_simulate,
    "mesh-info": cmd_mesh_info,
    "check": cmd_check,
}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
        resolve_threads(args)
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrisplineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
