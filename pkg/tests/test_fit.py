import numpy as np
import pytest

from trispline.exceptions import EmptyTriangleError, NumericalError, ValidationError
from trispline.fit import (
    Dataset,
    Design,
    KroneckerSolver,
    cross_validate,
    default_rho_grid,
    fit_bpst,
    fit_bpst_cv,
    fit_pcst,
)
from trispline.mesh import Triangulation, rectangle_mesh
from trispline.spline_space import SplineSpace


def dense_normal_equations(data, design, rho):
    """Naive assembly of sum_ij U_ij U_ij^T + R kron D and sum_ij U_ij Y_ij."""
    Bt = design.Bt
    Y = data.Y[:, design.inside]
    p1, q = data.n_coef, design.q
    A = np.zeros((p1 * q, p1 * q))
    b = np.zeros(p1 * q)
    for i in range(data.n):
        for j in range(design.N_in):
            u = np.kron(data.X[i], Bt[j])
            A += np.outer(u, u)
            b += u * Y[i, j]
    A += np.kron(np.diag(np.broadcast_to(rho, (p1,))), design.space.D)
    return A, b


@pytest.fixture(scope="module")
def small():
    rng = np.random.default_rng(7)
    mesh = rectangle_mesh(2, 2)
    pix = rng.random((50, 2))
    n = 4
    X = np.column_stack([np.ones(n), rng.standard_normal(n)])
    Y = rng.standard_normal((n, 50))
    data = Dataset(X, Y, pix)
    design = Design(SplineSpace(mesh, 2, 0), pix)
    return data, design


def test_dataset_validation():
    X = np.column_stack([np.ones(3), [1.0, 2.0, 3.0]])
    P = np.zeros((4, 2))
    with pytest.raises(ValidationError, match="intercept"):
        Dataset(X[:, ::-1], np.zeros((3, 4)), P)
    with pytest.raises(ValidationError, match="collinear"):
        Dataset(np.column_stack([X, 2 * X[:, 1]]), np.zeros((3, 4)), P)
    with pytest.raises(ValidationError, match="rows"):
        Dataset(X, np.zeros((2, 4)), P)
    with pytest.raises(ValidationError, match="non-finite"):
        Dataset(np.where(X == 2.0, np.nan, X), np.zeros((3, 4)), P)
    with pytest.raises(ValidationError, match="two subjects"):
        Dataset(X[:1], np.zeros((1, 4)), P)


def test_structured_solver_equals_dense(small):
    data, design = small
    for rho in (0.0, [0.3, 2.0]):
        fit = fit_bpst(data, design, rho)
        A, b = dense_normal_equations(data, design, np.asarray(rho, dtype=float))
        theta = np.linalg.solve(A, b).reshape(data.n_coef, design.q)
        assert np.abs(fit.theta - theta).max() < 1e-9 * max(1.0, np.abs(theta).max())
        resid = np.linalg.norm(A @ fit.theta.ravel() - b) / np.linalg.norm(b)
        assert resid < 1e-8


def test_multi_space_path_matches_shared(small):
    data, design = small
    shared = fit_bpst(data, design, [0.3, 2.0])
    multi = fit_bpst(data, [design.space, design.space], [0.3, 2.0])
    assert np.abs(shared.beta_surfaces - multi.beta_surfaces).max() < 1e-10


def test_kronecker_solver_eigen_identities(small):
    _, design = small
    s = KroneckerSolver(design.G, design.space.D)
    T = s.T
    assert np.allclose(T.T @ design.G @ T, np.diag(s.mu), atol=1e-10)
    assert np.allclose(T.T @ design.space.D @ T, np.diag(s.nu), atol=1e-10)


def test_reproduction_of_representable_truth():
    rng = np.random.default_rng(2)
    mesh = rectangle_mesh(3, 2, (0, 1.5, 0, 1))
    space = SplineSpace(mesh, 5, 1)
    g = (np.arange(50) + 0.5) / 50
    pix = np.column_stack([a.ravel() for a in np.meshgrid(1.5 * g, g, indexing="ij")])
    design = Design(space, pix)
    beta = space.expand(rng.standard_normal((3, space.q)))
    n = 12
    X = np.column_stack([np.ones(n), rng.standard_normal((n, 2))])
    Y = X @ np.asarray(design.eval.B @ beta.T).T
    fit = fit_bpst(Dataset(X, Y, pix), design, 0.0)
    truth = np.asarray(design.eval.B @ beta.T).T
    assert np.abs(fit.beta_surfaces - truth).max() < 1e-8
    assert np.abs(space.H @ fit.gamma.T).max() < 1e-9
    assert np.array_equal(fit.beta_surfaces, np.asarray(design.eval.B @ fit.gamma.T).T)


def test_intercept_only_constant_fit():
    rng = np.random.default_rng(0)
    mesh = Triangulation([[0, 0], [2, 0], [0, 2]], [[0, 1, 2]])
    pix = rng.random((40, 2))
    Y = rng.standard_normal((5, 40))
    fit = fit_pcst(Dataset(np.ones((5, 1)), Y, pix), SplineSpace(mesh, 0))
    assert np.allclose(fit.beta_surfaces, Y.mean())


def test_pcst_equals_per_triangle_ols():
    rng = np.random.default_rng(5)
    mesh = rectangle_mesh(3, 3)
    n, N = 10, 200
    pix = rng.random((N, 2))
    X = np.column_stack([np.ones(n), rng.standard_normal((n, 2))])
    Y = rng.standard_normal((n, N))
    design = Design(SplineSpace(mesh, 0), pix)
    fit = fit_pcst(Dataset(X, Y, pix), design)
    tri = design.eval.triangle
    for t in range(mesh.n_triangles):
        cols = np.flatnonzero(tri == t)
        # stacked OLS over (subject, pixel) pairs on this triangle
        Xs = np.repeat(X, len(cols), axis=0)
        ys = Y[:, cols].ravel()
        coef, *_ = np.linalg.lstsq(Xs, ys, rcond=None)
        assert np.abs(fit.gamma[:, t] - coef).max() < 1e-10


def test_pcst_single_subject_triangle_average():
    rng = np.random.default_rng(1)
    mesh = rectangle_mesh(2, 2)
    pix = rng.random((80, 2))
    Y = rng.standard_normal((2, 80))
    design = Design(SplineSpace(mesh, 0), pix)
    fit = fit_pcst(Dataset(np.ones((2, 1)), Y, pix), design)
    for t in range(mesh.n_triangles):
        assert fit.gamma[0, t] == pytest.approx(Y[:, design.eval.triangle == t].mean())


def test_pcst_empty_triangle_error():
    mesh = rectangle_mesh(2, 2)
    pix = np.array([[0.1, 0.05], [0.2, 0.1], [0.3, 0.05]])
    X = np.column_stack([np.ones(3), [0.0, 1.0, 3.0]])
    with pytest.raises(EmptyTriangleError) as exc:
        fit_pcst(Dataset(X, np.ones((3, 3)), pix), SplineSpace(mesh, 0))
    assert len(exc.value.triangles) == mesh.n_triangles - 1
    with pytest.raises(ValidationError):
        fit_pcst(Dataset(X, np.ones((3, 3)), pix), SplineSpace(mesh, 1))


def test_singular_system_reports_pivot():
    mesh = rectangle_mesh(2, 2)
    pix = np.array([[0.1, 0.05], [0.2, 0.1], [0.6, 0.6]])
    X = np.column_stack([np.ones(3), [0.0, 1.0, 3.0]])
    with pytest.raises(NumericalError, match="smallest pivot|not positive definite"):
        fit_bpst(Dataset(X, np.ones((3, 3)), pix), SplineSpace(mesh, 2), 0.0)


def test_missing_inside_values_rejected(small):
    data, design = small
    Y = data.Y.copy()
    Y[0, 3] = np.nan
    with pytest.raises(ValidationError, match="missing"):
        fit_bpst(Dataset(data.X, Y, data.pixels), design, 1.0)


def test_penalty_monotonicity(small):
    data, design = small
    energies = []
    for rho in np.logspace(-3, 3, 5):
        fit = fit_bpst(data, design, rho)
        energies.append(sum(design.space.energy(g) for g in fit.gamma))
    assert all(b <= a * (1 + 1e-9) + 1e-12 for a, b in zip(energies, energies[1:]))


def brute_force_cv(data, design, rho, K, seed):
    perm = np.random.default_rng(seed).permutation(data.n)
    folds = np.array_split(perm, K)
    total = 0.0
    Y = data.Y[:, design.inside]
    for fold in folds:
        train = np.setdiff1d(np.arange(data.n), fold)
        sub = Dataset(data.X[train], data.Y[train], data.pixels)
        A, b = dense_normal_equations(sub, design, np.full(data.n_coef, rho))
        theta = np.linalg.solve(A, b).reshape(data.n_coef, design.q)
        pred = data.X[fold] @ theta @ design.Bt.T
        total += np.sum((Y[fold] - pred) ** 2) / (len(fold) * design.N_in)
    return total / K


@pytest.fixture(scope="module")
def cv_setup():
    rng = np.random.default_rng(11)
    mesh = rectangle_mesh(2, 2)
    g = (np.arange(12) + 0.5) / 12
    pix = np.column_stack([a.ravel() for a in np.meshgrid(g, g, indexing="ij")])
    design = Design(SplineSpace(mesh, 2, 0), pix)
    n = 10
    X = np.column_stack([np.ones(n), rng.standard_normal(n)])
    return rng, design, X, pix


def test_cv_noiseless_selects_zero(cv_setup):
    rng, design, X, pix = cv_setup
    beta = design.space.expand(rng.standard_normal((2, design.q)))
    Y = X @ np.asarray(design.eval.B @ beta.T).T
    best, table = cross_validate(Dataset(X, Y, pix), design, [1e3, 0.0], K=5)
    assert np.all(best == 0.0)
    assert [r for r, _ in table] == [0.0, 1e3]


def test_cv_pure_noise_prefers_heavy_penalty(cv_setup):
    rng, design, X, pix = cv_setup
    data = Dataset(X, rng.standard_normal((X.shape[0], len(pix))), pix)
    best, table = cross_validate(data, design, [1e-6, 1e6], K=5, seed=3)
    brute = {r: brute_force_cv(data, design, r, 5, 3) for r in (1e-6, 1e6)}
    for r, score in table:
        assert score == pytest.approx(brute[r], rel=1e-9)
    assert brute[1e6] < brute[1e-6]
    assert np.all(best == 1e6)


def test_cv_ties_and_validation(cv_setup):
    rng, design, X, pix = cv_setup
    data = Dataset(X, rng.standard_normal((X.shape[0], len(pix))), pix)
    best, _ = cross_validate(data, design, [2.0, 2.0, 5.0], K=2)
    with pytest.raises(ValidationError):
        cross_validate(data, design, [], K=5)
    with pytest.raises(ValidationError):
        cross_validate(data, design, [1.0], K=1)
    with pytest.raises(ValidationError):
        cross_validate(data, design, [1.0], K=11)
    with pytest.raises(ValidationError):
        cross_validate(data, design, [-1.0], K=5)


def test_cv_per_coefficient_grid(cv_setup):
    rng, design, X, pix = cv_setup
    data = Dataset(X, rng.standard_normal((X.shape[0], len(pix))), pix)
    best, table = cross_validate(data, design, [1e-2, 1e2], K=5, per_coefficient=True)
    assert len(table) == 4 and best.shape == (2,)
    scores = dict(table)
    assert scores[tuple(best)] == min(scores.values())
    fit = fit_bpst_cv(data, design, [1e-2, 1e2], per_coefficient=True)
    assert fit.cv_score == pytest.approx(min(scores.values()))


def test_default_grid_scale(cv_setup):
    _, design, X, _ = cv_setup
    g = default_rho_grid(design)
    s = design.solver.scale
    assert len(g) == 10 and g[0] == pytest.approx(1e-3 * s) and g[-1] == pytest.approx(1e5 * s)
    S = X.T @ X
    g2 = default_rho_grid(design, S=S)
    assert g2[0] == pytest.approx(1e-3 * s * np.trace(S) / 2)


def test_predict_and_rho_vector(small):
    data, design = small
    fit = fit_bpst(data, design, 1.0)
    assert fit.predict(data.X).shape == data.Y.shape
    with pytest.raises(ValidationError):
        fit_bpst(data, design, [1.0, 2.0, 3.0])
