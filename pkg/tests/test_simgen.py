import numpy as np
import pytest

from trispline.exceptions import ValidationError
from trispline.fit import fit_bpst
from trispline.simgen import (
    MethodConfig,
    SimDesign,
    _design_for,
    _truncated_normal,
    analytic_G,
    coverage_table,
    domain,
    generate,
    make_design,
    mse,
    mse_table,
    run_monte_carlo,
)


@pytest.mark.parametrize("name, count", [("horseshoe", 3182), ("slice5", 3476), ("slice35", 5203)])
def test_inside_pixel_counts(name, count):
    dom = domain(name)
    assert int(dom.inside.sum()) == count
    assert len(dom.pixels) == (100 * 50 if name == "horseshoe" else 79 * 95)


def test_noiseless_limit():
    for name in ("ex1-smooth", "ex1-jump", "ex2-slice5"):
        des = make_design(name, n=6, lam=(0.0, 0.0), sigma=0.0)
        data, truth, G = generate(des, seed=3)
        assert np.array_equal(data.Y, data.X @ truth)
        assert np.all(G == 0)
        assert np.all(np.abs(data.X[:, 1:]) <= 3)


def test_outside_pixels_are_pure_noise():
    des = make_design("ex1-smooth", n=5)
    data, truth, _ = generate(des, seed=1)
    out = ~domain("horseshoe").inside
    assert np.all(truth[:, out] == 0)
    assert 0.5 * des.sigma < data.Y[:, out].std() < 1.5 * des.sigma


def test_reproducibility():
    des = make_design("ex2-slice5", n=4)
    a, _, _ = generate(des, seed=12)
    b, _, _ = generate(des, seed=12)
    c, _, _ = generate(des, seed=13)
    assert a.Y.tobytes() == b.Y.tobytes() and a.X.tobytes() == b.X.tobytes()
    assert a.Y.tobytes() != c.Y.tobytes()


def test_covariate_moments():
    rng = np.random.default_rng(0)
    X = _truncated_normal(rng, (10_000, 2), cov=[[1.0, 0.5], [0.5, 1.0]])
    c = np.cov(X.T)
    assert 0.45 <= c[0, 1] <= 0.55
    assert np.abs(X).max() <= 3
    # variance of a standard normal truncated to [-3, 3] is 0.9733
    x = _truncated_normal(rng, (10_000, 1))
    assert 0.95 <= x.var() <= 1.0


def test_process_covariance_at_large_n():
    des = make_design("ex1-smooth", n=10_000, lam=(0.2, 0.05), sigma=0.0)
    data, truth, _ = generate(des, seed=5)
    dom = domain("horseshoe")
    rng = np.random.default_rng(1)
    idx = np.flatnonzero(dom.inside)
    j = rng.choice(idx, 20)
    k = rng.choice(idx, 20)
    eta_j = data.Y[:, j] - data.X @ truth[:, j]
    eta_k = data.Y[:, k] - data.X @ truth[:, k]
    del data
    sample = np.mean(eta_j * eta_k, axis=0)
    exact = np.array([analytic_G(des, dom.pixels[a][None], dom.pixels[b][None])[0, 0] for a, b in zip(j, k)])
    # relative where the covariance is not near zero
    scale = np.sqrt(analytic_G(des, dom.pixels[j]) * analytic_G(des, dom.pixels[k]))
    assert np.all(np.abs(sample - exact) <= 0.1 * np.maximum(np.abs(exact), 0.5 * scale))
    xi_var = np.var((eta_j[:, 0]) / np.sqrt(analytic_G(des, dom.pixels[j[:1]])[0]))
    assert 0.95 <= xi_var <= 1.05


def test_mse_trivial():
    des = make_design("ex1-smooth", n=6, lam=(0.0, 0.0), sigma=0.0)
    data, truth, _ = generate(des, seed=0)
    dom = domain("horseshoe")
    design = _design_for(dom.fit_mesh, 5, 0, "horseshoe", dom.pixels)
    fit = fit_bpst(data, design, 1.0)
    fit.beta_surfaces[:] = truth
    assert np.all(mse(fit, truth) == 0)
    fit.beta_surfaces[:] = truth + 0.1
    assert np.allclose(mse(fit, truth), 0.01)


def test_design_validation():
    with pytest.raises(ValidationError, match="unknown domain"):
        SimDesign("moon", "smooth")
    with pytest.raises(ValidationError):
        SimDesign("horseshoe", "example2")
    with pytest.raises(ValidationError):
        SimDesign("horseshoe", "smooth", lam=(0.01, 0.1))
    with pytest.raises(ValidationError):
        SimDesign("horseshoe", "smooth", sigma=-1)
    with pytest.raises(ValidationError):
        SimDesign("slice5", "example2", resolution=(100, 50))
    with pytest.raises(ValidationError, match="unknown design"):
        make_design("ex3")
    with pytest.raises(ValidationError):
        MethodConfig(method="kernel")


def test_single_noiseless_replicate_is_exact(monkeypatch):
    import trispline.simgen as simgen

    # polynomial truths of degree <= 5 are reproduced exactly by the quintic space
    def polynomial_truth(design, z):
        z1, z2 = z[:, 0], z[:, 1]
        return np.vstack([5 * ((z1 - 0.5) ** 2 + (z2 - 0.5) ** 2), -1.5 * z1**3 + 1.5 * z2**3, 2 - z1 * z2])

    monkeypatch.setattr(simgen, "truth_surfaces", polynomial_truth)
    des = make_design("ex2-slice5", n=20, lam=(0.0, 0.0), sigma=0.0, seed=2)
    res = run_monte_carlo(des, MethodConfig("bpst", d=5, r=1, rho=0.0), reps=1, coverage=True, B=50)
    assert np.all(res.mse_mean() < 1e-16)
    assert np.all(res.coverage() == 1.0)


def test_tables_and_errors():
    des = make_design("ex1-smooth", n=20)
    res = run_monte_carlo(des, MethodConfig("pcst"), reps=2)
    text = mse_table([res])
    header, row = text.strip().splitlines()
    assert header.split(",")[:7] == ["design", "n", "lambda1", "lambda2", "sigma", "method", "reps"]
    assert row.startswith("horseshoe-smooth,20,")
    with pytest.raises(ValidationError):
        run_monte_carlo(des, MethodConfig("pcst"), reps=0)
    with pytest.raises(ValidationError):
        coverage_table([res])
