import json

import numpy as np
import pytest

from trispline import io as tio
from trispline.cli import main
from trispline.mesh import rectangle_mesh, save_mesh


def write_inputs(root, n=12, m=12, noise=0.3, seed=0, mesh=None):
    rng = np.random.default_rng(seed)
    g = (np.arange(m) + 0.5) / m
    pix = np.column_stack([a.ravel() for a in np.meshgrid(g, g, indexing="ij")])
    X = np.column_stack([np.ones(n), rng.standard_normal(n)])
    beta = np.vstack([1 + pix[:, 0] ** 2, pix[:, 1] - 0.5])
    Y = X @ beta + noise * rng.standard_normal((n, len(pix)))
    np.savetxt(root / "X.csv", X, delimiter=",", header="intercept,x1", comments="")
    np.savetxt(root / "Y.csv", Y, delimiter=",")
    np.savetxt(root / "P.csv", pix, delimiter=",", header="z1,z2", comments="")
    save_mesh(mesh or rectangle_mesh(2, 2), root / "m.json")
    return ["--mesh", str(root / "m.json"), "--x", str(root / "X.csv"), "--y", str(root / "Y.csv"),
            "--pixels", str(root / "P.csv")]


@pytest.fixture()
def inputs(tmp_path):
    return tmp_path, write_inputs(tmp_path)


def test_fit_happy_path_and_check(inputs, capsys):
    root, base = inputs
    out = root / "out"
    rc = main(["fit", *base, "-d", "2", "-r", "0", "--rho-grid", "1e-3,1,100", "--out", str(out), "--images",
               "--threads", "1"])
    assert rc == 0
    line = capsys.readouterr().out.strip()
    assert line.startswith("method=bpst rho=") and "cv_score=" in line and "wall_time=" in line
    run = json.loads((out / "run.json").read_text())
    for f in run["files"]:
        assert (out / f).is_file()
    assert (out / "beta_0.pgm").is_file() and (out / "beta_0.json").is_file()
    assert tio.read_pgm(out / "beta_0.pgm").shape == (12, 12)
    z, v = tio.read_surface(out / "beta_surface_0.csv")
    assert z.shape == (144, 2) and np.all(np.isfinite(v))
    assert main(["check", str(out)]) == 0
    assert "ok" in capsys.readouterr().out.lower()


def test_check_detects_tampering(inputs, capsys):
    root, base = inputs
    out = root / "out"
    assert main(["fit", *base, "-d", "2", "-r", "0", "--rho", "0.1", "--out", str(out)]) == 0
    lines = (out / "coefficients.csv").read_text().splitlines()
    head, first = lines[0], lines[1].split(",")
    first[-1] = str(float(first[-1]) + 1.0)
    (out / "coefficients.csv").write_text("\n".join([head, ",".join(first), *lines[2:]]) + "\n")
    capsys.readouterr()
    assert main(["check", str(out)]) != 0


def test_missing_file_exit_2(inputs, capsys):
    root, base = inputs
    base = list(base)
    base[base.index("--pixels") + 1] = str(root / "nope.csv")
    assert main(["fit", *base]) == 2
    assert "nope.csv" in capsys.readouterr().err


def test_usage_errors(inputs, capsys):
    root, base = inputs
    assert main([]) == 2
    assert main(["fit", "--x", "a.csv"]) == 2
    assert main(["fit", *base, "--method", "pcst", "-d", "2"]) == 2
    assert main(["scc", *base, "--B", "10"]) == 2
    assert main(["fit", *base, "--threads", "0"]) == 2
    assert main(["simulate", "--design", "nope"]) == 2
    assert main(["simulate", "--design", "ex1-smooth", "--reps", "0"]) == 2
    assert main(["--version"]) == 0


def test_bad_csv_line_reported(inputs, capsys):
    root, base = inputs
    text = (root / "X.csv").read_text().splitlines()
    text[3] = "1,abc"
    (root / "X.csv").write_text("\n".join(text) + "\n")
    assert main(["fit", *base]) == 2
    assert "line 4" in capsys.readouterr().err


def test_pcst_empty_triangle_exit_3(tmp_path, capsys):
    # the pixels cover only the left half of the mesh
    mesh = rectangle_mesh(2, 1, (0, 2, 0, 1))
    base = write_inputs(tmp_path, mesh=mesh)
    assert main(["fit", *base, "--method", "pcst"]) == 3
    err = capsys.readouterr().err
    assert "triangle" in err


def test_io_error_exit_4(inputs, capsys):
    root, base = inputs
    blocker = root / "file"
    blocker.write_text("x")
    assert main(["fit", *base, "-d", "2", "-r", "0", "--rho", "1", "--out", str(blocker / "sub")]) == 4


def test_scc_outputs(inputs, capsys):
    root, base = inputs
    out = root / "scc"
    rc = main(["scc", *base, "-d", "2", "-r", "0", "--rho", "0.01", "--B", "50", "--out", str(out), "--pci",
               "--images"])
    assert rc == 0
    text = capsys.readouterr().out
    assert "beta_0: alpha_hat=" in text and "beta_1: alpha_hat=" in text
    run = json.loads((out / "run.json").read_text())
    assert len(run["alpha_adjusted"]) == 2
    lo = tio.read_surface(out / "scc_lower_1.csv")[1]
    hi = tio.read_surface(out / "scc_upper_1.csv")[1]
    plo = tio.read_surface(out / "pci_lower_1.csv")[1]
    assert np.all(lo <= hi) and np.all(lo <= plo + 1e-12)
    codes, _ = tio.read_table(out / "significance_0.csv")
    assert set(np.unique(codes[:, 1])) <= {-1.0, 0.0, 1.0}
    assert codes[:, 1].min() >= -1
    # the intercept 1 + z1^2 is clearly positive
    assert np.mean(codes[:, 1] == 1) > 0.9
    assert main(["check", str(out)]) == 0
    # reusing a fit directory's settings
    assert main(["scc", *base, "--from-fit", str(out), "--B", "50", "--out", str(root / "again")]) == 0
    again = json.loads((root / "again" / "run.json").read_text())
    assert again["alpha_adjusted"] == run["alpha_adjusted"]


def test_scc_boundary_warning_on_noiseless_data(tmp_path, capsys):
    base = write_inputs(tmp_path, noise=0.0)
    rc = main(["scc", *base, "-d", "2", "-r", "0", "--rho", "0", "--B", "50", "--out", str(tmp_path / "o")])
    assert rc == 0
    cap = capsys.readouterr()
    assert "warning" in cap.err and "nominal" in cap.err
    assert "upper grid boundary" in cap.out


def test_cv_table(inputs, capsys):
    root, base = inputs
    out = root / "cv"
    assert main(["cv", *base, "-d", "2", "-r", "0", "--rho-grid", "0.001,1,1000", "--out", str(out)]) == 0
    assert capsys.readouterr().out.startswith("best rho=")
    vals, cols = tio.read_table(out / "cv_table.csv")
    assert cols == ["rho", "score"] and vals.shape == (3, 2)


def test_config_precedence_and_round_trip(inputs, capsys):
    root, base = inputs
    cfg = root / "run.cfg"
    cfg.write_text("# defaults\nrho = 5\nd = 2\nr = 0\nout = %s\n" % (root / "fromcfg"))
    assert main(["fit", *base, "--config", str(cfg), "--rho", "0.5"]) == 0
    run = json.loads((root / "fromcfg" / "run.json").read_text())
    assert run["rho"] == [0.5, 0.5] and run["d"] == 2
    # the written effective configuration reproduces the run
    eff = root / "fromcfg" / "config.txt"
    assert main(["fit", "--config", str(eff), "--out", str(root / "replay")]) == 0
    a = (root / "fromcfg" / "beta_surface_1.csv").read_text()
    b = (root / "replay" / "beta_surface_1.csv").read_text()
    assert a == b
    replay = tio.load_config(root / "replay" / "config.txt")
    assert replay | {"out": str(root / "fromcfg")} == tio.load_config(eff)
    cfg.write_text("nonsense = 1\n")
    assert main(["fit", *base, "--config", str(cfg)]) == 2


def test_mesh_info(inputs, capsys):
    root, _ = inputs
    assert main(["mesh-info", "horseshoe-coarse", "--json"]) == 0
    info = json.loads(capsys.readouterr().out)
    assert info["vertices"] == 73 and info["triangles"] == 90
    assert main(["mesh-info", str(root / "m.json"), "--pixels", str(root / "P.csv"), "--n", "50"]) == 0
    assert "triangles" in capsys.readouterr().out
    assert main(["mesh-info", str(root / "missing.json")]) == 2


def test_simulate_tables_and_determinism(tmp_path, capsys):
    args = ["simulate", "--design", "ex1-smooth", "--n", "20", "--reps", "2", "--seed", "7", "--method", "both",
            "--rho", "1", "--threads", "1"]
    assert main([*args, "--out", str(tmp_path / "a")]) == 0
    assert main([*args, "--out", str(tmp_path / "b")]) == 0
    a = (tmp_path / "a" / "mse_table.csv").read_bytes()
    assert a == (tmp_path / "b" / "mse_table.csv").read_bytes()
    rows = a.decode().strip().splitlines()
    assert len(rows) == 3 and rows[1].split(",")[5] == "bpst" and rows[2].split(",")[5] == "pcst"
    assert main(["check", str(tmp_path / "a")]) == 0


def test_simulate_coverage_table(tmp_path, capsys):
    out = tmp_path / "c"
    args = ["simulate", "--design", "ex2-slice5", "--n", "20", "--reps", "1", "--coverage", "--B", "50",
            "--rho", "1e-2", "--out", str(out), "--threads", "1"]
    assert main(args) == 0
    text = (out / "coverage_table.csv").read_text().splitlines()
    assert text[0].split(",")[7:] == [f"coverage_beta{l}" for l in range(3)] + [f"width_beta{l}" for l in range(3)]
    assert len(text) == 2
