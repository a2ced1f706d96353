import numpy as np
import pytest

from trispline import io as tio
from trispline.exceptions import ValidationError


def test_read_table_header_detection_and_errors(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("a,b\n1,2\n3,4\n")
    vals, cols = tio.read_table(p)
    assert cols == ["a", "b"] and vals.tolist() == [[1, 2], [3, 4]]
    p.write_text("1,2\n3,4\n")
    assert tio.read_table(p)[1] is None
    p.write_text("1,2\n3\n")
    with pytest.raises(ValidationError, match="line 2: expected 2 fields"):
        tio.read_table(p)
    p.write_text("1,2\n3,x\n")
    with pytest.raises(ValidationError, match="line 2, column 2"):
        tio.read_table(p)
    p.write_text("1,2\n3,\n")
    with pytest.raises(ValidationError, match="missing value"):
        tio.read_table(p)
    assert np.isnan(tio.read_table(p, allow_nan=True)[0][1, 1])
    p.write_text("1,inf\n")
    with pytest.raises(ValidationError, match="non-finite"):
        tio.read_table(p)
    p.write_text("")
    with pytest.raises(ValidationError, match="no data"):
        tio.read_table(p)
    with pytest.raises(FileNotFoundError):
        tio.read_table(tmp_path / "missing.csv")


def test_read_dataset_shape_checks(tmp_path):
    np.savetxt(tmp_path / "X.csv", np.column_stack([np.ones(3), [0.0, 1.0, 2.0]]), delimiter=",")
    np.savetxt(tmp_path / "Y.csv", np.zeros((3, 4)), delimiter=",")
    np.savetxt(tmp_path / "P.csv", np.zeros((5, 2)), delimiter=",")
    with pytest.raises(ValidationError):
        tio.read_dataset(tmp_path / "X.csv", tmp_path / "Y.csv", tmp_path / "P.csv")
    np.savetxt(tmp_path / "P.csv", np.random.default_rng(0).random((4, 2)), delimiter=",")
    data = tio.read_dataset(tmp_path / "X.csv", tmp_path / "Y.csv", tmp_path / "P.csv")
    assert data.Y.shape == (3, 4)


def test_coefficient_and_surface_round_trip(tmp_path):
    g = [np.arange(5.0) / 3, -np.arange(5.0)]
    tio.write_coefficients(tmp_path / "c.csv", np.array(g))
    back = tio.read_coefficients(tmp_path / "c.csv")
    assert all(np.array_equal(a, b) for a, b in zip(g, back))
    pix = np.random.default_rng(1).random((6, 2))
    vals = np.random.default_rng(2).standard_normal(6)
    inside = np.array([1, 1, 0, 1, 0, 1], dtype=bool)
    tio.write_surface(tmp_path / "s.csv", pix, vals[inside], inside)
    z, v = tio.read_surface(tmp_path / "s.csv")
    assert np.array_equal(z, pix)
    assert np.array_equal(v[inside], vals[inside]) and np.all(np.isnan(v[~inside]))


def test_pgm_round_trip(tmp_path):
    g = (np.arange(7) + 0.5) / 7
    pix = np.column_stack([a.ravel() for a in np.meshgrid(g, g[:5], indexing="ij")])
    vals = pix[:, 0] + 2 * pix[:, 1]
    inside = pix[:, 0] < 0.8
    assert tio.write_pgm(tmp_path / "a.pgm", pix, vals, inside)
    img = tio.read_pgm(tmp_path / "a.pgm")
    assert img.shape == (5, 7)
    assert img.max() == 255 and (img == 0).sum() == (~inside).sum() and (img == 1).sum() >= 1
    # first raster byte equal to a whitespace code must survive
    codes = np.where(np.arange(len(pix)) % 2 == 0, 1, -1)
    assert tio.write_pgm(tmp_path / "b.pgm", pix, codes, None, palette={1: 10, -1: 32, 0: 128})
    img = tio.read_pgm(tmp_path / "b.pgm")
    assert set(np.unique(img)) == {10, 32}
    assert not tio.write_pgm(tmp_path / "c.pgm", np.random.default_rng(0).random((5, 2)), np.ones(5))


def test_config_round_trip(tmp_path):
    cfg = {"rho": [0.1, 2.0], "d": 5, "method": "bpst", "images": True}
    (tmp_path / "c.txt").write_text(tio.dump_config(cfg))
    loaded = tio.load_config(tmp_path / "c.txt")
    assert set(loaded) == set(cfg)
    (tmp_path / "bad.txt").write_text("rho 3\n")
    with pytest.raises(ValidationError, match="line 1"):
        tio.load_config(tmp_path / "bad.txt")
