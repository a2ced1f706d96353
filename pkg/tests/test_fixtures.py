import numpy as np
import pytest

from trispline import _fixtures
from trispline.exceptions import ValidationError
from trispline.mesh import quality
from trispline.simgen import domain


def test_horseshoe_meshes():
    coarse = _fixtures.shipped_mesh("horseshoe-coarse")
    fine = _fixtures.shipped_mesh("horseshoe-fine")
    assert (coarse.n_vertices, coarse.n_triangles) == (73, 90)
    assert fine.n_triangles == 346
    dom = domain("horseshoe")
    tri, _ = fine.locate_many(dom.pixels[dom.inside])
    assert np.all(tri >= 0)
    assert np.bincount(tri, minlength=fine.n_triangles).min() >= 2
    # both meshes cover the same pixel set
    assert np.array_equal(fine.contains(dom.pixels), dom.inside)


@pytest.mark.parametrize("name", sorted(_fixtures.MESH_FILES))
def test_shipped_meshes_load(name):
    m = _fixtures.shipped_mesh(name)
    assert m.n_triangles > 0 and np.all(m.areas > 0)
    assert quality(m).min_angle > np.radians(5)


@pytest.mark.parametrize("name", ["slice5", "slice35"])
def test_slice_meshes_cover_same_pixels(name):
    dom = domain(name)
    pc = _fixtures.shipped_mesh(f"{name}-pcst")
    assert np.array_equal(pc.contains(dom.pixels), dom.inside)


def test_unknown_fixture():
    with pytest.raises(ValidationError, match="unknown mesh fixture"):
        _fixtures.shipped_mesh("square")
