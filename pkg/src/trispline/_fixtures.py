"""Builders for the shipped domains, pixel grids and triangulations.

The horseshoe is the classic test domain with arms ``x in [0, 3]``,
``0.1 <= |y| <= 0.9``, a half-annulus bend for ``x < 0`` and half-disk caps of
radius 0.4 at ``(3, +-0.5)``. Both horseshoe meshes share one boundary polygon:
the fine mesh only subdivides boundary segments of the coarse one, so both
classify pixels identically. The same holds for the coarse and fine meshes of
each slice domain.

The two brain-slice stand-ins are smooth closed curves on the unit square,
scaled so that the requested number of pixel centres of the 79 x 95 grid fall
inside.
"""

from __future__ import annotations

import json
from functools import lru_cache
from importlib import resources

import numpy as np

from .exceptions import ValidationError
from .mesh import Triangulation

HS_R = 0.5  # centreline radius of the bend
HS_HALF = 0.4  # half width of the band
HS_LEN = 3.0

HORSESHOE_SHAPE = (100, 50)
SLICE_SHAPE = (79, 95)
HORSESHOE_PIXELS = 3182
SLICE_PIXELS = {"slice5": 3476, "slice35": 5203}


# ----------------------------------------------------------------- horseshoe
def _centreline(s_top, s_bend, s_bot):
    """Centre points, outward normals and bend angle (NaN in the arms)."""
    pts, nrm, ang = [], [], []
    for x in s_top:  # top arm, from the cap end toward x = 0
        pts.append((x, HS_R))
        nrm.append((0.0, 1.0))
        ang.append(np.nan)
    for th in s_bend:
        pts.append((HS_R * np.cos(th), HS_R * np.sin(th)))
        nrm.append((np.cos(th), np.sin(th)))
        ang.append(th)
    for x in s_bot:
        pts.append((x, -HS_R))
        nrm.append((0.0, -1.0))
        ang.append(np.nan)
    return np.array(pts), np.array(nrm), np.array(ang)


def _coarse_columns():
    top = np.linspace(HS_LEN, 0.0, 8)
    bend = np.linspace(np.pi / 2, 3 * np.pi / 2, 5)[1:-1]
    bot = np.linspace(0.0, HS_LEN, 8)
    return top, bend, bot


def _strip(cols_c, cols_n, offsets, boundary_override=None):
    """Vertices and triangles of a structured band; rows are offsets across the band."""
    m = len(cols_c)
    nr = len(offsets)
    V = np.zeros((m * nr, 2))
    for c in range(m):
        for k, o in enumerate(offsets):
            V[c * nr + k] = cols_c[c] + o * cols_n[c]
    if boundary_override is not None:
        for (c, k), xy in boundary_override.items():
            V[c * nr + k] = xy
    tris = []
    for c in range(m - 1):
        for k in range(nr - 1):
            a, b = c * nr + k, c * nr + k + 1
            a2, b2 = (c + 1) * nr + k, (c + 1) * nr + k + 1
            if (c + k) % 2 == 0:
                tris += [(a, a2, b2), (a, b2, b)]
            else:
                tris += [(a, a2, b), (b, a2, b2)]
    return V, tris


def _cap_outer_points(centre, side):
    """The 10 coarse arc points of a cap, ordered from the outer row to the inner row."""
    # side = +1 for the top cap (outer row at y = 0.9), -1 for the bottom
    th = np.linspace(np.pi / 2, -np.pi / 2, 10) * side
    return np.column_stack([centre[0] + HS_HALF * np.cos(th), centre[1] + HS_HALF * np.sin(th)])


def horseshoe_coarse():
    """Coarse horseshoe mesh: 73 vertices and 90 triangles."""
    top, bend, bot = _coarse_columns()
    c, nrm, _ = _centreline(top, bend, bot)
    offsets = np.array([-HS_HALF, 0.0, HS_HALF])
    V, tris = _strip(c, nrm, offsets)
    V = [tuple(v) for v in V]
    nr = len(offsets)
    m = len(c)
    for end, centre_col, side in ((0, 0, 1), (m - 1, m - 1, -1)):
        centre = np.array(V[centre_col * nr + 1])
        arc = _cap_outer_points(centre, side)
        ids = [centre_col * nr + 2]
        for p in arc[1:-1]:
            V.append(tuple(p))
            ids.append(len(V) - 1)
        ids.append(centre_col * nr + 0)
        ctr = centre_col * nr + 1
        for a, b in zip(ids[:-1], ids[1:]):
            tris.append((ctr, a, b))
    return Triangulation(np.array(V), np.array(tris))


def horseshoe_fine():
    """Fine horseshoe mesh (346 triangles) on the coarse mesh's boundary polygon.

    Every triangle holds at least two pixel centres of the 100 x 50 grid, so
    the piecewise-constant fit with one covariate is well defined.
    """
    return polygon_mesh(boundary_loop(horseshoe_coarse()), 0.2125, clearance=0.5)


_HS_GRID = {"h": 0.04518, "x0": -1.009}


def horseshoe_pixels(h=None, x0=None):
    """Pixel centres of the 100 x 50 horseshoe image (row-major in x, then y)."""
    h = _HS_GRID["h"] if h is None else h
    x0 = _HS_GRID["x0"] if x0 is None else x0
    nx, ny = HORSESHOE_SHAPE
    xs = x0 + (np.arange(nx) + 0.5) * h
    ys = (np.arange(ny) - ny / 2 + 0.5) * h
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


def horseshoe_coords(z):
    """Signed distance along the centreline ``a`` and offset from it ``d``."""
    z = np.atleast_2d(np.asarray(z, dtype=float))
    x, y = z[:, 0], z[:, 1]
    q = np.pi * HS_R / 2
    a = np.zeros_like(x)
    d = np.zeros_like(x)
    up = (x >= 0) & (y > 0)
    lo = (x >= 0) & (y <= 0)
    bend = x < 0
    a[up] = q + x[up]
    d[up] = y[up] - HS_R
    a[lo] = -q - x[lo]
    d[lo] = -HS_R - y[lo]
    a[bend] = -np.arctan(y[bend] / x[bend]) * HS_R
    d[bend] = np.hypot(x[bend], y[bend]) - HS_R
    return a, d


# --------------------------------------------------------------------- slices
def slice_pixels():
    """Pixel centres of the 79 x 95 grid over the unit square."""
    nx, ny = SLICE_SHAPE
    xs = (np.arange(nx) + 0.5) / nx
    ys = (np.arange(ny) + 0.5) / ny
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([X.ravel(), Y.ravel()])


_SLICE_CENTRE = np.array([0.5031, 0.4983])


def _slice_radius(name, theta):
    if name == "slice35":
        # superellipse, exponent 2.6, semi-axes 0.42 x 0.47
        c, s = np.abs(np.cos(theta)), np.abs(np.sin(theta))
        e = 2.6
        return 1.0 / ((c / 0.42) ** e + (s / 0.47) ** e) ** (1.0 / e)
    if name == "slice5":
        # lobed outline with a notch at the bottom
        return 0.36 * (1.0 + 0.10 * np.cos(2 * theta) + 0.07 * np.cos(3 * theta + 0.4)
                       - 0.09 * np.exp(-((theta + np.pi / 2) ** 2) / 0.05))
    raise ValidationError(f"unknown slice domain {name!r}")


SLICE_BOUNDARY = {"slice5": 22, "slice35": 24}


def slice_polygon(name, scale, n_boundary=None):
    """Domain polygon with vertices at equally spaced angles around a fixed centre."""
    n_boundary = n_boundary or SLICE_BOUNDARY[name]
    th = np.linspace(-np.pi, np.pi, n_boundary, endpoint=False) + 0.013
    r = scale * _slice_radius(name, th)
    return _SLICE_CENTRE + np.column_stack([r * np.cos(th), r * np.sin(th)])


def _point_in_polygon(pts, poly):
    x, y = pts[:, 0], pts[:, 1]
    inside = np.zeros(len(pts), dtype=bool)
    px, py = poly[:, 0], poly[:, 1]
    pxn, pyn = np.roll(px, -1), np.roll(py, -1)
    for x0, y0, x1, y1 in zip(px, py, pxn, pyn):
        cond = (y0 > y) != (y1 > y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
        inside ^= cond & (x < xint)
    return inside


@lru_cache(maxsize=None)
def _slice_scale(name, target):
    """Bisection on the homothety factor; the pixel count is monotone in it."""
    pix = slice_pixels()
    lo, hi = 0.3, 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        cnt = int(_point_in_polygon(pix, slice_polygon(name, mid)).sum())
        if cnt == target:
            return mid
        if cnt < target:
            lo = mid
        else:
            hi = mid
    raise RuntimeError(f"could not hit {target} pixels for {name}")


def slice_boundary(name):
    return slice_polygon(name, _slice_scale(name, SLICE_PIXELS[name]))


def slice_mesh(name, spacing, subdivide=1):
    """Triangulate a slice polygon, splitting each edge into ``subdivide`` pieces."""
    return polygon_mesh(slice_boundary(name), spacing, subdivide=subdivide)


def polygon_mesh(poly, spacing, subdivide=None, clearance=0.6):
    """Delaunay triangulation of a simple polygon from its boundary and a hexagonal lattice.

    Each polygon edge is split into collinear pieces, ``subdivide`` of them or
    enough to keep pieces no longer than ``spacing`` when ``subdivide`` is None,
    so meshes built from one polygon cover the same domain. Raises if the kept
    triangles do not reproduce the polygon boundary exactly.
    """
    from scipy.spatial import Delaunay

    poly = np.asarray(poly, dtype=float)
    nxt = np.roll(poly, -1, axis=0)
    pieces = []
    for p0, p1 in zip(poly, nxt):
        k = subdivide or max(1, int(np.ceil(np.linalg.norm(p1 - p0) / spacing - 1e-9)))
        t = np.arange(k) / k
        pieces.append(p0 + t[:, None] * (p1 - p0))
    bnd = np.vstack(pieces)
    dy = spacing * np.sqrt(3) / 2
    lo = bnd.min(axis=0) - spacing
    hi = bnd.max(axis=0) + spacing
    rows = []
    for k, y in enumerate(np.arange(lo[1], hi[1], dy)):
        xs = np.arange(lo[0], hi[0], spacing) + (spacing / 2 if k % 2 else 0.0)
        rows.append(np.column_stack([xs, np.full_like(xs, y)]))
    lattice = np.vstack(rows)
    lattice = lattice[_point_in_polygon(lattice, poly)]
    seg = np.linalg.norm(np.roll(bnd, -1, axis=0) - bnd, axis=1).max()
    lattice = lattice[_distance_to_polyline(lattice, poly) > clearance * max(spacing, seg)]
    pts = np.vstack([bnd, lattice])
    tri = Delaunay(pts).simplices
    P = pts[tri]
    cent = P.mean(axis=1)
    area = 0.5 * np.abs((P[:, 1, 0] - P[:, 0, 0]) * (P[:, 2, 1] - P[:, 0, 1])
                        - (P[:, 1, 1] - P[:, 0, 1]) * (P[:, 2, 0] - P[:, 0, 0]))
    # flat triangles spanning collinear boundary points lie on the boundary itself
    keep = _point_in_polygon(cent, poly) & (area > 1e-9 * area.sum())
    mesh = Triangulation(pts, tri[keep])
    nb = len(bnd)
    want = {tuple(sorted((k, (k + 1) % nb))) for k in range(nb)}
    got = {tuple(sorted(e[:2])) for e in mesh.boundary_edges.tolist()}
    if want != got:
        raise RuntimeError("Delaunay mesh does not conform to the domain polygon")
    return mesh


def boundary_loop(mesh):
    """Boundary vertices of a simply connected mesh, in walking order."""
    nbr = {}
    for a, b, _ in mesh.boundary_edges.tolist():
        nbr.setdefault(a, []).append(b)
        nbr.setdefault(b, []).append(a)
    start = min(nbr)
    loop = [start]
    prev, cur = None, start
    while True:
        nxt = [v for v in nbr[cur] if v != prev]
        nxt = nxt[0] if prev is not None else min(nbr[cur])
        if nxt == start:
            break
        loop.append(nxt)
        prev, cur = cur, nxt
    if len(loop) != len(nbr):
        raise ValidationError("mesh boundary is not a single closed loop")
    return mesh.vertices[loop]


def _distance_to_polyline(pts, poly):
    a = poly
    b = np.roll(poly, -1, axis=0)
    ab = b - a
    best = np.full(len(pts), np.inf)
    for s in range(len(a)):
        t = np.clip(((pts - a[s]) @ ab[s]) / (ab[s] @ ab[s]), 0.0, 1.0)
        d = np.linalg.norm(pts - (a[s] + t[:, None] * ab[s]), axis=1)
        best = np.minimum(best, d)
    return best


# ----------------------------------------------------------------- shipped data
MESH_FILES = {
    "horseshoe-coarse": "horseshoe_coarse.json",
    "horseshoe-fine": "horseshoe_fine.json",
    "slice5-bpst": "slice5_bpst.json",
    "slice5-pcst": "slice5_pcst.json",
    "slice35-bpst": "slice35_bpst.json",
    "slice35-pcst": "slice35_pcst.json",
}


@lru_cache(maxsize=None)
def shipped_mesh(name):
    """Load one of the shipped triangulations by name (see ``MESH_FILES``)."""
    if name not in MESH_FILES:
        raise ValidationError(f"unknown mesh fixture {name!r}; choose from {sorted(MESH_FILES)}")
    text = resources.files("trispline").joinpath("data", MESH_FILES[name]).read_text(encoding="utf-8")
    obj = json.loads(text)
    return Triangulation(obj["vertices"], obj["triangles"])

BUILDERS = {
    "horseshoe-coarse": horseshoe_coarse,
    "horseshoe-fine": horseshoe_fine,
    "slice5-bpst": lambda: slice_mesh("slice5", 0.12),
    "slice5-pcst": lambda: slice_mesh("slice5", 0.04, 3),
    "slice35-bpst": lambda: slice_mesh("slice35", 0.14),
    "slice35-pcst": lambda: slice_mesh("slice35", 0.04, 3),
}


def write_fixtures(directory):
    """Regenerate every shipped mesh into ``directory``."""
    from pathlib import Path

    from .mesh import save_mesh

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    for name, build in BUILDERS.items():
        save_mesh(build(), out / MESH_FILES[name])


if __name__ == "__main__":  # pragma: no cover
    import sys

    write_fixtures(sys.argv[1] if len(sys.argv) > 1 else resources.files("trispline").joinpath("data"))
