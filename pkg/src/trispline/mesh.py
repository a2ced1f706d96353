"""Triangulations of polygonal domains: validation, point location, quality.

A :class:`Triangulation` is immutable after construction. Point location uses a
uniform background grid that buckets triangles by bounding box, so locating the
N pixel centres of an image costs O(N) expected time.
"""

from __future__ import annotations

import csv
import json
import math
import os
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .exceptions import MeshError, ValidationError

AREA_EPS = 1e-12
BARY_TOL = 1e-12


@dataclass(frozen=True)
class MeshQuality:
    """Size and shape diagnostics of a triangulation.

    ``size`` is the longest edge of the mesh, ``shape_parameter`` the largest
    ratio of a triangle's longest edge to its inradius and ``min_angle`` the
    smallest interior angle (radians).
    """

    size: float
    shape_parameter: float
    min_angle: float


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class Triangulation:
    """Validated triangulation of a 2D domain.

    Parameters
    ----------
    vertices : array_like, shape (V, 2)
    triangles : array_like of int, shape (T, 3)
        Vertex indices, 0-based. Clockwise triangles are reoriented.

    Attributes
    ----------
    interior_edges : ndarray, shape (E_I, 4)
        Rows ``(tri_a, tri_b, v_lo, v_hi)`` with ``tri_a < tri_b``; each
        interior edge appears exactly once.
    areas : ndarray, shape (T,)
    domain_area : float
    """

    def __init__(self, vertices, triangles):
        vertices = np.asarray(vertices, dtype=float)
        triangles = np.asarray(triangles)
        if vertices.ndim != 2 or vertices.shape[1] != 2 or len(vertices) < 3:
            raise MeshError(f"vertices must have shape (V, 2) with V >= 3, got {vertices.shape}")
        if not np.all(np.isfinite(vertices)):
            raise MeshError("vertices contain non-finite coordinates")
        if triangles.ndim != 2 or triangles.shape[1] != 3 or len(triangles) == 0:
            raise MeshError(f"triangles must have shape (T, 3), got {triangles.shape}")
        if not np.issubdtype(triangles.dtype, np.integer):
            if not np.all(triangles == np.round(triangles)):
                raise MeshError("triangle indices must be integers")
        triangles = triangles.astype(np.int64)
        if triangles.min() < 0 or triangles.max() >= len(vertices):
            raise MeshError("triangle vertex index out of range")
        repeated = np.flatnonzero(
            (triangles[:, 0] == triangles[:, 1])
            | (triangles[:, 1] == triangles[:, 2])
            | (triangles[:, 0] == triangles[:, 2])
        )
        if len(repeated):
            raise MeshError(f"degenerate triangle(s) {repeated.tolist()}: repeated vertex", repeated)

        signed = _signed_areas(vertices, triangles)
        flip = signed < 0
        if np.any(flip):
            triangles = triangles.copy()
            triangles[flip] = triangles[flip][:, [0, 2, 1]]
            signed = np.abs(signed)
        total = float(signed.sum())
        bad = np.flatnonzero(signed <= AREA_EPS * max(total, np.finfo(float).tiny))
        if len(bad):
            raise MeshError(f"degenerate triangle(s) {bad.tolist()}: area below tolerance", bad)

        self.vertices = _readonly(vertices)
        self.triangles = _readonly(triangles)
        self.areas = _readonly(signed)
        self.domain_area = total
        self._build_edges()
        self._build_locator()
        self._check_conformity()

    # ------------------------------------------------------------------ setup
    def _build_edges(self):
        tris = self.triangles
        T = len(tris)
        local = np.array([[1, 2], [2, 0], [0, 1]])  # edge opposite local vertex 0, 1, 2
        ev = tris[:, local].reshape(-1, 2)
        lo = ev.min(axis=1)
        hi = ev.max(axis=1)
        owner = np.repeat(np.arange(T), 3)
        order = np.lexsort((owner, hi, lo))
        lo, hi, owner = lo[order], hi[order], owner[order]
        key_change = np.ones(len(lo), dtype=bool)
        key_change[1:] = (lo[1:] != lo[:-1]) | (hi[1:] != hi[:-1])
        starts = np.flatnonzero(key_change)
        counts = np.diff(np.append(starts, len(lo)))
        if np.any(counts > 2):
            e = starts[np.argmax(counts > 2)]
            shared = owner[e:e + counts[counts > 2][0]]
            raise MeshError(
                f"edge ({lo[e]}, {hi[e]}) is shared by more than two triangles {shared.tolist()}",
                shared,
            )
        inner = starts[counts == 2]
        interior = np.column_stack([owner[inner], owner[inner + 1], lo[inner], hi[inner]])
        boundary = starts[counts == 1]
        self.interior_edges = _readonly(interior.astype(np.int64))
        self.n_edges = len(starts)
        self._boundary_edges = np.column_stack([lo[boundary], hi[boundary], owner[boundary]])

        # the two triangles of an interior edge must lie on opposite sides
        V = self.vertices
        for ta, tb, a, b in interior:
            wa = _off_vertex(tris[ta], a, b)
            wb = _off_vertex(tris[tb], a, b)
            sa = _orient(V[a], V[b], V[wa])
            sb = _orient(V[a], V[b], V[wb])
            if sa * sb >= 0:
                raise MeshError(f"triangles {ta} and {tb} overlap across edge ({a}, {b})", [ta, tb])

    def _build_locator(self):
        V = self.vertices
        tri_xy = V[self.triangles]  # (T, 3, 2)
        lo = tri_xy.min(axis=1)
        hi = tri_xy.max(axis=1)
        self._bbox = (V.min(axis=0), V.max(axis=0))
        span = np.maximum(self._bbox[1] - self._bbox[0], 1e-300)
        T = len(self.triangles)
        n_cells = max(1, int(math.ceil(math.sqrt(T))))
        aspect = span[0] / span[1]
        nx = max(1, int(round(n_cells * math.sqrt(aspect))))
        ny = max(1, int(round(n_cells / math.sqrt(aspect))))
        self._grid_shape = (nx, ny)
        self._cell = span / np.array([nx, ny])
        pad = 1e-9 * span
        i0 = self._cell_index(lo - pad, clip=True)
        i1 = self._cell_index(hi + pad, clip=True)
        cells, owners = [], []
        for t in range(T):
            xs = np.arange(i0[t, 0], i1[t, 0] + 1)
            ys = np.arange(i0[t, 1], i1[t, 1] + 1)
            c = (xs[:, None] * ny + ys[None, :]).ravel()
            cells.append(c)
            owners.append(np.full(len(c), t))
        cells = np.concatenate(cells)
        owners = np.concatenate(owners)
        order = np.lexsort((owners, cells))
        cells, owners = cells[order], owners[order]
        self._cell_tris = owners
        self._cell_start = np.searchsorted(cells, np.arange(nx * ny + 1))

        # affine maps (x, y, 1) -> barycentric coordinates
        M = np.ones((T, 3, 3))
        M[:, :2, :] = tri_xy.transpose(0, 2, 1)
        self._bary_map = np.linalg.inv(M)

    def _cell_index(self, pts, clip=False):
        rel = (np.asarray(pts, dtype=float) - self._bbox[0]) / self._cell
        idx = np.floor(rel).astype(np.int64)
        nx, ny = self._grid_shape
        if clip:
            idx[:, 0] = np.clip(idx[:, 0], 0, nx - 1)
            idx[:, 1] = np.clip(idx[:, 1], 0, ny - 1)
        return idx

    def _check_conformity(self):
        # a vertex lying inside another triangle or on one of its sides is a T-junction
        tri_idx, bary = self._candidates_containing(self.vertices)
        for v, t in zip(*tri_idx):
            if v not in self.triangles[t]:
                raise MeshError(f"vertex {v} lies on or inside triangle {t} (T-junction or overlap)", [t])

    # ------------------------------------------------------------ properties
    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def boundary_edges(self):
        """Boundary edges as ``(v_lo, v_hi, triangle)`` rows."""
        return self._boundary_edges.copy()

    def triangle_vertices(self, t):
        return self.vertices[self.triangles[t]]

    # -------------------------------------------------------- point location
    def barycentric(self, t, points):
        """Barycentric coordinates of ``points`` w.r.t. triangle ``t`` (no clipping)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        h = np.column_stack([pts, np.ones(len(pts))])
        return h @ self._bary_map[t].T

    def _candidates_containing(self, points):
        """All (point, triangle) pairs with the point inside or on the triangle."""
        pts = np.asarray(points, dtype=float)
        idx = self._cell_index(pts, clip=True)
        cell = idx[:, 0] * self._grid_shape[1] + idx[:, 1]
        start = self._cell_start[cell]
        count = self._cell_start[cell + 1] - start
        hits_p, hits_t = [], []
        h = np.column_stack([pts, np.ones(len(pts))])
        for k in range(int(count.max()) if len(count) else 0):
            sel = np.flatnonzero(count > k)
            t = self._cell_tris[start[sel] + k]
            b = np.einsum("pij,pj->pi", self._bary_map[t], h[sel])
            ok = np.all(b >= -BARY_TOL, axis=1)
            hits_p.append(sel[ok])
            hits_t.append(t[ok])
        if not hits_p:
            return (np.empty(0, int), np.empty(0, int)), None
        return (np.concatenate(hits_p), np.concatenate(hits_t)), None

    def locate_many(self, points):
        """Locate many points at once.

        Returns
        -------
        tri : ndarray of int, shape (m,)
            Containing triangle (lowest index on shared edges/vertices), ``-1``
            for points outside the domain.
        bary : ndarray, shape (m, 3)
            Barycentric coordinates in [0, 1] summing to one (NaN when outside).
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != 2:
            raise ValidationError(f"points must have shape (m, 2), got {pts.shape}")
        m = len(pts)
        tri = np.full(m, -1, dtype=np.int64)
        bary = np.full((m, 3), np.nan)
        finite = np.all(np.isfinite(pts), axis=1)
        lo, hi = self._bbox
        tol = 1e-9 * np.maximum(hi - lo, 1.0)
        inbox = finite & np.all(pts >= lo - tol, axis=1) & np.all(pts <= hi + tol, axis=1)
        sel_all = np.flatnonzero(inbox)
        if len(sel_all) == 0:
            return tri, bary
        sub = pts[sel_all]
        idx = self._cell_index(sub, clip=True)
        cell = idx[:, 0] * self._grid_shape[1] + idx[:, 1]
        start = self._cell_start[cell]
        count = self._cell_start[cell + 1] - start
        h = np.column_stack([sub, np.ones(len(sub))])
        found = np.zeros(len(sub), dtype=bool)
        for k in range(int(count.max())):
            sel = np.flatnonzero((count > k) & ~found)
            if len(sel) == 0:
                break
            t = self._cell_tris[start[sel] + k]
            b = np.einsum("pij,pj->pi", self._bary_map[t], h[sel])
            ok = np.all(b >= -BARY_TOL, axis=1)
            s = sel[ok]
            found[s] = True
            b = np.clip(b[ok], 0.0, 1.0)
            b /= b.sum(axis=1, keepdims=True)
            tri[sel_all[s]] = t[ok]
            bary[sel_all[s]] = b
        return tri, bary

    def contains(self, points):
        return self.locate_many(points)[0] >= 0

    def to_dict(self):
        return {"vertices": self.vertices.tolist(), "triangles": self.triangles.tolist()}

    def __repr__(self):
        return f"Triangulation(n_vertices={self.n_vertices}, n_triangles={self.n_triangles})"


def _signed_areas(V, tris):
    p0, p1, p2 = V[tris[:, 0]], V[tris[:, 1]], V[tris[:, 2]]
    return 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p1[:, 1] - p0[:, 1]) * (p2[:, 0] - p0[:, 0]))


def _orient(a, b, c):
    return np.sign((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))


def _off_vertex(tri, a, b):
    for v in tri:
        if v != a and v != b:
            return v
    raise AssertionError("triangle does not contain a third vertex")


def locate(tri, z):
    """Locate a single point.

    Returns ``(triangle_index, barycentric)`` or ``None`` when ``z`` is outside
    the domain. Points on shared edges or vertices go to the lowest-indexed
    containing triangle.
    """
    t, b = tri.locate_many(np.asarray(z, dtype=float).reshape(1, 2))
    if t[0] < 0:
        return None
    return int(t[0]), b[0]


def quality(tri):
    """Size, shape parameter and minimum angle of ``tri``."""
    P = tri.vertices[tri.triangles]
    e = np.stack(
        [
            np.linalg.norm(P[:, 1] - P[:, 2], axis=1),
            np.linalg.norm(P[:, 2] - P[:, 0], axis=1),
            np.linalg.norm(P[:, 0] - P[:, 1], axis=1),
        ],
        axis=1,
    )
    areas = np.abs(_signed_areas(tri.vertices, tri.triangles))
    degenerate = np.flatnonzero(areas <= AREA_EPS * areas.sum())
    if len(degenerate):
        raise MeshError(f"degenerate triangle(s) {degenerate.tolist()}", degenerate)
    inradius = 2.0 * areas / e.sum(axis=1)
    longest = e.max(axis=1)
    # law of cosines for the angle opposite each edge
    a, b, c = e[:, 0], e[:, 1], e[:, 2]
    cos = np.stack(
        [(b**2 + c**2 - a**2) / (2 * b * c), (a**2 + c**2 - b**2) / (2 * a * c), (a**2 + b**2 - c**2) / (2 * a * b)],
        axis=1,
    )
    angles = np.arccos(np.clip(cos, -1.0, 1.0))
    return MeshQuality(
        size=float(longest.max()),
        shape_parameter=float(np.max(longest / inradius)),
        min_angle=float(angles.min()),
    )


def suggest_triangle_count(n, N, d=5, method="bpst", c=1.0):
    """Rule-of-thumb number of triangles for a sample of ``n`` images of ``N`` pixels.

    ``min(floor(c n^(1/(2d+2)) N^(1/2)), N/10)`` for penalized splines and
    ``min(floor(c n^(-1/4) N), N/2)`` for piecewise constants; never below 1.
    """
    if n < 1 or N < 1:
        raise ValidationError("n and N must be positive")
    if d < 0:
        raise ValidationError("degree must be nonnegative")
    if not 0.3 <= c <= 2.0:
        warnings.warn(f"tuning constant c={c} outside the recommended range [0.3, 2.0]", stacklevel=2)
    method = method.lower()
    if method == "bpst":
        h = min(math.floor(c * n ** (1.0 / (2 * d + 2)) * math.sqrt(N)), math.floor(N / 10))
    elif method == "pcst":
        h = min(math.floor(c * n ** (-0.25) * N), math.floor(N / 2))
    else:
        raise ValidationError(f"unknown method {method!r}; expected 'bpst' or 'pcst'")
    return max(int(h), 1)


# --------------------------------------------------------------------- builders
def rectangle_mesh(nx, ny, bounds=(0.0, 1.0, 0.0, 1.0), diagonal="alternate"):
    """Structured triangulation of a rectangle with ``nx * ny`` cells split in two."""
    x0, x1, y0, y1 = bounds
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    verts = np.column_stack([X.ravel(), Y.ravel()])
    vid = lambda i, j: i * (ny + 1) + j  # noqa: E731
    tris = []
    for i in range(nx):
        for j in range(ny):
            a, b, c, d = vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1)
            if diagonal == "alternate" and (i + j) % 2:
                tris += [(a, b, d), (b, c, d)]
            else:
                tris += [(a, b, c), (a, c, d)]
    return Triangulation(verts, tris)


def delaunay_mesh(points):
    """Delaunay triangulation of a point set (convex hull domain)."""
    from scipy.spatial import Delaunay

    pts = np.asarray(points, dtype=float)
    return Triangulation(pts, Delaunay(pts).simplices)


# --------------------------------------------------------------------------- IO
def load_mesh(path):
    """Read a mesh from JSON or from a ``vertices.csv`` + ``triangles.csv`` directory."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"mesh file not found: {path}")
    if path.is_dir():
        verts = _read_csv_rows(path / "vertices.csv", float, 2)
        tris = _read_csv_rows(path / "triangles.csv", int, 3)
        return Triangulation(verts, tris)
    if path.suffix.lower() == ".csv":
        base = path.parent
        return Triangulation(_read_csv_rows(base / "vertices.csv", float, 2), _read_csv_rows(base / "triangles.csv", int, 3))
    try:
        obj = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict) or "vertices" not in obj or "triangles" not in obj:
        raise ValidationError(f"{path}: expected an object with 'vertices' and 'triangles'")
    return Triangulation(obj["vertices"], obj["triangles"])


def save_mesh(tri, path):
    path = Path(path)
    if path.suffix.lower() == ".json":
        path.write_text(json.dumps(tri.to_dict()), encoding="utf-8")
        return
    os.makedirs(path, exist_ok=True)
    with open(path / "vertices.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x", "y"])
        w.writerows((repr(float(x)), repr(float(y))) for x, y in tri.vertices)
    with open(path / "triangles.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["i", "j", "k"])
        w.writerows(tri.triangles.tolist())


def _read_csv_rows(path, kind, width):
    if not Path(path).exists():
        raise FileNotFoundError(f"file not found: {path}")
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or all(not c.strip() for c in row):
                continue
            try:
                vals = [kind(float(c)) if kind is int else kind(c) for c in row]
            except ValueError:
                if lineno == 1:
                    continue  # header
                raise ValidationError(f"{path}: line {lineno}: cannot parse {row!r}") from None
            if len(vals) != width:
                raise ValidationError(f"{path}: line {lineno}: expected {width} columns, got {len(vals)}")
            rows.append(vals)
    return np.array(rows)
