"""Reading and writing data files and run artifacts.

All CSV output is UTF-8 with ``.`` as decimal separator. Surfaces are written
for every pixel with ``nan`` outside the domain.
"""

from __future__ import annotations

import csv
import json
import math
import os
import re
from pathlib import Path

import numpy as np

from .exceptions import ValidationError

__all__ = [
    "read_table",
    "read_dataset",
    "write_coefficients",
    "read_coefficients",
    "write_surface",
    "read_surface",
    "write_codes",
    "write_pgm",
    "read_pgm",
    "pixel_lattice",
    "load_config",
    "dump_config",
    "write_json",
]

FLOAT_FMT = "%.17g"


def _is_number(tok):
    try:
        float(tok)
    except ValueError:
        return False
    return True


def read_table(path, header="auto", allow_nan=False, name=None):
    """Numeric CSV as a 2-D array.

    Parameters
    ----------
    header : {'auto', True, False}
        With ``'auto'`` the first row is a header when any entry is not a number.
    allow_nan : bool
        Accept empty fields and ``nan`` (read as NaN).

    Returns
    -------
    values : ndarray, shape (rows, cols)
    columns : list of str or None
    """
    path = Path(path)
    label = name or str(path)
    if not path.is_file():
        raise FileNotFoundError(f"{label}: file not found: {path}")
    rows = []
    columns = None
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        for lineno, rec in enumerate(reader, start=1):
            if not rec or all(not t.strip() for t in rec):
                continue
            rec = [t.strip() for t in rec]
            if lineno == 1 and (header is True or (header == "auto" and not all(_is_number(t) or t == "" for t in rec))):
                columns = rec
                continue
            vals = []
            for col, tok in enumerate(rec, start=1):
                if tok == "" or tok.lower() == "nan":
                    if not allow_nan:
                        raise ValidationError(f"{label}: line {lineno}, column {col}: missing value")
                    vals.append(math.nan)
                    continue
                try:
                    v = float(tok)
                except ValueError:
                    raise ValidationError(f"{label}: line {lineno}, column {col}: not a number: {tok!r}") from None
                if not math.isfinite(v):
                    raise ValidationError(f"{label}: line {lineno}, column {col}: non-finite value {tok!r}")
                vals.append(v)
            if rows and len(vals) != len(rows[0]):
                raise ValidationError(f"{label}: line {lineno}: expected {len(rows[0])} fields, found {len(vals)}")
            rows.append(vals)
    if not rows:
        raise ValidationError(f"{label}: no data rows")
    if columns is not None and len(columns) != len(rows[0]):
        raise ValidationError(f"{label}: header has {len(columns)} names but rows have {len(rows[0])} fields")
    return np.array(rows, dtype=float), columns


def read_dataset(x_path, y_path, pixel_path):
    """Load ``X.csv`` (header, intercept first), ``Y.csv`` and ``pixels.csv`` into a Dataset."""
    from .fit import Dataset

    X, _ = read_table(x_path, header="auto", name="X")
    Y, _ = read_table(y_path, header="auto", allow_nan=True, name="Y")
    P, _ = read_table(pixel_path, header="auto", name="pixels")
    if P.shape[1] != 2:
        raise ValidationError(f"pixels: expected 2 columns (z1, z2), found {P.shape[1]}")
    return Dataset(X=X, Y=Y, pixels=P)


def _write_rows(path, header, rows):
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _f(v):
    return "nan" if not np.isfinite(v) else FLOAT_FMT % v


def write_coefficients(path, gamma):
    """Rows ``(l, index, value)`` of the full Bernstein coefficients of every coefficient function."""
    rows = []
    for l, g in enumerate(gamma):
        rows.extend((l, k, _f(v)) for k, v in enumerate(np.asarray(g).ravel()))
    _write_rows(path, ["l", "index", "value"], rows)


def read_coefficients(path):
    """Inverse of :func:`write_coefficients`: a list of 1-D arrays, one per ``l``."""
    A, cols = read_table(path, header=True, name=str(path))
    if cols != ["l", "index", "value"]:
        raise ValidationError(f"{path}: expected columns l,index,value, found {cols}")
    out = []
    for l in np.unique(A[:, 0]).astype(int):
        sel = A[A[:, 0] == l]
        idx = sel[:, 1].astype(int)
        if not np.array_equal(np.sort(idx), np.arange(len(idx))):
            raise ValidationError(f"{path}: coefficient indices for l={l} are not 0..{len(idx) - 1}")
        g = np.empty(len(idx))
        g[idx] = sel[:, 2]
        out.append(g)
    return out


def write_surface(path, pixels, values, inside=None):
    """Rows ``(z1, z2, value)`` for every pixel; ``nan`` where ``inside`` is False."""
    vals = np.asarray(values, dtype=float).copy()
    if inside is not None:
        full = np.full(len(pixels), np.nan)
        inside = np.asarray(inside, dtype=bool)
        if vals.size == inside.sum() and vals.size != len(pixels):
            full[inside] = vals
        else:
            full[inside] = vals[inside]
        vals = full
    _write_rows(path, ["z1", "z2", "value"], [(_f(a), _f(b), _f(v)) for (a, b), v in zip(pixels, vals)])


def read_surface(path):
    A, cols = read_table(path, header=True, allow_nan=True, name=str(path))
    if cols != ["z1", "z2", "value"]:
        raise ValidationError(f"{path}: expected columns z1,z2,value, found {cols}")
    return A[:, :2], A[:, 2]


def write_codes(path, codes):
    """Rows ``(pixel, code)`` with ``code`` in ``{-1, 0, 1}``."""
    _write_rows(path, ["pixel", "code"], [(j, int(c)) for j, c in enumerate(codes)])


# ------------------------------------------------------------------ images
def pixel_lattice(pixels, tol=1e-9):
    """Row/column indices of pixels on a regular lattice, or None.

    Returns ``(ix, iy, shape)`` so that pixel ``k`` sits at ``image[iy[k], ix[k]]``.
    """
    P = np.asarray(pixels, dtype=float)
    xs = np.unique(np.round(P[:, 0] / tol) * tol)
    ys = np.unique(np.round(P[:, 1] / tol) * tol)
    if len(xs) * len(ys) != len(P):
        return None
    ix = np.searchsorted(xs, np.round(P[:, 0] / tol) * tol)
    iy = np.searchsorted(ys, np.round(P[:, 1] / tol) * tol)
    if len(np.unique(ix * len(ys) + iy)) != len(P):
        return None
    return ix, len(ys) - 1 - iy, (len(ys), len(xs))


def write_pgm(path, pixels, values, inside=None, palette=None):
    """8-bit binary PGM with a JSON sidecar describing the gray mapping.

    Continuous values are scaled linearly from ``[min, max]`` onto ``[1, 255]``;
    pixels outside the domain are ``0``. With ``palette`` (a mapping of codes to
    gray levels) values are mapped verbatim. Returns False when the pixels do not
    form a lattice.
    """
    lat = pixel_lattice(pixels)
    if lat is None:
        return False
    ix, iy, shape = lat
    vals = np.asarray(values, dtype=float)
    ok = np.isfinite(vals) if inside is None else (np.asarray(inside, dtype=bool) & np.isfinite(vals))
    img = np.zeros(shape, dtype=np.uint8)
    meta = {"shape": list(shape), "outside": 0}
    if palette is not None:
        levels = np.zeros(len(vals), dtype=np.uint8)
        for code, gray in palette.items():
            levels[ok & (vals == code)] = gray
        meta["palette"] = {str(k): int(v) for k, v in palette.items()}
    else:
        lo = float(vals[ok].min()) if ok.any() else 0.0
        hi = float(vals[ok].max()) if ok.any() else 0.0
        span = hi - lo
        scaled = np.ones(len(vals)) if span <= 0 else 1.0 + 254.0 * (vals - lo) / span
        levels = np.where(ok, np.clip(np.rint(np.nan_to_num(scaled)), 1, 255), 0).astype(np.uint8)
        meta.update({"min": lo, "max": hi, "gray_min": 1, "gray_max": 255, "scaling": "linear"})
    img[iy, ix] = levels
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{shape[1]} {shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    write_json(path.with_suffix(".json"), meta)
    return True


def read_pgm(path):
    """Binary PGM as a ``uint8`` array of shape ``(rows, cols)``."""
    data = Path(path).read_bytes()
    # the raster starts after exactly one whitespace byte following maxval
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", data)
    if m is None:
        raise ValidationError(f"{path}: not a binary PGM file")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ValidationError(f"{path}: only 8-bit PGM is supported")
    raw = data[m.end():]
    if len(raw) != w * h:
        raise ValidationError(f"{path}: expected {w * h} pixel bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w)


# ------------------------------------------------------------------ config
def load_config(path):
    """Flat ``key = value`` file; ``#`` starts a comment. Keys use hyphens or underscores."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config: file not found: {path}")
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValidationError(f"{path}: line {lineno}: expected key = value")
            key, val = (s.strip() for s in line.split("=", 1))
            if not key:
                raise ValidationError(f"{path}: line {lineno}: empty key")
            out[key.replace("-", "_")] = val
    return out


def dump_config(cfg):
    """Inverse of :func:`load_config` for a mapping of keys to scalars or lists."""
    lines = []
    for key in sorted(cfg):
        v = cfg[key]
        if v is None:
            continue
        if isinstance(v, bool):
            s = "true" if v else "false"
        elif isinstance(v, (list, tuple)):
            s = ",".join(repr(float(x)) if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, float):
            s = repr(v)
        else:
            s = str(v)
        lines.append(f"{key} = {s}")
    return "\n".join(lines) + "\n"


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_jsonable)
        fh.write("\n")


def ensure_dir(path):
    path = Path(path)
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {path}: {exc}") from exc
    if not os.access(path, os.W_OK):
        raise OSError(f"output directory is not writable: {path}")
    return path
