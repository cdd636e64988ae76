"""Text formats shared by the command line tools.

Everything is plain CSV with a required header line, or flat key=value
text.  Floats are written with 17 significant digits so that re-running
a command on the same inputs produces byte-identical artifacts.
"""

import hashlib
import os

import numpy as np

from .errors import FileFormatError

_COORD_NAMES = ("x", "y", "z")


def format_float(value):
    return "%.17g" % value


def _read_csv(path):
    """Read a headed CSV into (column names, float matrix)."""
    with open(path, "r", encoding="ascii") as fh:
        lines = fh.read().splitlines()
    rows = [
        (i + 1, line.strip()) for i, line in enumerate(lines) if line.strip()
    ]
    if not rows:
        raise FileFormatError(f"{path}: empty file", 1)
    header_line, header = rows[0]
    names = [c.strip().lower() for c in header.split(",")]
    if any(not c for c in names):
        raise FileFormatError(f"{path}: empty column name in header", header_line)
    data = np.empty((len(rows) - 1, len(names)))
    for r, (lineno, line) in enumerate(rows[1:]):
        parts = line.split(",")
        if len(parts) != len(names):
            raise FileFormatError(
                f"{path}: expected {len(names)} fields, got {len(parts)}",
                lineno,
            )
        try:
            data[r] = [float(p) for p in parts]
        except ValueError:
            raise FileFormatError(
                f"{path}: non-numeric field in {line!r}", lineno
            ) from None
    return names, data


def _write_csv(path, names, columns):
    columns = [np.asarray(c) for c in columns]
    with open(path, "w", encoding="ascii") as fh:
        fh.write(",".join(names) + "\n")
        for row in zip(*columns):
            fh.write(",".join(format_float(v) for v in row) + "\n")


def _coordinate_columns(names, path):
    dim = 0
    for name in _COORD_NAMES:
        if name in names:
            dim += 1
        else:
            break
    if dim == 0:
        raise FileFormatError(f"{path}: no coordinate column (x[,y[,z]])", 1)
    cols = [names.index(c) for c in _COORD_NAMES[:dim]]
    return dim, cols


def read_observations(path):
    """Observation CSV: x[,y[,z]],value[,noise_precision] with header.

    Returns (locations, values, noise_precision-or-None).
    """
    names, data = _read_csv(path)
    dim, coord_cols = _coordinate_columns(names, path)
    if "value" not in names:
        raise FileFormatError(f"{path}: missing 'value' column", 1)
    locations = data[:, coord_cols]
    values = data[:, names.index("value")]
    noise = None
    if "noise_precision" in names:
        noise = data[:, names.index("noise_precision")]
    return locations, values, noise


def write_observations(path, locations, values, noise_precision=None):
    locations = np.atleast_2d(np.asarray(locations, dtype=np.float64))
    names = list(_COORD_NAMES[: locations.shape[1]]) + ["value"]
    columns = [locations[:, j] for j in range(locations.shape[1])] + [values]
    if noise_precision is not None:
        names.append("noise_precision")
        columns.append(
            np.broadcast_to(
                np.asarray(noise_precision, dtype=np.float64),
                (locations.shape[0],),
            )
        )
    _write_csv(path, names, columns)


def read_points(path):
    """Coordinate-only CSV (prediction grids, point patterns)."""
    names, data = _read_csv(path)
    _, coord_cols = _coordinate_columns(names, path)
    return data[:, coord_cols]


def write_points(path, points):
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    names = list(_COORD_NAMES[: points.shape[1]])
    _write_csv(path, names, [points[:, j] for j in range(points.shape[1])])


def read_vertex_field(path, n_vertices=None):
    """Vertex/value CSV; rows may come in any order but must cover 0..n-1."""
    names, data = _read_csv(path)
    if names[:2] != ["vertex", "value"]:
        raise FileFormatError(
            f"{path}: expected header 'vertex,value', got {','.join(names)}", 1
        )
    idx = data[:, 0].astype(np.int64)
    if n_vertices is None:
        n_vertices = idx.max() + 1 if idx.size else 0
    values = np.full(n_vertices, np.nan)
    if np.any(idx < 0) or np.any(idx >= n_vertices):
        raise FileFormatError(
            f"{path}: vertex index out of range 0..{n_vertices - 1}"
        )
    values[idx] = data[:, 1]
    if np.any(np.isnan(values)):
        missing = int(np.flatnonzero(np.isnan(values))[0])
        raise FileFormatError(f"{path}: no value for vertex {missing}")
    return values


def write_vertex_field(path, values):
    values = np.asarray(values, dtype=np.float64)
    with open(path, "w", encoding="ascii") as fh:
        fh.write("vertex,value\n")
        for i, v in enumerate(values):
            fh.write(f"{i},{format_float(v)}\n")


def write_samples(path, samples):
    """Replicate draws in long format: sample,vertex,value."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("sample,vertex,value\n")
        for r in range(samples.shape[0]):
            for i in range(samples.shape[1]):
                fh.write(f"{r},{i},{format_float(samples[r, i])}\n")


def write_spacetime_samples(path, samples, n_vertices):
    """Replicate draws of stacked space-time fields, time-major layout."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[1] % n_vertices:
        raise ValueError(
            f"draw length {samples.shape[1]} is not a multiple of "
            f"{n_vertices} vertices"
        )
    with open(path, "w", encoding="ascii") as fh:
        fh.write("sample,time,vertex,value\n")
        for r in range(samples.shape[0]):
            for flat in range(samples.shape[1]):
                t, i = divmod(flat, n_vertices)
                fh.write(f"{r},{t},{i},{format_float(samples[r, flat])}\n")


def read_samples(path):
    names, data = _read_csv(path)
    if names != ["sample", "vertex", "value"]:
        raise FileFormatError(
            f"{path}: expected header 'sample,vertex,value'", 1
        )
    r = data[:, 0].astype(np.int64)
    i = data[:, 1].astype(np.int64)
    out = np.full((r.max() + 1 if r.size else 0, i.max() + 1 if i.size else 0),
                  np.nan)
    out[r, i] = data[:, 2]
    if np.any(np.isnan(out)):
        raise FileFormatError(f"{path}: incomplete sample grid")
    return out


def write_predictions(path, points, mean, sd):
    points = np.atleast_2d(np.asarray(points, dtype=np.float64))
    names = list(_COORD_NAMES[: points.shape[1]]) + ["mean", "sd"]
    columns = [points[:, j] for j in range(points.shape[1])] + [mean, sd]
    _write_csv(path, names, columns)


def write_keyvalues(path, mapping):
    """Flat key=value text; floats get 17 significant digits."""
    with open(path, "w", encoding="ascii") as fh:
        for key, value in mapping.items():
            if isinstance(value, float):
                fh.write(f"{key}={format_float(value)}\n")
            else:
                fh.write(f"{key}={value}\n")


def read_keyvalues(path):
    out = {}
    with open(path, "r", encoding="ascii") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise FileFormatError(f"{path}: expected key=value", lineno)
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def write_manifest(out_dir, paths):
    """Hash every artifact into out_dir/manifest.txt (path<TAB>sha256)."""
    entries = []
    for p in paths:
        rel = os.path.relpath(p, out_dir)
        entries.append((rel, sha256_file(p)))
    manifest = os.path.join(out_dir, "manifest.txt")
    with open(manifest, "w", encoding="ascii") as fh:
        for rel, digest in sorted(entries):
            fh.write(f"{rel}\t{digest}\n")
    return manifest
