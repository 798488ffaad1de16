"""CSV and text writers for triplets, vectors, curves and matrices."""

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .exceptions import DimensionMismatch
from .propagator import coo_text

__all__ = [
    "canonical_json", "config_hash", "write_triplets", "write_vector", "read_vector",
    "write_rows", "write_json", "write_text",
]


def canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(config):
    """sha256 of the canonical JSON encoding of ``config``."""
    return hashlib.sha256(canonical_json(config).encode()).hexdigest()


def _fmt(value):
    return repr(float(value))


def write_rows(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([v if isinstance(v, (str, int, np.integer)) else _fmt(v) for v in row])
    return path


def write_triplets(path, triplets):
    """One row per triplet: ``index, sigma, mu, residual``."""
    rows = [(i, t.sigma, t.mu if t.mu is not None else t.sigma ** 2, t.residual)
            for i, t in enumerate(triplets)]
    return write_rows(path, ["index", "sigma", "mu", "residual"], rows)


def _columns(space, vector, prefix):
    vector = np.asarray(vector, dtype=float)
    if vector.shape != (space.dof_count,):
        raise DimensionMismatch(f"vector has shape {vector.shape}, space has {space.dof_count} dofs")
    names = [f"{prefix}_{c}" for c in range(space.components)]
    return names, [vector[space.component_dofs(c)] for c in range(space.components)]


def write_vector(path, space, **vectors):
    """Nodal CSV: ``node, x`` then one column per component of each vector.

    Keyword names become column prefixes, e.g. ``write_vector(p, V, v=v, u=u)``
    gives columns ``node, x, v_0, u_0``.
    """
    header, cols = ["node", "x"], []
    for prefix, vec in vectors.items():
        names, values = _columns(space, vec, prefix)
        header += names
        cols += values
    x = space.node_coordinates
    rows = [[i, x[i]] + [c[i] for c in cols] for i in range(space.n_nodes)]
    return write_rows(path, header, rows)


def read_vector(path, space, prefix="v"):
    """Read the ``prefix_*`` columns written by :func:`write_vector`."""
    with Path(path).open() as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    names = [f"{prefix}_{c}" for c in range(space.components)]
    if not rows or any(n not in rows[0] for n in names):
        raise DimensionMismatch(f"{path}: expected columns {names}")
    if len(rows) != space.n_nodes:
        raise DimensionMismatch(f"{path}: {len(rows)} rows, space has {space.n_nodes} nodes")
    return np.concatenate([[float(r[n]) for r in rows] for n in names])


def _plain(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot encode {type(obj).__name__} as JSON")


def write_json(path, obj):
    path = Path(path)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_plain) + "\n")
    return path


def write_text(path, text):
    path = Path(path)
    path.write_text(text if text.endswith("\n") else text + "\n")
    return path


def write_coo(path, matrix):
    return write_text(path, coo_text(matrix))
