"""File formats: CSV point clouds, Matrix Market graphs, JSON sidecars.

Every written file ``path`` gets a sidecar ``path + ".json"`` holding the
producing configuration and its hash.  Writers avoid timestamps so the same
configuration always produces the same bytes.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np
import scipy.io as sio
import scipy.sparse as sp

__all__ = [
    "DataError",
    "config_hash",
    "file_digest",
    "write_sidecar",
    "read_sidecar",
    "write_array_csv",
    "read_array_csv",
    "write_matrix",
    "read_matrix",
    "write_json",
]


class DataError(ValueError):
    """Missing, unreadable or malformed input files."""


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(o):
    if isinstance(o, np.integer):
        return int(o)
    if isinstance(o, np.floating):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def config_hash(config):
    """First 16 hex digits of the SHA-256 of the canonical JSON form."""
    return hashlib.sha256(_canonical(config).encode()).hexdigest()[:16]


def file_digest(path):
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()[:16]
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None


def write_json(path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2, default=_json_default) + "\n")


def write_sidecar(path, config, **extra):
    meta = {"config": config, "config_hash": config_hash(config), **extra}
    write_json(str(path) + ".json", meta)
    return meta


def read_sidecar(path, required=True):
    side = Path(str(path) + ".json")
    if not side.exists():
        if required:
            raise DataError(f"missing sidecar {side}")
        return {}
    try:
        return json.loads(side.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"corrupt sidecar {side}: {exc}") from None


def write_array_csv(path, array, header):
    """Write a 2-D float array with a header row; values in round-trip precision."""
    a = np.atleast_2d(np.asarray(array, float))
    if a.shape[0] == 1 and len(header) != a.shape[1]:
        a = a.T
    if a.shape[1] != len(header):
        raise DataError("header does not match column count")
    np.savetxt(path, a, delimiter=",", header=",".join(header), comments="", fmt="%.17g")


def read_array_csv(path):
    """Return ``(array, header)`` from a CSV written by :func:`write_array_csv`."""
    p = Path(path)
    if not p.exists():
        raise DataError(f"missing file {p}")
    try:
        with p.open() as fh:
            header = fh.readline().strip().split(",")
        a = np.loadtxt(p, delimiter=",", skiprows=1, ndmin=2)
    except (OSError, ValueError) as exc:
        raise DataError(f"corrupt CSV {p}: {exc}") from None
    if a.shape[1] != len(header) or not np.all(np.isfinite(a)):
        raise DataError(f"corrupt CSV {p}: bad shape or non-finite values")
    return a, header


def write_matrix(path, M):
    sio.mmwrite(str(path), sp.coo_matrix(M), symmetry="general")


def read_matrix(path):
    p = Path(path)
    if not p.exists():
        raise DataError(f"missing file {p}")
    try:
        M = sio.mmread(str(p))
    except Exception as exc:  # scipy raises several types for malformed files
        raise DataError(f"corrupt Matrix Market file {p}: {exc}") from None
    M = sp.csr_matrix(M, dtype=float)
    if M.shape[0] != M.shape[1]:
        raise DataError(f"{p} is not square")
    return M
