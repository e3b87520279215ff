"""Smallest eigenpairs of symmetric sparse matrices and spectral embeddings."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.sparse.linalg import ArpackNoConvergence, eigsh
from scipy.spatial import procrustes

__all__ = [
    "SpectralError",
    "EigenResult",
    "DENSE_LIMIT",
    "smallest_eigenpairs",
    "connected_components",
    "normalized_laplacian",
    "laplacian_eigenmap",
    "fit_circle",
    "procrustes_error",
]

# below this size a dense symmetric solve is both faster and exact
DENSE_LIMIT = 2500
SYMMETRY_TOL = 1e-10


class SpectralError(ValueError):
    """Non-symmetric input, non-convergence, or a disconnected graph."""


@dataclass(frozen=True, eq=False)
class EigenResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    solver_stats: dict = field(default_factory=dict)


def _norm_estimate(A):
    if sp.issparse(A):
        return float(abs(A).sum(axis=1).max()) if A.nnz else 0.0
    return float(np.abs(A).sum(axis=1).max())


def _check_symmetric(A):
    D = A - A.T
    gap = abs(D).max() if sp.issparse(D) else np.abs(D).max()
    scale = max(1.0, _norm_estimate(A))
    if gap > SYMMETRY_TOL * scale:
        raise SpectralError(f"matrix is not symmetric (max |A - A^T| = {gap:.3g})")


def smallest_eigenpairs(A, count, tol=1e-10, seed=0, maxiter=None):
    """The ``count`` smallest eigenpairs of a symmetric matrix.

    Dense ``eigh`` up to :data:`DENSE_LIMIT` rows; above that, ARPACK in
    shift-invert mode around a small negative shift with a seeded start
    vector, so results are reproducible.
    """
    n = A.shape[0]
    if A.shape != (n, n):
        raise SpectralError("matrix must be square")
    count = int(count)
    if not 1 <= count < n:
        raise SpectralError(f"count must lie in [1, n-1], got {count}")
    _check_symmetric(A)
    anorm = _norm_estimate(A)
    if n <= DENSE_LIMIT:
        M = A.toarray() if sp.issparse(A) else np.asarray(A, float)
        vals, vecs = sla.eigh(M, subset_by_index=[0, count - 1])
        stats = {"solver": "dense_eigh"}
    else:
        A = sp.csc_matrix(A, dtype=float)
        v0 = np.random.default_rng(seed).standard_normal(n)
        shift = -1e-3 * max(anorm, 1e-300)
        # single-vector Lanczos can return only one copy of a repeated
        # eigenvalue; asking for a wider window recovers the missing copies
        want = min(n - 1, max(2 * count, count + 10))
        try:
            vals, vecs = eigsh(A, k=want, sigma=shift, which="LM", v0=v0, tol=tol, maxiter=maxiter)
        except ArpackNoConvergence as exc:
            raise SpectralError(f"eigensolver did not converge: {exc}") from None
        stats = {"solver": "arpack_shift_invert", "shift": shift, "seed": int(seed), "window": want}
    order = np.argsort(vals)[:count]
    vals, vecs = vals[order], vecs[:, order]
    # fix signs so the largest-magnitude entry of each vector is positive
    pivot = np.argmax(np.abs(vecs), axis=0)
    vecs = vecs * np.sign(vecs[pivot, np.arange(vecs.shape[1])])
    res = np.linalg.norm(A @ vecs - vecs * vals, axis=0)
    stats["norm_estimate"] = anorm
    return EigenResult(vals, vecs, res, stats)


def connected_components(g):
    """Number of connected components and labels of a graph's pattern."""
    W = g.W if hasattr(g, "W") else g
    return csgraph.connected_components(W, directed=True, connection="weak")


def normalized_laplacian(g):
    """``I - D^-1/2 W D^-1/2`` and the degree vector."""
    d = g.degree
    if np.any(d <= 0):
        raise SpectralError("isolated vertices")
    s = sp.diags(1.0 / np.sqrt(d))
    L = sp.identity(g.n, format="csr") - s @ g.W @ s
    L = 0.5 * (L + L.T)
    return L.tocsr(), d


def laplacian_eigenmap(g, dim, seed=0, zero_tol=1e-8):
    """Eigenmap coordinates: eigenvectors 2..dim+1 of the normalized Laplacian.

    Vectors are rescaled by ``D^-1/2``, i.e. returned as eigenvectors of the
    random-walk Laplacian.
    """
    if not g.symmetric:
        raise SpectralError("eigenmaps need a symmetric graph")
    ncomp, _ = connected_components(g)
    if ncomp > 1:
        raise SpectralError(f"graph is disconnected ({ncomp} components)")
    L, d = normalized_laplacian(g)
    res = smallest_eigenpairs(L, int(dim) + 1, seed=seed)
    if res.eigenvalues[1] < zero_tol:
        raise SpectralError("eigenvalue 0 is repeated: graph is numerically disconnected")
    Y = res.eigenvectors[:, 1:] / np.sqrt(d)[:, None]
    return Y


def fit_circle(Y):
    """Algebraic least-squares circle through 2-D points.

    Returns ``(center, radius, rms)`` where ``rms`` is the root-mean-square
    radial residual divided by the radius.
    """
    Y = np.asarray(Y, float)
    if Y.ndim != 2 or Y.shape[1] != 2:
        raise SpectralError("circle fit needs (n, 2) coordinates")
    A = np.column_stack([2 * Y, np.ones(len(Y))])
    b = np.sum(Y**2, axis=1)
    sol, *_ = np.linalg.lstsq(A, b, rcond=None)
    center = sol[:2]
    radius = float(np.sqrt(sol[2] + center @ center))
    r = np.linalg.norm(Y - center, axis=1)
    return center, radius, float(np.sqrt(np.mean((r - radius) ** 2)) / radius)


def procrustes_error(Y, ref):
    """Procrustes disparity of ``Y`` against ``ref``.

    Both sets are centred and scaled to unit Frobenius norm, ``Y`` is
    rotated (or reflected) onto ``ref``, and the sum of squared differences
    is returned; this is :func:`scipy.spatial.procrustes`.
    """
    return float(procrustes(np.asarray(ref, float), np.asarray(Y, float))[2])
