"""Locally linear embedding weights and their degeneracy diagnostics.

LLE reconstructs each point from its k nearest neighbours with weights that
sum to one.  ``M = I - W`` then has zero row sums but signed off-diagonal
entries, so it splits as ``M = A_plus - A_minus`` with two generator-like
Laplacians built from the positive and negative weights.  When the two
parts nearly cancel, ``M f`` is small compared with a graph Laplacian
applied to the same smooth ``f``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import graphs, laplacians, spectral

__all__ = [
    "LleError",
    "LleModel",
    "fit_lle",
    "split_generators",
    "lle_degeneracy_report",
    "regularization_sweep",
    "embed_lle",
]

SINGULAR_COND = 1e12


class LleError(ValueError):
    """Singular local systems or mismatched inputs."""


@dataclass(frozen=True, eq=False)
class LleModel:
    W: sp.csr_matrix
    k: int
    reg: float
    residuals: np.ndarray

    @property
    def M(self):
        return (sp.identity(self.W.shape[0], format="csr") - self.W).tocsr()

    @property
    def n(self):
        return self.W.shape[0]


def fit_lle(points, k, reg=1e-3):
    """Constrained least-squares reconstruction weights.

    For each point the local Gram matrix ``G`` of neighbour offsets gets a
    ridge ``reg * trace(G) / k``; the weights minimise ``w^T G w`` subject to
    ``sum w = 1``.  With ``reg = 0`` this fails only if the minimiser is not
    unique.
    """
    X = np.asarray(points, float)
    reg = float(reg)
    if reg < 0:
        raise LleError("reg must be >= 0")
    index = graphs.build_index(X)
    _, idx = graphs.knn_neighbors(index, k)
    n, k = idx.shape
    Z = X[idx] - X[:, None, :]
    G = np.einsum("nib,njb->nij", Z, Z)
    tr = np.trace(G, axis1=1, axis2=2)
    if reg > 0:
        ridge = reg * np.where(tr > 0, tr, 1.0) / k
        G = G + ridge[:, None, None] * np.eye(k)
    # bordered system [[G, 1], [1^T, 0]] [w; lam] = [0; 1]: the weights are
    # unique whenever G is definite on {sum w = 0}, even if G is singular
    B = np.zeros((n, k + 1, k + 1))
    B[:, :k, :k] = G
    B[:, :k, k] = 1.0
    B[:, k, :k] = 1.0
    if reg == 0:
        scale = np.where(tr > 0, tr, 1.0)
        Bs = B.copy()
        Bs[:, :k, :k] /= scale[:, None, None]
        cond = np.linalg.cond(Bs)
        bad = ~np.isfinite(cond) | (cond > SINGULAR_COND)
        if bad.any():
            raise LleError(f"reconstruction weights not unique at {int(bad.sum())} points; use reg > 0")
    rhs = np.zeros((n, k + 1, 1))
    rhs[:, k, 0] = 1.0
    try:
        w = np.linalg.solve(B, rhs)[:, :k, 0]
    except np.linalg.LinAlgError:
        raise LleError("singular local system; use reg > 0") from None
    w = w / w.sum(axis=1, keepdims=True)
    rows = np.repeat(np.arange(n), k)
    W = sp.csr_matrix((w.ravel(), (rows, idx.ravel())), shape=(n, n))
    W.sort_indices()
    resid = np.linalg.norm(np.einsum("nk,nkb->nb", w, Z), axis=1)
    return LleModel(W=W, k=int(k), reg=reg, residuals=resid)


def split_generators(model):
    """``(A_plus, A_minus)`` with ``M = A_plus - A_minus``, both row-sum zero."""
    W = model.W.tocsr()
    Wp = W.maximum(0).tocsr()
    Wm = (-W).maximum(0).tocsr()
    Ap = sp.diags(np.asarray(Wp.sum(axis=1)).ravel()) - Wp
    Am = sp.diags(np.asarray(Wm.sum(axis=1)).ravel()) - Wm
    return Ap.tocsr(), Am.tocsr()


def lle_degeneracy_report(model, points, reference, test_fns):
    """Compare ``M f`` with the random-walk Laplacian action on smooth f.

    ``reference`` is a :class:`~laplace_limits.laplacians.LaplacianMatrix` on
    the same points; its scaling is applied to both operators.  ``test_fns``
    maps names to n-vectors.  Per function the report holds ``ratio =
    |M f| / |L f|``, the norms of ``A_plus f`` and ``A_minus f`` and
    ``cancellation = |M f| / (|A_plus f| + |A_minus f|)``.
    """
    n = model.n
    if np.asarray(points).shape[0] != n or reference.n != n:
        raise LleError("model, points and reference must have the same size")
    c = reference.scaling
    M = model.M
    Ap, Am = split_generators(model)
    out = {"k": model.k, "reg": model.reg, "c_n": c, "functions": {}}
    for name, f in test_fns.items():
        f = np.asarray(f, float)
        if f.shape != (n,):
            raise LleError(f"test function {name!r} must be an n-vector")
        mf = np.linalg.norm(c * (M @ f))
        lf = np.linalg.norm(c * (reference.matrix @ f))
        pf = np.linalg.norm(c * (Ap @ f))
        nf = np.linalg.norm(c * (Am @ f))
        out["functions"][name] = {
            "ratio": float(mf / lf) if lf > 0 else float("inf"),
            "norm_Mf": float(mf),
            "norm_Lf": float(lf),
            "norm_Aplus_f": float(pf),
            "norm_Aminus_f": float(nf),
            "cancellation": float(mf / (pf + nf)) if pf + nf > 0 else 0.0,
        }
    return out


def regularization_sweep(points, k, regs, test_fns, m):
    """Degeneracy reports across ridge values against the OR-kNN Laplacian."""
    g = graphs.build_knn_undirected_or(points, k)
    ref = laplacians.assemble(g, "random_walk", laplacians.scaling_for(g, m))
    return [lle_degeneracy_report(fit_lle(points, k, r), points, ref, test_fns) for r in regs]


def embed_lle(model, dim, seed=0):
    """Bottom non-constant eigenvectors of ``M^T M``."""
    dim = int(dim)
    if not 1 <= dim < model.n - 1:
        raise LleError("dim out of range")
    M = model.M
    A = (M.T @ M).tocsr()
    A = 0.5 * (A + A.T)
    res = spectral.smallest_eigenpairs(A, dim + 1, seed=seed)
    return res.eigenvectors[:, 1:]
