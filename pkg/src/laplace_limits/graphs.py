"""Neighbour search and graph constructions.

All constructions return a :class:`SparseGraph` whose adjacency ``W`` is a
CSR matrix with strictly positive stored entries and no self-loops.
Neighbour queries are exact (kd-tree) and ties in distance are broken by
point index.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.spatial import cKDTree

from .kernels import KernelSpec

__all__ = [
    "GraphError",
    "NeighborIndex",
    "SparseGraph",
    "KnnRadii",
    "SELF_TUNING_CUTOFF",
    "build_index",
    "knn_neighbors",
    "knn_radii",
    "build_r_neighborhood",
    "build_knn_directed",
    "build_knn_undirected_or",
    "build_self_tuning",
    "build_pilot_weighted_knn",
    "build_kernel_graph",
]

CONSTRUCTIONS = (
    "r_neighborhood",
    "knn_directed",
    "knn_undirected_or",
    "self_tuning",
    "pilot_weighted_knn",
    "generic_kernel",
)

# self-tuning weights below exp(-9) are dropped: |x - y| >= 3 sqrt(rho_x rho_y)
SELF_TUNING_CUTOFF = 3.0

_TIE_SLACK = 4


class GraphError(ValueError):
    """Invalid graph parameters or adjacency."""


def _workers():
    try:
        return max(1, int(os.environ.get("LAPLACE_LIMITS_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True, eq=False)
class NeighborIndex:
    points: np.ndarray
    tree: cKDTree

    @property
    def n(self):
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class SparseGraph:
    W: sp.csr_matrix
    construction: str
    params: dict = field(default_factory=dict)
    symmetric: bool = False

    def __post_init__(self):
        if self.construction not in CONSTRUCTIONS:
            raise GraphError(f"unknown construction {self.construction!r}")
        W = sp.csr_matrix(self.W, dtype=float)
        W.eliminate_zeros()
        W.sort_indices()
        if W.shape[0] != W.shape[1]:
            raise GraphError("adjacency must be square")
        if W.diagonal().any():
            raise GraphError("self-loops are not allowed")
        if W.nnz and W.data.min() <= 0:
            raise GraphError("stored weights must be positive")
        if self.symmetric and abs(W - W.T).max() != 0:
            raise GraphError("graph flagged symmetric but W != W^T")
        object.__setattr__(self, "W", W)

    @property
    def n(self):
        return self.W.shape[0]

    @property
    def degree(self):
        return np.asarray(self.W.sum(axis=1)).ravel()


@dataclass(frozen=True)
class KnnRadii:
    """Distances to the k-th nearest neighbour (query point excluded)."""

    rho: np.ndarray
    k: int
    n: int
    m: int | None = None

    @property
    def h_n(self):
        if self.m is None:
            raise GraphError("intrinsic dimension needed for h_n = (k/n)^(1/m)")
        return (self.k / self.n) ** (1.0 / self.m)


def build_index(points):
    pts = np.ascontiguousarray(np.asarray(points, dtype=float))
    if pts.ndim != 2 or len(pts) == 0:
        raise GraphError("points must be a non-empty (n, b) array")
    return NeighborIndex(points=pts, tree=cKDTree(pts))


def _check_k(k, n):
    k = int(k)
    if not 1 <= k <= n - 1:
        raise GraphError(f"k must lie in [1, n-1] = [1, {n - 1}], got {k}")
    return k


def knn_neighbors(index, k):
    """Exact k nearest neighbours of every indexed point, itself excluded.

    Returns ``(dist, idx)`` of shape ``(n, k)``, sorted by distance and then
    by index.
    """
    n = index.n
    k = _check_k(k, n)
    kq = min(n, k + 1 + _TIE_SLACK)
    dist, idx = index.tree.query(index.points, k=kq, workers=_workers())
    dist = np.atleast_2d(dist).reshape(n, kq)
    idx = np.atleast_2d(idx).reshape(n, kq)
    # drop the query point; rows where it is not found lose their last entry
    own = idx == np.arange(n)[:, None]
    missing = ~own.any(axis=1)
    own[missing, -1] = True
    dist = dist[~own].reshape(n, kq - 1)
    idx = idx[~own].reshape(n, kq - 1)
    order = np.lexsort((idx, dist), axis=1)
    dist = np.take_along_axis(dist, order, axis=1)
    idx = np.take_along_axis(idx, order, axis=1)
    # rows whose k-th distance ties with an unfetched point are redone exactly
    if kq < n:
        redo = np.nonzero(dist[:, kq - 2] <= dist[:, k - 1])[0]
        for i in redo:
            cand = np.asarray(index.tree.query_ball_point(index.points[i], dist[i, k - 1] * (1 + 1e-12) + 1e-300))
            cand = cand[cand != i]
            d = np.linalg.norm(index.points[cand] - index.points[i], axis=1)
            o = np.lexsort((cand, d))[:k]
            dist[i, :k], idx[i, :k] = d[o], cand[o]
    return dist[:, :k], idx[:, :k]


def knn_radii(index, k, m=None):
    dist, _ = knn_neighbors(index, k)
    return KnnRadii(rho=dist[:, -1].copy(), k=int(k), n=index.n, m=m)


def _ensure_index(points_or_index):
    if isinstance(points_or_index, NeighborIndex):
        return points_or_index
    return build_index(points_or_index)


def _from_pairs(n, rows, cols, vals):
    W = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    W.sum_duplicates()
    return W


def build_r_neighborhood(points, r):
    """``W_ij = 1`` iff ``0 < |x_i - x_j| < r``."""
    if not r > 0:
        raise GraphError("r must be positive")
    index = _ensure_index(points)
    pairs = index.tree.query_pairs(r, output_type="ndarray")
    if len(pairs):
        d = np.linalg.norm(index.points[pairs[:, 0]] - index.points[pairs[:, 1]], axis=1)
        pairs = pairs[(d < r) & (d > 0)]
    rows = np.concatenate([pairs[:, 0], pairs[:, 1]])
    cols = np.concatenate([pairs[:, 1], pairs[:, 0]])
    W = _from_pairs(index.n, rows, cols, np.ones(len(rows)))
    return SparseGraph(W, "r_neighborhood", {"r": float(r)}, symmetric=True)


def _directed_adjacency(index, k):
    _, idx = knn_neighbors(index, k)
    n = index.n
    rows = np.repeat(np.arange(n), k)
    return _from_pairs(n, rows, idx.ravel(), np.ones(n * k))


def build_knn_directed(points, k):
    """``W_ij = 1`` iff j is among the k nearest neighbours of i."""
    index = _ensure_index(points)
    W = _directed_adjacency(index, k)
    return SparseGraph(W, "knn_directed", {"k": int(k)}, symmetric=False)


def build_knn_undirected_or(points, k):
    """OR-symmetrised kNN graph: entrywise max of the directed W and W^T."""
    index = _ensure_index(points)
    Wd = _directed_adjacency(index, k)
    return SparseGraph(Wd.maximum(Wd.T).tocsr(), "knn_undirected_or", {"k": int(k)}, symmetric=True)


def build_self_tuning(points, k):
    """Self-tuning weights ``exp(-|x-y|^2 / (rho(x) rho(y)))``, truncated.

    Weights are kept only for ``|x - y| < 3 sqrt(rho(x) rho(y))``, i.e. above
    ``exp(-9)``.
    """
    index = _ensure_index(points)
    rho = knn_radii(index, k).rho
    if np.any(rho <= 0):
        raise GraphError("duplicate points give a zero k-NN radius")
    reach = SELF_TUNING_CUTOFF * np.sqrt(rho * rho.max())
    lists = index.tree.query_ball_point(index.points, reach, workers=_workers())
    lens = np.fromiter((len(c) for c in lists), dtype=np.int64, count=index.n)
    rows = np.repeat(np.arange(index.n), lens)
    cols = np.concatenate([np.asarray(c, dtype=np.int64) for c in lists]) if lens.sum() else np.zeros(0, np.int64)
    scale = rho[rows] * rho[cols]
    d2 = np.sum((index.points[rows] - index.points[cols]) ** 2, axis=1)
    keep = (rows != cols) & (d2 < SELF_TUNING_CUTOFF**2 * scale)
    rows, cols = rows[keep], cols[keep]
    vals = np.exp(-d2[keep] / scale[keep])
    W = _from_pairs(index.n, rows, cols, vals)
    return SparseGraph(W, "self_tuning", {"k": int(k)}, symmetric=True)


def build_pilot_weighted_knn(points, k, pilot):
    """OR-kNN graph with edge weights ``sqrt(p(x_i) p(x_j))``.

    ``pilot`` is a density estimate (anything with ``.values``) or an array of
    positive per-point values.
    """
    index = _ensure_index(points)
    vals = np.asarray(getattr(pilot, "values", pilot), dtype=float)
    if vals.shape != (index.n,) or np.any(vals <= 0) or not np.all(np.isfinite(vals)):
        raise GraphError("pilot values must be positive, finite, one per point")
    Wd = _directed_adjacency(index, k)
    A = Wd.maximum(Wd.T).tocoo()
    w = np.sqrt(vals[A.row] * vals[A.col])
    W = _from_pairs(index.n, A.row, A.col, w)
    return SparseGraph(W, "pilot_weighted_knn", {"k": int(k)}, symmetric=True)


def build_kernel_graph(points, spec: KernelSpec):
    """``W_ij = K(x_i, x_j)`` for ``i != j``, stored where positive."""
    index = _ensure_index(points)
    X = index.points
    gam = spec.bandwidth.at_points(X)
    om = spec.weight.at_points(X)
    if np.any(gam <= 0) or not np.all(np.isfinite(gam)):
        raise GraphError("bandwidth field must be positive and finite")
    gmax = gam.max()
    reach = spec.h * spec.base.support_radius * np.maximum(spec.bandwidth.pair(gam, gmax), spec.bandwidth.pair(gmax, gam))
    if spec.bandwidth.rule in ("constant", "source"):
        reach = spec.h * spec.base.support_radius * gam
    lists = index.tree.query_ball_point(X, reach * (1 + 1e-12), workers=_workers())
    lens = np.fromiter((len(c) for c in lists), dtype=np.int64, count=index.n)
    rows = np.repeat(np.arange(index.n), lens)
    cols = np.concatenate([np.asarray(c, dtype=np.int64) for c in lists]) if lens.sum() else np.zeros(0, np.int64)
    keep = rows != cols
    rows, cols = rows[keep], cols[keep]
    d = np.linalg.norm(X[rows] - X[cols], axis=1)
    r = spec.bandwidth.pair(gam[rows], gam[cols])
    w = spec.weight.pair(om[rows], om[cols])
    vals = w * spec.base(d / (spec.h * r))
    pos = vals > 0
    W = _from_pairs(index.n, rows[pos], cols[pos], vals[pos])
    params = {"h": float(spec.h), "base": spec.base.kind, "bandwidth": spec.bandwidth.source, "weight": spec.weight.source}
    return SparseGraph(W, "generic_kernel", params, symmetric=spec.symmetric and _is_symmetric(W))


def _is_symmetric(W):
    return W.nnz == 0 or abs(W - W.T).max() == 0
