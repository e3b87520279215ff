"""Random-walk, unnormalized and normalized graph Laplacians with limit scalings.

The scalings make the generator form converge:

* random walk:  ``-c_n L_rw f -> A f`` with ``c_n = Z / h^2``
* unnormalized: ``-c_n' L_u f -> d * A f`` with ``c_n' = c_n / (n h^m)``
* normalized:   ``-c_n L_norm f -> d^(1/2) A (d^(-1/2) f)``

``Z`` comes from :func:`~laplace_limits.kernels.base_kernel_constants`.  The
extra ``1/n`` in ``c_n'`` turns raw degree sums into the density-scale degree
function.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import kernels
from .graphs import SparseGraph

__all__ = [
    "LaplacianError",
    "LaplacianMatrix",
    "Scaling",
    "degree_vector",
    "scaling_for",
    "assemble",
    "apply",
]

KINDS = ("random_walk", "unnormalized", "normalized")


class LaplacianError(ValueError):
    """Isolated vertices, bad scaling inputs, or dimension mismatch."""


@dataclass(frozen=True)
class Scaling:
    """Scaling inputs: base kernel, intrinsic dimension and bandwidth h."""

    base: kernels.BaseKernel
    m: int
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise LaplacianError("h must be positive")
        if int(self.m) < 1:
            raise LaplacianError("m must be >= 1")

    @property
    def Z(self):
        return kernels.base_kernel_constants(self.base, self.m)[2]

    @property
    def c_n(self):
        return self.Z / self.h**2

    def c_n_unnormalized(self, n):
        return self.c_n / (n * self.h**self.m)


@dataclass(frozen=True, eq=False)
class LaplacianMatrix:
    kind: str
    matrix: sp.csr_matrix
    degree: np.ndarray
    scaling: float
    source: SparseGraph

    @property
    def n(self):
        return self.matrix.shape[0]


def degree_vector(g):
    """Row sums of W; isolated vertices are an error."""
    d = g.degree
    if np.any(d <= 0):
        bad = np.nonzero(d <= 0)[0]
        raise LaplacianError(f"{len(bad)} isolated vertices, first at index {bad[0]}")
    return d


def scaling_for(g, m, base=None, h=None):
    """Default scaling inputs for a graph built by :mod:`laplace_limits.graphs`.

    r-neighbourhood graphs use the indicator kernel with ``h = r``; kNN-family
    graphs use the indicator kernel with ``h = (k/n)^(1/m)``; self-tuning
    graphs use the truncated Gaussian with the same h; generic kernel graphs
    need ``base`` (or use the recorded kind) and take their own h.
    """
    m = int(m)
    c = g.construction
    if c == "r_neighborhood":
        return Scaling(base or kernels.indicator(), m, h or g.params["r"])
    if c in ("knn_directed", "knn_undirected_or", "pilot_weighted_knn"):
        return Scaling(base or kernels.indicator(), m, h or (g.params["k"] / g.n) ** (1.0 / m))
    if c == "self_tuning":
        from .graphs import SELF_TUNING_CUTOFF

        return Scaling(base or kernels.truncated_gaussian(SELF_TUNING_CUTOFF), m, h or (g.params["k"] / g.n) ** (1.0 / m))
    if base is None:
        kind = g.params.get("base", "indicator")
        if kind == "indicator":
            base = kernels.indicator()
        elif kind == "truncated_gaussian":
            base = kernels.truncated_gaussian(g.params.get("cutoff", 3.0))
        else:
            raise LaplacianError("pass the base kernel for step-sum kernel graphs")
    return Scaling(base, m, h or g.params["h"])


def assemble(g, kind, scaling):
    """Build the Laplacian of ``kind`` for graph ``g``.

    ``scaling`` is a :class:`Scaling` (see :func:`scaling_for`).
    """
    if kind not in KINDS:
        raise LaplacianError(f"unknown Laplacian kind {kind!r}")
    d = degree_vector(g)
    n = g.n
    W = g.W
    I = sp.identity(n, format="csr")
    if kind == "random_walk":
        L = I - sp.diags(1.0 / d) @ W
        # rows of D^-1 W sum to one up to rounding; put the residue on the diagonal
        L = L.tocsr()
        L.setdiag(L.diagonal() - np.asarray(L.sum(axis=1)).ravel())
        c = scaling.c_n
    elif kind == "unnormalized":
        L = sp.diags(d) - W
        c = scaling.c_n_unnormalized(n)
    else:
        s = 1.0 / np.sqrt(d)
        L = I - sp.diags(s) @ W @ sp.diags(s)
        c = scaling.c_n
    L = sp.csr_matrix(L)
    L.sort_indices()
    return LaplacianMatrix(kind=kind, matrix=L, degree=d, scaling=float(c), source=g)


def apply(L, f):
    """Generator action ``-scaling * (L f)``.

    For the random-walk kind this is ``c_n (P - I) f``; the same sign is used
    for every kind so limit comparisons need no caller-side flips.
    """
    f = np.asarray(f, dtype=float)
    if f.shape[0] != L.n:
        raise LaplacianError(f"f has {f.shape[0]} rows, Laplacian has {L.n}")
    if not np.all(np.isfinite(f)):
        raise LaplacianError("f must be finite")
    return -L.scaling * (L.matrix @ f)
