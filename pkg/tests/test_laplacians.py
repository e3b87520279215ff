import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from laplace_limits import graphs, kernels, laplacians
from laplace_limits.laplacians import LaplacianError


def weighted_graph(seed, n=60):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 2))
    A = graphs.build_knn_undirected_or(X, 4).W
    U = sp.triu(A, 1).tocoo()
    U.data = rng.uniform(0.1, 3.0, U.nnz)
    return graphs.SparseGraph(U + U.T, "generic_kernel", {"h": 0.5, "base": "indicator"}, symmetric=True)


SCALE = laplacians.Scaling(kernels.indicator(), 2, 0.5)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_unnormalized_is_degree_times_random_walk(seed):
    g = weighted_graph(seed)
    Lrw = laplacians.assemble(g, "random_walk", SCALE).matrix
    Lu = laplacians.assemble(g, "unnormalized", SCALE).matrix
    assert abs(Lu - sp.diags(g.degree) @ Lrw).max() <= 1e-10 * g.degree.max()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_random_walk_rows_sum_to_zero(seed):
    L = laplacians.assemble(weighted_graph(seed), "random_walk", SCALE)
    assert np.abs(L.matrix @ np.ones(L.n)).max() <= 1e-12


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10**6), st.floats(1e-3, 1e3))
def test_random_walk_scale_invariance(seed, c):
    g = weighted_graph(seed)
    g2 = graphs.SparseGraph(c * g.W, "generic_kernel", g.params, symmetric=True)
    a = laplacians.assemble(g, "random_walk", SCALE).matrix
    b = laplacians.assemble(g2, "random_walk", SCALE).matrix
    assert abs(a - b).max() <= 1e-12


def test_normalized_spectrum_in_unit_interval():
    L = laplacians.assemble(weighted_graph(3), "normalized", SCALE).matrix.toarray()
    ev = np.linalg.eigvalsh(L)
    assert ev.min() >= -1e-10 and ev.max() <= 2 + 1e-10


def test_unnormalized_is_psd():
    g = weighted_graph(4)
    L = laplacians.assemble(g, "unnormalized", SCALE).matrix
    f = np.random.default_rng(0).standard_normal(g.n)
    assert f @ (L @ f) >= 0


def test_scaling_constants():
    s = laplacians.Scaling(kernels.indicator(), 1, 0.1)
    assert s.Z == 3
    assert s.c_n == pytest.approx(300.0)
    assert s.c_n_unnormalized(1000) == pytest.approx(300.0 / (1000 * 0.1))
    with pytest.raises(LaplacianError):
        laplacians.Scaling(kernels.indicator(), 1, 0.0)
    with pytest.raises(LaplacianError):
        laplacians.Scaling(kernels.indicator(), 0, 0.1)


def test_scaling_for_constructions():
    X = np.linspace(0, 1, 101)[:, None]
    g = graphs.build_r_neighborhood(X, 0.05)
    assert laplacians.scaling_for(g, 1).h == 0.05
    g = graphs.build_knn_directed(X, 10)
    s = laplacians.scaling_for(g, 1)
    assert s.h == pytest.approx(10 / 101) and s.base.kind == "indicator"
    g = graphs.build_self_tuning(X, 10)
    assert laplacians.scaling_for(g, 1).base.kind == "truncated_gaussian"


def test_isolated_vertex_is_an_error():
    X = np.array([[0.0], [0.1], [5.0]])
    g = graphs.build_r_neighborhood(X, 0.5)
    with pytest.raises(LaplacianError, match="isolated"):
        laplacians.assemble(g, "random_walk", SCALE)


def test_apply_sign_and_shape():
    # uniform grid, r-neighbourhood: -c_n L_rw x^2 is the scaled second moment
    n = 2001
    X = np.linspace(-1, 1, n)[:, None]
    h = 0.0505  # off-lattice radius avoids distance ties
    g = graphs.build_r_neighborhood(X, h)
    s = laplacians.scaling_for(g, 1)
    L = laplacians.assemble(g, "random_walk", s)
    out = laplacians.apply(L, X[:, 0] ** 2)
    mid = np.abs(X[:, 0]) < 0.5
    # discrete mean of s^2 over |s| < h on the lattice, times Z / h^2 = 3 / h^2
    step = 2 / (n - 1)
    j = np.arange(1, int(h / step) + 1)
    expected = 3 / h**2 * np.mean((j * step) ** 2)
    assert np.allclose(out[mid], expected, rtol=1e-8)
    with pytest.raises(LaplacianError):
        laplacians.apply(L, np.ones(3))
    with pytest.raises(LaplacianError):
        laplacians.apply(L, np.full(n, np.nan))


def test_unknown_kind():
    with pytest.raises(LaplacianError):
        laplacians.assemble(weighted_graph(0), "signless", SCALE)
