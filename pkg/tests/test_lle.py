import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from laplace_limits import graphs, laplacians, lle, manifolds
from laplace_limits.lle import LleError


def test_collinear_midpoint_weights():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]])
    model = lle.fit_lle(X, 2, reg=0.0)
    assert model.W[1, 0] == pytest.approx(0.5)
    assert model.W[1, 2] == pytest.approx(0.5)
    assert model.residuals[1] == pytest.approx(0.0, abs=1e-12)


def test_underdetermined_without_ridge_raises(rng):
    # 4 neighbours in the plane: the minimiser is a whole line of weights
    X = rng.standard_normal((30, 2))
    with pytest.raises(LleError):
        lle.fit_lle(X, 4, reg=0.0)


def test_negative_reg_rejected():
    with pytest.raises(LleError):
        lle.fit_lle(np.zeros((5, 1)) + np.arange(5)[:, None], 2, reg=-1.0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.integers(3, 8))
def test_rows_sum_to_one(seed, k):
    X = np.random.default_rng(seed).standard_normal((40, 3))
    model = lle.fit_lle(X, k)
    assert np.allclose(np.asarray(model.W.sum(axis=1)).ravel(), 1.0, atol=1e-12)
    assert np.allclose(model.W.diagonal(), 0)
    assert np.all(np.diff(model.W.indptr) == k)


def test_huge_ridge_gives_uniform_weights(rng):
    X = rng.standard_normal((50, 2))
    model = lle.fit_lle(X, 5, reg=1e12)
    assert np.allclose(model.W.data, 0.2, atol=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10**6))
def test_rigid_motion_invariance(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((40, 3))
    Q, _ = np.linalg.qr(rng.standard_normal((3, 3)))
    Y = X @ Q.T + rng.standard_normal(3)
    a, b = lle.fit_lle(X, 6), lle.fit_lle(Y, 6)
    assert abs(a.W - b.W).max() < 1e-8


def test_split_generators(rng):
    X = rng.standard_normal((60, 2))
    model = lle.fit_lle(X, 6)
    Ap, Am = lle.split_generators(model)
    assert abs((Ap - Am) - model.M).max() < 1e-12
    for A in (Ap, Am):
        assert np.allclose(np.asarray(A.sum(axis=1)).ravel(), 0, atol=1e-12)
        off = A - sp.diags(A.diagonal())
        assert off.data.max(initial=0) <= 0


def test_grid_is_second_difference():
    n = 30
    X = np.arange(n, dtype=float)[:, None]
    f = np.sin(0.3 * X[:, 0])
    model = lle.fit_lle(X, 2, reg=0.0)
    Mf = model.M @ f
    second = f[:-2] - 2 * f[1:-1] + f[2:]
    assert np.allclose(Mf[1:-1], -0.5 * second, atol=1e-12)
    assert np.allclose(model.M @ np.ones(n), 0, atol=1e-12)


def test_affine_functions_in_null_space_when_exact():
    # points on a plane: every point is an exact affine combination of its neighbours
    g = np.stack(np.meshgrid(np.arange(8.0), np.arange(8.0)), -1).reshape(-1, 2)
    model = lle.fit_lle(g, 4, reg=1e-9)
    assert np.abs(model.M @ (2 * g[:, 0] - g[:, 1] + 3))[model.residuals < 1e-6].max() < 1e-6


def test_degeneracy_report_and_shapes():
    spec = manifolds.circle()
    cloud = manifolds.sample_points(spec, 500, 0)
    X = cloud.points
    g = graphs.build_knn_undirected_or(X, 10)
    ref = laplacians.assemble(g, "random_walk", laplacians.scaling_for(g, 1))
    model = lle.fit_lle(X, 10, reg=1e-3)
    fns = {"sin": np.sin(cloud.chart_coords[:, 0])}
    rep = lle.lle_degeneracy_report(model, X, ref, fns)
    r = rep["functions"]["sin"]
    assert 0 <= r["cancellation"] <= 1
    assert r["norm_Mf"] <= r["norm_Aplus_f"] + r["norm_Aminus_f"] + 1e-12
    with pytest.raises(LleError):
        lle.lle_degeneracy_report(model, X[:-1], ref, fns)
    with pytest.raises(LleError):
        lle.lle_degeneracy_report(model, X, ref, {"bad": np.ones(3)})


def test_small_ridge_is_degenerate_on_curve():
    spec = manifolds.circle()
    cloud = manifolds.sample_points(spec, 800, 1)
    fns = {"cos": np.cos(cloud.chart_coords[:, 0])}
    reps = lle.regularization_sweep(cloud.points, 10, [1e-6, 1.0], fns, 1)
    small, large = (r["functions"]["cos"]["ratio"] for r in reps)
    assert small < large


def test_embed_lle_shape(rng):
    spec = manifolds.circle()
    cloud = manifolds.sample_points(spec, 300, 2)
    model = lle.fit_lle(cloud.points, 8)
    Y = lle.embed_lle(model, 2)
    assert Y.shape == (300, 2)
    assert np.allclose(Y.T @ Y, np.eye(2), atol=1e-8)
    with pytest.raises(LleError):
        lle.embed_lle(model, 0)
