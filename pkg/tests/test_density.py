import numpy as np
import pytest

from laplace_limits import density, manifolds


def test_unit_ball_volumes():
    assert density.unit_ball_volume(1) == pytest.approx(2.0)
    assert density.unit_ball_volume(2) == pytest.approx(np.pi)
    assert density.unit_ball_volume(3) == pytest.approx(4 * np.pi / 3)


def test_knn_density_on_lattice():
    # interior lattice points have their 2nd neighbour at one spacing
    n, step = 101, 0.01
    X = (np.arange(n) * step)[:, None]
    est = density.knn_density(X, 2, 1)
    assert np.allclose(est.values[1:-1], 2 / (n * 2 * step))


def test_knn_density_uniform_square():
    spec = manifolds.flat_interval(1.0)
    cloud = manifolds.sample_points(spec, 20000, 1)
    est = density.knn_density(cloud.points, 50, 1)
    inner = (cloud.chart_coords[:, 0] > 0.1) & (cloud.chart_coords[:, 0] < 0.9)
    assert np.median(est.values[inner]) == pytest.approx(1.0, rel=0.05)


def test_knn_density_tracks_truncated_normal():
    spec = manifolds.flat_interval(4.0, "truncated_normal", mean=2.0, sd=1.0)
    cloud = manifolds.sample_points(spec, 20000, 2)
    est = density.knn_density(cloud.points, 100, 1)
    u = cloud.chart_coords
    inner = np.abs(u[:, 0] - 2) < 1.5
    rel = est.values[inner] / spec.density(u[inner]) - 1
    assert np.median(np.abs(rel)) < 0.1


def test_invalid_inputs():
    X = np.zeros((5, 1))
    with pytest.raises(ValueError):
        density.knn_density(X, 2, 1)
    with pytest.raises(ValueError):
        density.knn_density(np.arange(5.0)[:, None], 2, 0)
    with pytest.raises(ValueError):
        density.DensityEstimate(values=np.array([1.0, 0.0]), k=1, m=1)


def test_pilot_weight_field():
    X = np.arange(20.0)[:, None] * 0.1
    est = density.knn_density(X, 2, 1)
    w = density.pilot_weights(est)
    assert w.symmetric
    assert np.allclose(w.at_points(X), est.values)
    assert w(X[:1], X[1:2])[0] == pytest.approx(np.sqrt(est.values[0] * est.values[1]))
    assert w.source["kind"] == "knn_density"
