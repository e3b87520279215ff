"""k-NN density estimates on a manifold of known intrinsic dimension."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from . import graphs
from .kernels import SampleLookup, WeightField

__all__ = ["DensityEstimate", "unit_ball_volume", "knn_density", "pilot_weights"]


def unit_ball_volume(m):
    """Volume of the unit ball in R^m, ``pi^(m/2) / Gamma(m/2 + 1)``."""
    m = int(m)
    return float(np.exp(0.5 * m * np.log(np.pi) - gammaln(0.5 * m + 1.0)))


@dataclass(frozen=True, eq=False)
class DensityEstimate:
    values: np.ndarray
    k: int
    m: int
    points: np.ndarray | None = None
    method: str = "knn_balloon"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if np.any(~np.isfinite(v)) or np.any(v <= 0):
            raise ValueError("density estimate must be positive and finite")


def knn_density(points, k, m):
    """Balloon estimate ``k / (n V_m rho_k(x)^m)`` at every sample point."""
    if int(m) <= 0:
        raise ValueError("m must be positive")
    index = points if isinstance(points, graphs.NeighborIndex) else graphs.build_index(points)
    radii = graphs.knn_radii(index, k, m=int(m))
    if np.any(radii.rho <= 0):
        raise ValueError("duplicate points give a zero k-NN radius")
    vals = radii.k / (index.n * unit_ball_volume(m) * radii.rho ** int(m))
    return DensityEstimate(values=vals, k=int(k), m=int(m), points=index.points)


def pilot_weights(est):
    """Symmetric weight field ``sqrt(p(x) p(y))`` from a pilot estimate.

    Off-sample points take the value of their nearest sample.
    """
    if est.points is None:
        raise ValueError("estimate carries no sample points")
    source = {"kind": "knn_density", "k": est.k, "m": est.m}
    return WeightField("geometric", SampleLookup(est.points, est.values), None, source)
