"""Empirical drift/diffusion estimates, moment oracles and convergence runs.

One step of the graph random walk ``P = D^-1 W`` from ``x_i`` has mean
displacement ``sum_j P_ij (x_j - x_i)``.  Scaled by ``c_n`` this estimates the
drift of the limit diffusion; the scaled covariance estimates ``sigma2 I`` in
the tangent space.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import graphs, kernels, laplacians, limits
from .density import knn_density, unit_ball_volume
from .manifolds import sample_points, tangent_frames

__all__ = [
    "ValidationError",
    "MomentEstimates",
    "TangentMoments",
    "ConvergenceReport",
    "TEST_FUNCTIONS",
    "test_function",
    "empirical_moments",
    "project_to_tangent",
    "sphere_moment_oracle",
    "interior_mask",
    "local_bandwidth",
    "build_graph",
    "run_convergence",
    "degree_limit_check",
    "smooth_field",
    "normalized_drift",
    "gaussian_graph",
    "pilot_comparison",
    "sign_agreement",
    "tangent_drift",
    "self_tuning_equivalence",
]


class ValidationError(ValueError):
    """Empty interior, bad oracle parameters, or isolated vertices."""


# --------------------------------------------------------------------------
# test functions on charts

TEST_FUNCTIONS = {
    "x": lambda u: u[:, 0],
    "x2": lambda u: u[:, 0] ** 2,
    "sin": lambda u: np.sin(u[:, 0]),
    "cos": lambda u: np.cos(u[:, 0]),
    "sin_pi_x": lambda u: np.sin(np.pi * u[:, 0]),
    "sin_half_x": lambda u: np.sin(0.5 * u[:, 0]),
    "sin_windings": lambda u: np.sin(8.0 * u[:, 0]),
    "bump": lambda u: np.exp(-np.sum(u**2, axis=1)),
}


def test_function(name):
    try:
        return TEST_FUNCTIONS[name]
    except KeyError:
        raise ValidationError(f"unknown test function {name!r}") from None


test_function.__test__ = False  # not a pytest test


# --------------------------------------------------------------------------
# empirical moments


@dataclass(frozen=True, eq=False)
class MomentEstimates:
    drift_hat: np.ndarray
    diff_hat: np.ndarray
    degree_hat: np.ndarray
    c_n: float
    second_moment: np.ndarray | None = None


@dataclass(frozen=True, eq=False)
class TangentMoments:
    drift: np.ndarray
    diffusion: np.ndarray
    drift_normal: np.ndarray
    diffusion_normal: np.ndarray

    @property
    def sigma2(self):
        """Scalar diffusion ``trace / m`` per point."""
        return np.trace(self.diffusion, axis1=1, axis2=2) / self.diffusion.shape[1]


def _c_n_and_h(scaling):
    if isinstance(scaling, laplacians.Scaling):
        return scaling.c_n, scaling.h, scaling.m
    return float(scaling), None, None


def empirical_moments(g, points, scaling):
    """Scaled one-step moments of the random walk on ``g``.

    ``scaling`` is a :class:`~laplace_limits.laplacians.Scaling` (its ``c_n``
    is used, and ``h`` scales the degrees by ``1/(n h^m)``) or a bare
    ``c_n``, in which case degrees are left raw.
    """
    X = np.asarray(points, float)
    if X.shape[0] != g.n:
        raise ValidationError("points and graph sizes differ")
    d = laplacians.degree_vector(g)
    c_n, h, m = _c_n_and_h(scaling)
    P = sp.diags(1.0 / d) @ g.W
    P = P.tocoo()
    n, b = X.shape
    delta = X[P.col] - X[P.row]
    first = np.zeros((n, b))
    for a in range(b):
        first[:, a] = np.bincount(P.row, weights=P.data * delta[:, a], minlength=n)
    second = np.zeros((n, b, b))
    for a in range(b):
        for c in range(a, b):
            v = np.bincount(P.row, weights=P.data * delta[:, a] * delta[:, c], minlength=n)
            second[:, a, c] = second[:, c, a] = v
    cov = second - np.einsum("na,nc->nac", first, first)
    cov = 0.5 * (cov + np.transpose(cov, (0, 2, 1)))
    degree = d / (n * h**m) if h is not None else d.copy()
    return MomentEstimates(
        drift_hat=c_n * first,
        diff_hat=c_n * cov,
        degree_hat=degree,
        c_n=float(c_n),
        second_moment=c_n * second,
    )


def project_to_tangent(est, H):
    """Tangent-frame moments from extrinsic ones; ``H`` is ``(n, b, m)``.

    Normal residuals are ``|(I - HH^T) mu|`` and the Frobenius norm of
    ``Sigma - HH^T Sigma HH^T``.
    """
    H = np.asarray(H, float)
    if H.shape[0] != est.drift_hat.shape[0]:
        raise ValidationError("one frame per point is required")
    mu = est.drift_hat
    S = est.diff_hat
    drift = np.einsum("nbm,nb->nm", H, mu)
    diff = np.einsum("nbi,nbc,ncj->nij", H, S, H)
    Pr = np.einsum("nbm,ncm->nbc", H, H)
    drift_normal = np.linalg.norm(mu - np.einsum("nbc,nc->nb", Pr, mu), axis=1)
    tang = np.einsum("nab,nbc,ncd->nad", Pr, S, Pr)
    diff_normal = np.linalg.norm(S - tang, axis=(1, 2))
    return TangentMoments(drift, diff, drift_normal, diff_normal)


# --------------------------------------------------------------------------
# Monte-Carlo moment oracle for the indicator kernel


def sphere_moment_oracle(m, h, v_c=None, alpha=0.0, u=None, delta=0.0, N=10**6, seed=0, control_variate=False):
    """Monte-Carlo moments of a shifted, kinked and perturbed ball.

    The support is ``|s - v_c + sign(s.u) alpha u| < h + h^3 delta``; the
    moments are ``M_k = V_m^-1 int s^(k) 1(s in support) ds``.  Returns a
    dict with ``M0, M1, M2`` and their standard errors ``se0, se1, se2``.

    Plain Monte Carlo samples the bounding cube.  ``control_variate=True``
    subtracts the centred ball ``|s| < h``, whose moments are known in
    closed form, and samples only the difference.
    """
    m = int(m)
    N = int(N)
    if N < 10**4:
        raise ValidationError("N < 1e4 is too noisy to test against")
    if m < 1 or not h > 0:
        raise ValidationError("need m >= 1 and h > 0")
    v_c = np.zeros(m) if v_c is None else np.asarray(v_c, float).reshape(m)
    if u is None:
        u = np.eye(m)[0]
    u = np.asarray(u, float).reshape(m)
    u = u / np.linalg.norm(u)
    radius = h + h**3 * float(delta)
    half = radius + np.linalg.norm(v_c) + abs(alpha)
    rng = np.random.default_rng(seed)
    Vm = unit_ball_volume(m)
    vol = (2 * half) ** m
    out = {}
    # chunked to keep memory flat
    chunk = 200_000
    sums = {k: 0.0 for k in ("k0", "k0sq")}
    s1 = np.zeros(m)
    s1sq = np.zeros(m)
    s2 = np.zeros((m, m))
    s2sq = np.zeros((m, m))
    done = 0
    while done < N:
        b = min(chunk, N - done)
        s = rng.uniform(-half, half, size=(b, m))
        sgn = np.sign(s @ u)
        inside = np.linalg.norm(s - v_c + sgn[:, None] * alpha * u, axis=1) < radius
        val = inside.astype(float)
        if control_variate:
            val = val - (np.linalg.norm(s, axis=1) < h)
        sums["k0"] += val.sum()
        sums["k0sq"] += (val**2).sum()
        q1 = s * val[:, None]
        s1 += q1.sum(0)
        s1sq += (q1**2).sum(0)
        q2 = np.einsum("ni,nj,n->nij", s, s, val)
        s2 += q2.sum(0)
        s2sq += (q2**2).sum(0)
        done += b
    scale = vol / Vm

    def mean_se(total, total_sq):
        mean = total / N
        var = np.maximum(total_sq / N - mean**2, 0.0)
        return scale * mean, scale * np.sqrt(var / N)

    out["M0"], out["se0"] = mean_se(sums["k0"], sums["k0sq"])
    out["M1"], out["se1"] = mean_se(s1, s1sq)
    out["M2"], out["se2"] = mean_se(s2, s2sq)
    if control_variate:
        out["M0"] = out["M0"] + h**m
        out["M2"] = out["M2"] + h ** (m + 2) / (m + 2) * np.eye(m)
    out["N"] = N
    return out


# --------------------------------------------------------------------------
# graphs, interiors, local bandwidth


def build_graph(construction, points, param, m=None, pilot_k=None):
    """Build one of the catalogue graphs.  ``param`` is r or k."""
    if construction == "r_neighborhood":
        return graphs.build_r_neighborhood(points, param)
    if construction == "knn_directed":
        return graphs.build_knn_directed(points, int(param))
    if construction == "knn_undirected_or":
        return graphs.build_knn_undirected_or(points, int(param))
    if construction == "self_tuning":
        return graphs.build_self_tuning(points, int(param))
    if construction == "pilot_weighted_knn":
        if m is None:
            raise ValidationError("pilot weights need the intrinsic dimension")
        pilot = knn_density(points, int(pilot_k or param), m)
        return graphs.build_pilot_weighted_knn(points, int(param), pilot)
    raise ValidationError(f"unknown construction {construction!r}")


def local_bandwidth(construction, points, param):
    """Per-point neighbourhood radius: r, or the k-NN distance."""
    if construction == "r_neighborhood":
        return np.full(len(points), float(param))
    return graphs.knn_radii(graphs.build_index(points), int(param)).rho


def interior_mask(spec, chart, bandwidth, collar=2.0):
    """Points at chart distance >= ``collar * bandwidth`` from the boundary."""
    return spec.boundary_distance(chart) >= collar * np.asarray(bandwidth, float)


# --------------------------------------------------------------------------
# convergence runs


@dataclass
class ConvergenceReport:
    construction: str
    manifold: dict
    grid: list
    seeds: list
    errors: dict = field(default_factory=dict)
    runtime: float = 0.0
    warnings: list = field(default_factory=list)
    point_errors: dict = field(default_factory=dict, repr=False)

    def median_over_seeds(self, metric):
        """Per-grid-point median of ``metric`` across seeds."""
        return [float(np.median([self.errors[_key(g, s)][metric] for s in self.seeds])) for g in self.grid]

    def pooled_median(self, metric="drift"):
        """Per-grid-point median of per-point errors pooled over all seeds."""
        return [
            float(np.median(np.concatenate([self.point_errors[_key(g, s)][metric] for s in self.seeds])))
            for g in self.grid
        ]

    def to_dict(self):
        return {
            "construction": self.construction,
            "manifold": self.manifold,
            "grid": [list(g) for g in self.grid],
            "seeds": list(self.seeds),
            "errors": self.errors,
            "runtime": self.runtime,
            "warnings": list(self.warnings),
        }


def _key(g, seed):
    return f"n={g[0]},param={g[1]:.6g},seed={seed}"


def _regime_value(n, h, m):
    return n * h ** (m + 2) / np.log(n)


def run_convergence(spec, construction, grid, seeds, f_test=(), drift_only=False):
    """Compare empirical generators and moments with the catalogue limit.

    ``grid`` holds ``(n, param)`` pairs (param is r or k).  For each cell the
    errors over interior points are recorded: ``drift_sup``, ``drift_median``
    (tangent drift vs the limit drift), ``diffusion_median`` and, for each
    test function, ``gen_<name>_sup`` / ``gen_<name>_median`` comparing
    ``-c_n L_rw f`` with ``A f``.
    """
    t0 = time.perf_counter()
    op = limits.catalog_limit(construction, spec)
    report = ConvergenceReport(construction, spec.to_dict(), [tuple(g) for g in grid], list(seeds))
    fns = [(f, test_function(f)) if isinstance(f, str) else (getattr(f, "__name__", "f"), f) for f in f_test]
    for n, param in report.grid:
        n = int(n)
        for seed in report.seeds:
            cloud = sample_points(spec, n, seed)
            g = build_graph(construction, cloud.points, param, m=spec.m)
            scaling = laplacians.scaling_for(g, spec.m)
            if construction == "r_neighborhood":
                rv = _regime_value(n, scaling.h, spec.m)
                if rv < 10:
                    report.warnings.append(f"n={n}: n h^(m+2)/log n = {rv:.3g} is small")
            bw = local_bandwidth(construction, cloud.points, param)
            mask = interior_mask(spec, cloud.chart_coords, bw)
            if not mask.any():
                raise ValidationError(f"no interior points at n={n}")
            u = cloud.chart_coords[mask]
            est = empirical_moments(g, cloud.points, scaling)
            tm = project_to_tangent(est, tangent_frames(spec, cloud.chart_coords))
            derr = np.linalg.norm(tm.drift[mask] - op.drift(u), axis=1)
            serr = np.abs(tm.sigma2[mask] - op.diffusion_scale(u))
            cell = {
                "drift_sup": float(derr.max()),
                "drift_median": float(np.median(derr)),
                "diffusion_median": float(np.median(serr)),
                "n_interior": int(mask.sum()),
                "h": float(scaling.h),
            }
            if not drift_only and fns:
                L = laplacians.assemble(g, "random_walk", scaling)
                for name, f in fns:
                    emp = laplacians.apply(L, f(cloud.chart_coords))[mask]
                    err = np.abs(emp - op.generator(f, u))
                    cell[f"gen_{name}_sup"] = float(err.max())
                    cell[f"gen_{name}_median"] = float(np.median(err))
            report.errors[_key((n, param), seed)] = cell
            report.point_errors[_key((n, param), seed)] = {"drift": derr, "diffusion": serr}
    report.runtime = time.perf_counter() - t0
    for w in report.warnings:
        warnings.warn(w, RuntimeWarning, stacklevel=2)
    return report


def sign_agreement(drift, reference, mask=None):
    """Fraction of points where ``sign(drift) == sign(reference)`` (1-D)."""
    a = np.sign(np.asarray(drift, float).ravel())
    b = np.sign(np.asarray(reference, float).ravel())
    if mask is not None:
        a, b = a[mask], b[mask]
    keep = b != 0
    return float(np.mean(a[keep] == b[keep]))


def degree_limit_check(g, spec, construction, chart, scaling=None):
    """Relative error of the scaled degrees against the limit degree function.

    ``construction`` is a catalogue name or a :class:`LimitOperator`.
    Degrees are scaled by ``1/(n h^m)``; for kNN-family graphs this is
    ``1/k`` and the limit is the constant 1 (or p for pilot weights).
    """
    op = construction if isinstance(construction, limits.LimitOperator) else limits.catalog_limit(construction, spec)
    if scaling is None:
        scaling = laplacians.scaling_for(g, spec.m)
    d = laplacians.degree_vector(g) / (g.n * scaling.h**spec.m)
    ref = op.degree_fn(chart)
    return (d - ref) / ref


# --------------------------------------------------------------------------
# drift-field comparisons


def smooth_field(chart, values, degree=2):
    """Least-squares polynomial fit of each column of ``values`` over ``chart``.

    Returns a callable evaluating the fitted field at chart points.
    """
    u = np.asarray(chart, float)
    v = np.asarray(values, float)
    v2 = v.reshape(len(u), -1)
    center = u.mean(0)
    scale = u.std(0) + 1e-300

    def design(x):
        z = (np.asarray(x, float) - center) / scale
        cols = [np.ones(len(z))]
        m = z.shape[1]
        from itertools import combinations_with_replacement

        for deg in range(1, degree + 1):
            for idx in combinations_with_replacement(range(m), deg):
                cols.append(np.prod(z[:, list(idx)], axis=1))
        return np.stack(cols, axis=1)

    coef, *_ = np.linalg.lstsq(design(u), v2, rcond=None)

    def fitted(x):
        out = design(x) @ coef
        return out.reshape((len(out),) + v.shape[1:])

    return fitted


def normalized_drift(g, points, H):
    """``mu / sigma2`` in tangent coordinates; free of the scaling constant."""
    est = empirical_moments(g, points, 1.0)
    tm = project_to_tangent(est, H)
    s2 = tm.sigma2
    # a single neighbour gives zero variance; report nan there
    return np.divide(tm.drift, s2[:, None], out=np.full_like(tm.drift, np.nan), where=s2[:, None] > 0)


def gaussian_graph(points, k):
    """Degree-normalized Gaussian kernel graph with the one-step heuristic.

    The bandwidth is the median, over points, of the standard deviation of
    one step of the random walk on the unweighted OR-kNN graph.  Weights are
    ``K(x,y) / (d(x) d(y))^(1/2)`` with ``K = exp(-|x-y|^2 / (2 s^2))`` cut
    at ``3 s``.
    """
    X = np.asarray(points, float)
    knn = graphs.build_knn_undirected_or(X, k)
    est = empirical_moments(knn, X, 1.0)
    per_point = np.sqrt(np.trace(est.diff_hat, axis1=1, axis2=2))
    s = float(np.median(per_point))
    spec = kernels.KernelSpec(
        kernels.truncated_gaussian(3.0 / np.sqrt(2.0)),
        kernels.constant_bandwidth(1.0),
        kernels.constant_weight(1.0),
        h=np.sqrt(2.0) * s,
    )
    K = graphs.build_kernel_graph(X, spec)
    # points with no neighbour inside the cutoff stay isolated
    dK = K.degree
    inv = sp.diags(np.divide(1.0, np.sqrt(dK), out=np.zeros_like(dK), where=dK > 0))
    W = (inv @ K.W @ inv).tocsr()
    W = 0.5 * (W + W.T)
    params = {"h": float(spec.h), "base": "truncated_gaussian", "cutoff": 3.0 / np.sqrt(2.0), "sigma": s}
    return graphs.SparseGraph(W, "generic_kernel", params, symmetric=True)


def pilot_comparison(spec, n, k, seed, pilot_k=None, degree=2):
    """Distances of kNN and pilot-weighted kNN drift fields to the Gaussian one.

    Each field is the diffusion-normalized drift ``mu / sigma2``, smoothed by
    a quadratic fit over interior chart points; the distance is the max over
    interior points of the Euclidean norm of the difference.
    """
    cloud = sample_points(spec, n, seed)
    X, u = cloud.points, cloud.chart_coords
    H = tangent_frames(spec, u)
    rho = local_bandwidth("knn_undirected_or", X, k)
    mask = interior_mask(spec, u, rho)
    if not mask.any():
        raise ValidationError("empty interior")
    gauss = gaussian_graph(X, k)
    connected = gauss.degree > 0
    mask &= connected
    gauss = graphs.SparseGraph(gauss.W[connected][:, connected], gauss.construction, gauss.params, True)
    fields = {}
    for name, g, keep in (
        ("gaussian", gauss, connected),
        ("knn", build_graph("knn_undirected_or", X, k), slice(None)),
        ("pilot", build_graph("pilot_weighted_knn", X, k, m=spec.m, pilot_k=pilot_k), slice(None)),
    ):
        v = np.zeros((len(X), spec.m))
        v[keep] = normalized_drift(g, X[keep], H[keep])
        fields[name] = v
    mask &= np.all([np.isfinite(v).all(axis=1) for v in fields.values()], axis=0)
    for name, v in fields.items():
        fields[name] = smooth_field(u[mask], v[mask], degree)(u[mask])
    dist = {
        name: float(np.max(np.linalg.norm(fields[name] - fields["gaussian"], axis=1))) for name in ("knn", "pilot")
    }
    dist["n_interior"] = int(mask.sum())
    dist["n_isolated_gaussian"] = int((~connected).sum())
    return dist


def tangent_drift(g, cloud, spec):
    """Tangent-frame drift with the default scaling for ``g``."""
    est = empirical_moments(g, cloud.points, laplacians.scaling_for(g, spec.m))
    return project_to_tangent(est, tangent_frames(spec, cloud.chart_coords)).drift


def self_tuning_equivalence(spec, n, k, seed, degree=4):
    """Self-tuning vs OR-kNN drift fields and their shared catalogue limit.

    Both empirical fields are smoothed by a polynomial fit in the ambient
    coordinates of interior points; distances are sup-norms over interior
    points.  Returns ``between``, ``self_tuning`` and ``knn_or``.
    """
    cloud = sample_points(spec, n, seed)
    X, u = cloud.points, cloud.chart_coords
    mask = interior_mask(spec, u, local_bandwidth("knn_undirected_or", X, k))
    if not mask.any():
        raise ValidationError("empty interior")
    lim = limits.catalog_limit("self_tuning", spec).drift(u[mask])
    fit = {}
    for name in ("self_tuning", "knn_undirected_or"):
        v = tangent_drift(build_graph(name, X, k), cloud, spec)
        fit[name] = smooth_field(X[mask], v[mask], degree)(X[mask])

    def sup(a):
        return float(np.max(np.linalg.norm(a, axis=1)))

    return {
        "between": sup(fit["self_tuning"] - fit["knn_undirected_or"]),
        "self_tuning": sup(fit["self_tuning"] - lim),
        "knn_or": sup(fit["knn_undirected_or"] - lim),
        "n_interior": int(mask.sum()),
    }
