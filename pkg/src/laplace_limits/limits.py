"""Analytic limit operators of scaled graph Laplacians.

A limit is a diffusion generator on the manifold,

    A f = 1/2 * sigma2(x) * Delta f + <mu(x), grad f>,

with drift ``mu`` and scalar diffusion ``sigma2`` given in tangent-frame
coordinates.  When the drift is ``sigma2/2 * grad log q`` the generator is the
weighted Laplace-Beltrami form ``sigma2/2 * Delta_q`` with

    Delta_q f = Delta f + <grad q / q, grad f>,

whose quadratic form is ``<f, Delta_q f>_{L2(q)} = -|grad f|^2_{L2(q)}``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .density import unit_ball_volume
from .manifolds import _as_chart, integrate_on_manifold, tangent_gradient, volume_integral

__all__ = [
    "LimitOperator",
    "CATALOG",
    "chart_gradient",
    "laplace_beltrami",
    "limit_from_fields",
    "catalog_limit",
    "knn_fields",
    "apply_weighted_LB",
    "smoothness_functional",
    "discrete_smoothness",
    "inner_product",
]

FD_STEP = 1e-4

CATALOG = ("r_neighborhood", "knn_directed", "knn_undirected_or", "self_tuning", "pilot_weighted_knn")


@dataclass(frozen=True, eq=False)
class LimitOperator:
    """Drift, diffusion, degree and (optionally) weighted-LB data of a limit.

    ``drift`` returns ``(N, m)`` tangent-frame vectors; ``diffusion_scale``
    returns ``sigma2`` so that ``sigma sigma^T = sigma2 * I``.  When
    ``weight_density`` is set the operator equals
    ``prefactor / 2 * Delta_q`` with ``q = weight_density``.
    """

    manifold: object
    drift: Callable
    diffusion_scale: Callable
    degree_fn: Callable
    weight_density: kernels.ScalarField | None = None
    prefactor: Callable | None = None
    name: str = ""

    def generator(self, f, chart):
        """``A f`` at chart points for a chart function ``f``."""
        u = _as_chart(chart, self.manifold.m)
        grad = tangent_gradient(self.manifold, u, chart_gradient(f, u))
        lap = laplace_beltrami(self.manifold, f, u)
        return 0.5 * self.diffusion_scale(u) * lap + np.sum(self.drift(u) * grad, axis=1)


# --------------------------------------------------------------------------
# finite-difference calculus on charts


def _steps(u):
    return FD_STEP * np.maximum(1.0, np.abs(u))


def chart_gradient(f, chart):
    """Five-point central-difference chart partials of ``f``."""
    u = np.asarray(chart, float)
    n, m = u.shape
    out = np.empty((n, m))
    eps = _steps(u)
    for i in range(m):
        e = np.zeros_like(u)
        e[:, i] = eps[:, i]
        out[:, i] = (-f(u + 2 * e) + 8 * f(u + e) - 8 * f(u - e) + f(u - 2 * e)) / (12 * eps[:, i])
    return out


def _hessian(f, u):
    n, m = u.shape
    eps = _steps(u)
    H = np.empty((n, m, m))
    f0 = f(u)
    for i in range(m):
        ei = np.zeros_like(u)
        ei[:, i] = eps[:, i]
        H[:, i, i] = (-f(u + 2 * ei) + 16 * f(u + ei) - 30 * f0 + 16 * f(u - ei) - f(u - 2 * ei)) / (12 * eps[:, i] ** 2)
        for j in range(i + 1, m):
            ej = np.zeros_like(u)
            ej[:, j] = eps[:, j]
            v = (f(u + ei + ej) - f(u + ei - ej) - f(u - ei + ej) + f(u - ei - ej)) / (4 * eps[:, i] * eps[:, j])
            H[:, i, j] = H[:, j, i] = v
    return H


def _metric_flux(spec, u):
    """``sqrt(det G) * G^{-1}`` with shape (N, m, m)."""
    J = spec.jacobian(u)
    G = np.einsum("nbi,nbj->nij", J, J)
    return np.sqrt(np.linalg.det(G))[:, None, None] * np.linalg.inv(G), G


def laplace_beltrami(spec, f, chart):
    """``Delta f = g^{ij} d_ij f + g^{-1/2} d_i(g^{1/2} g^{ij}) d_j f``."""
    u = _as_chart(chart, spec.m)
    n, m = u.shape
    flux, G = _metric_flux(spec, u)
    Ginv = np.linalg.inv(G)
    sqrtg = np.sqrt(np.linalg.det(G))
    eps = _steps(u)
    div = np.zeros((n, m))
    for i in range(m):
        e = np.zeros_like(u)
        e[:, i] = eps[:, i]
        F = lambda v: _metric_flux(spec, v)[0][:, i, :]  # noqa: E731
        d = (-F(u + 2 * e) + 8 * F(u + e) - 8 * F(u - e) + F(u - 2 * e)) / (12 * eps[:, i : i + 1])
        div += d
    grad = chart_gradient(f, u)
    hess = _hessian(f, u)
    return np.einsum("nij,nij->n", Ginv, hess) + np.sum(div * grad, axis=1) / sqrtg


# --------------------------------------------------------------------------
# limits from fields


def limit_from_fields(bandwidth, weight, spec, base=None):
    """Drift, diffusion and degree predicted for a generalized kernel graph.

    ``mu = r^2 (grad p / p + grad w / w + (m+2) r_dot / r)`` and
    ``sigma2 = r^2``, where ``r = r_x(x)``, ``w = w_x(x)`` and the gradients
    are taken in the second argument at ``y = x``.  The degree function is
    ``V_m C' r^m w p``.
    """
    base = base or kernels.indicator()
    m = spec.m
    _, Cp, _ = kernels.base_kernel_constants(base, m)
    Vm = unit_ball_volume(m)

    def tg(u, g):
        return tangent_gradient(spec, u, g)

    def drift(u):
        u = _as_chart(u, m)
        r = bandwidth.at_diag(u)
        w = weight.at_diag(u)
        term = tg(u, spec.grad_log_p(u))
        term = term + tg(u, weight.grad_w(u)) / w[:, None]
        term = term + (m + 2) * tg(u, bandwidth.r_dot(u)) / r[:, None]
        return (r**2)[:, None] * term

    def diffusion(u):
        return bandwidth.at_diag(_as_chart(u, m)) ** 2

    def degree(u):
        u = _as_chart(u, m)
        return Vm * Cp * bandwidth.at_diag(u) ** m * weight.at_diag(u) * spec.density(u)

    q = prefactor = None
    if bandwidth.symmetric and weight.symmetric and bandwidth.rule != "max":
        # q = p^2 omega gamma^(m+2)
        def qfn(u):
            return spec.density(u) ** 2 * weight.at_diag(u) * bandwidth.at_diag(u) ** (m + 2)

        def qgrad(u):
            gamma, om = bandwidth.at_diag(u), weight.at_diag(u)
            dl = 2 * spec.grad_log_p(u) + weight.diag.grad(u) / om[:, None]
            dl = dl + (m + 2) * bandwidth.diag.grad(u) / gamma[:, None]
            return qfn(u)[:, None] * dl

        q = kernels.ScalarField(qfn, qgrad, "q_from_fields")
        prefactor = diffusion
    return LimitOperator(spec, drift, diffusion, degree, q, prefactor, name="from_fields")


def knn_fields(spec, rule="source"):
    """Limit bandwidth/weight fields of kNN-type graphs on ``spec``.

    ``gamma = V_m^(-1/m) p^(-1/m)`` combined by ``rule`` (``source`` for the
    directed graph, ``max`` for the OR graph, ``geometric`` for self-tuning),
    with unit weights.
    """
    m = spec.m
    c = unit_ball_volume(m) ** (-1.0 / m)
    p = kernels.density_field(spec)

    def gamma(u):
        return c * p.fn(u) ** (-1.0 / m)

    def ggrad(u):
        return (-1.0 / m) * gamma(u)[:, None] * spec.grad_log_p(u)

    diag = kernels.ScalarField(gamma, ggrad, "knn_gamma", {"c": c})
    bw = kernels.BandwidthField(rule, lambda X: gamma(spec.chart_of(X)), diag, {"kind": "knn_limit", "rule": rule})
    return bw, kernels.constant_weight(1.0, m)


def _density_power(spec, a):
    p = kernels.density_field(spec)
    return kernels.power_field(p, a)


_CATALOG_CACHE: dict = {}


def catalog_limit(construction, spec):
    """Closed-form limit operators of the standard constructions.

    ======================  ==========================  ======================
    construction            drift / sigma2               operator
    ======================  ==========================  ======================
    r_neighborhood          grad log p                   1/2 Delta_{p^2}
    knn_directed            grad log p                   s/2 Delta_{p^2}
    knn_undirected_or       (m-2)/(2m) grad log p        s/2 Delta_{p^(1-2/m)}
    self_tuning             same as knn_undirected_or
    pilot_weighted_knn      (m-1)/m grad log p           s/2 Delta_{p^(2-2/m)}
    ======================  ==========================  ======================

    where ``s = sigma2 = V_m^(-2/m) p^(-2/m)`` for the kNN family.
    """
    key = (construction if construction != "self_tuning" else "knn_undirected_or", id(spec))
    if key in _CATALOG_CACHE and _CATALOG_CACHE[key].manifold is spec:
        return _CATALOG_CACHE[key]
    m = spec.m
    Vm = unit_ball_volume(m)
    c2 = Vm ** (-2.0 / m)

    def glp(u):
        return tangent_gradient(spec, u, spec.grad_log_p(u))

    if construction == "r_neighborhood":
        coef, qexp = 1.0, 2.0

        def sigma2(u):
            return np.ones(len(_as_chart(u, m)))

        def degree(u):
            return Vm * spec.density(_as_chart(u, m))

    elif construction in ("knn_directed", "knn_undirected_or", "self_tuning", "pilot_weighted_knn"):
        coef, qexp = {
            "knn_directed": (1.0, 2.0),
            "knn_undirected_or": ((m - 2) / (2.0 * m), 1.0 - 2.0 / m),
            "self_tuning": ((m - 2) / (2.0 * m), 1.0 - 2.0 / m),
            "pilot_weighted_knn": ((m - 1.0) / m, 2.0 - 2.0 / m),
        }[construction]

        def sigma2(u):
            return c2 * spec.density(_as_chart(u, m)) ** (-2.0 / m)

        if construction == "pilot_weighted_knn":

            def degree(u):
                return spec.density(_as_chart(u, m))

        else:

            def degree(u):
                return np.ones(len(_as_chart(u, m)))

    else:
        raise ValueError(f"unknown construction {construction!r}")

    def drift(u):
        u = _as_chart(u, m)
        return coef * sigma2(u)[:, None] * glp(u)

    op = LimitOperator(
        spec,
        drift,
        sigma2,
        degree,
        weight_density=_density_power(spec, qexp),
        prefactor=sigma2,
        name=key[0],
    )
    _CATALOG_CACHE[key] = op
    return op


# --------------------------------------------------------------------------
# weighted Laplace-Beltrami and smoothness


def _log_grad(q, u):
    if isinstance(q, kernels.ScalarField):
        return q.grad(u) / q.fn(u)[:, None]
    return chart_gradient(lambda v: np.log(q(v)), u)


def apply_weighted_LB(q, f, chart, spec):
    """``Delta_q f = Delta f + <grad q / q, grad f>`` at chart points.

    ``q`` is a :class:`~laplace_limits.kernels.ScalarField` or a plain chart
    callable (then differentiated numerically).
    """
    u = _as_chart(chart, spec.m)
    if not spec.in_domain(u).all():
        raise ValueError("chart point outside the domain")
    gq = tangent_gradient(spec, u, _log_grad(q, u))
    gf = tangent_gradient(spec, u, chart_gradient(f, u))
    return laplace_beltrami(spec, f, u) + np.sum(gq * gf, axis=1)


def _qfn(q):
    return q.fn if isinstance(q, kernels.ScalarField) else q


def smoothness_functional(q, f, spec, order=256):
    """``|grad f|^2_{L2(q)} = int |grad f|^2 q dvol`` by quadrature."""

    def integrand(u):
        g = tangent_gradient(spec, u, chart_gradient(f, u))
        return np.sum(g * g, axis=1) * _qfn(q)(u)

    return volume_integral(spec, integrand, order)


def inner_product(spec, f, g, weight=None, order=256):
    """``int f g weight dvol``; ``weight=None`` means the sampling density."""
    if weight is None:
        return integrate_on_manifold(spec, lambda u: f(u) * g(u), order)
    return volume_integral(spec, lambda u: f(u) * g(u) * _qfn(weight)(u), order)


def discrete_smoothness(L, f):
    """``scaling * f^T L f / n`` for a Laplacian from :mod:`laplacians`.

    For the unnormalized kind this approximates ``-<f, d A f>_{L2(p)}``.
    """
    f = np.asarray(f, float)
    return float(L.scaling * f @ (L.matrix @ f) / L.n)
