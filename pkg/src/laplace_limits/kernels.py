"""Generalized kernels with location-dependent bandwidth and weight fields.

A kernel is ``K(x, y) = w_x(y) * K0(|y - x| / (h * r_x(y)))``.  The base
kernel ``K0`` is stored through its level decomposition
``K0(u) = sum_l a_l * 1(u < z_l)``, which makes the moment constants exact
finite sums.  Bandwidth and weight fields are built from a per-point
"diagonal" value (``gamma = r_x(x)``, ``omega = w_x(x)``) and a rule that
combines the values at the two endpoints of an edge.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.spatial import cKDTree

__all__ = [
    "KernelError",
    "BaseKernel",
    "ScalarField",
    "BandwidthField",
    "WeightField",
    "KernelSpec",
    "indicator",
    "step_sum",
    "truncated_gaussian",
    "constant_field",
    "density_field",
    "power_field",
    "constant_bandwidth",
    "constant_weight",
    "eval_kernel",
    "kernel_values",
    "base_kernel_constants",
    "design_bandwidth_weight",
    "kernel_spec_to_dict",
    "kernel_spec_from_dict",
]

GAUSSIAN_STAIRCASE_LEVELS = 256


class KernelError(ValueError):
    """Invalid kernel, field, or designer input."""


# --------------------------------------------------------------------------
# base kernels


@dataclass(frozen=True)
class BaseKernel:
    kind: str
    heights: tuple = ()
    radii: tuple = ()
    cutoff: float = 3.0

    def __post_init__(self):
        if self.kind in ("indicator", "step_sum"):
            if len(self.heights) != len(self.radii) or not self.heights:
                raise KernelError("step kernel needs matching heights and radii")
            if any(z <= 0 for z in self.radii):
                raise KernelError("step radii must be positive")
            # value on each interval between consecutive radii must be >= 0
            order = np.argsort(self.radii)[::-1]
            running = np.cumsum(np.asarray(self.heights, float)[order])
            if np.any(running < -1e-15):
                raise KernelError("step decomposition gives a negative kernel value")
        elif self.kind == "truncated_gaussian":
            if not self.cutoff > 0:
                raise KernelError("cutoff must be positive")
        else:
            raise KernelError(f"unknown base kernel {self.kind!r}")

    @property
    def support_radius(self):
        if self.kind == "truncated_gaussian":
            return float(self.cutoff)
        return float(max(self.radii))

    def __call__(self, u):
        u = np.abs(np.asarray(u, dtype=float))
        if self.kind == "truncated_gaussian":
            return np.where(u < self.cutoff, np.exp(-(u**2)), 0.0)
        out = np.zeros(u.shape)
        for a, z in zip(self.heights, self.radii):
            out = out + a * (u < z)
        return out

    def level_decomposition(self):
        """Heights and radii ``(a_l, z_l)`` with ``K0(u) = sum a_l 1(u < z_l)``.

        Exact for step kernels.  The truncated Gaussian is replaced by a
        staircase whose levels sit at the midpoints of 256 equal slices of
        its range, plus the jump at the cutoff.
        """
        if self.kind != "truncated_gaussian":
            return np.asarray(self.heights, float), np.asarray(self.radii, float)
        c = float(self.cutoff)
        floor = np.exp(-c * c)
        n = GAUSSIAN_STAIRCASE_LEVELS
        edges = floor + (1.0 - floor) * np.arange(n) / n
        mids = edges + 0.5 * (1.0 - floor) / n
        radii = np.sqrt(-np.log(mids))
        heights = np.full(n, (1.0 - floor) / n)
        return np.append(heights, floor), np.append(radii, c)


def indicator():
    """``K0(u) = 1(u < 1)``."""
    return BaseKernel("indicator", heights=(1.0,), radii=(1.0,))


def step_sum(pairs):
    """``K0(u) = sum height * 1(u < radius)`` over ``(height, radius)`` pairs."""
    pairs = [(float(a), float(z)) for a, z in pairs]
    return BaseKernel("step_sum", heights=tuple(a for a, _ in pairs), radii=tuple(z for _, z in pairs))


def truncated_gaussian(cutoff=3.0):
    """``K0(u) = exp(-u^2)`` for ``u < cutoff``, else 0."""
    return BaseKernel("truncated_gaussian", cutoff=float(cutoff))


def base_kernel_constants(base, m):
    """Return ``(C, C', Z)`` for the level measure of ``base`` in dimension m.

    ``C = int u^(m+2) d eta``, ``C' = int u^m d eta`` and
    ``Z = (m + 2) C' / C``; the random-walk scaling is then ``Z / h^2``.
    """
    m = int(m)
    if m < 1:
        raise KernelError("m must be >= 1")
    if base.kind == "truncated_gaussian":
        c = base.cutoff
        jump = np.exp(-c * c)
        dens = lambda z, p: z**p * 2.0 * z * np.exp(-z * z)  # noqa: E731
        C = integrate.quad(dens, 0.0, c, args=(m + 2,), epsabs=1e-12, epsrel=1e-12)[0] + c ** (m + 2) * jump
        Cp = integrate.quad(dens, 0.0, c, args=(m,), epsabs=1e-12, epsrel=1e-12)[0] + c**m * jump
    else:
        a, z = base.level_decomposition()
        C = float(np.sum(a * z ** (m + 2)))
        Cp = float(np.sum(a * z**m))
    if not (C > 0 and Cp > 0):
        raise KernelError("kernel level measure has non-positive moments")
    return C, Cp, (m + 2) * Cp / C


# --------------------------------------------------------------------------
# scalar fields on a chart


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A positive chart function with its chart-coordinate gradient."""

    fn: Callable
    grad: Callable
    name: str = ""
    params: dict = field(default_factory=dict)

    def __call__(self, chart):
        return self.fn(chart)


def constant_field(value, m):
    value = float(value)
    return ScalarField(
        fn=lambda u: np.full(len(np.atleast_2d(u)), value),
        grad=lambda u: np.zeros((len(np.atleast_2d(u)), m)),
        name="constant",
        params={"value": value},
    )


def density_field(manifold):
    """The manifold's sampling density as a :class:`ScalarField`."""
    return ScalarField(
        fn=manifold.density,
        grad=lambda u: manifold.density(u)[:, None] * manifold.grad_log_p(u),
        name="density_power",
        params={"exponent": 1.0},
    )


def power_field(base, exponent):
    """``base ** exponent`` with the chain-rule gradient."""
    e = float(exponent)

    def fn(u):
        return base.fn(u) ** e

    def grad(u):
        v = base.fn(u)
        return (e * v ** (e - 1.0))[:, None] * base.grad(u)

    params = dict(base.params)
    if base.name == "density_power":
        params["exponent"] = params.get("exponent", 1.0) * e
        return ScalarField(fn, grad, "density_power", params)
    return ScalarField(fn, grad, f"power({base.name})", {"base": base.params, "exponent": e})


# --------------------------------------------------------------------------
# bandwidth and weight fields

_GRAD_FACTOR = {"constant": 0.0, "source": 0.0, "destination": 1.0, "max": 0.5, "geometric": 0.5}
_SYMMETRIC = {"constant", "max", "geometric"}


def _combine(rule, gx, gy):
    if rule == "constant":
        if np.any(gx != gy):
            raise KernelError("the constant rule needs a constant field")
        return gx
    if rule == "source":
        return gx
    if rule == "destination":
        return gy
    if rule == "max":
        return np.maximum(gx, gy)
    if rule == "geometric":
        return np.sqrt(gx * gy)
    raise KernelError(f"unknown combination rule {rule!r}")


@dataclass(frozen=True, eq=False)
class _PairField:
    rule: str
    values: Callable | None = None
    diag: ScalarField | None = None
    source: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.rule not in _GRAD_FACTOR:
            raise KernelError(f"unknown combination rule {self.rule!r}")

    @property
    def symmetric(self):
        return self.rule in _SYMMETRIC

    def at_points(self, X):
        """Diagonal values at extrinsic points ``X`` of shape (N, b)."""
        if self.values is None:
            raise KernelError("field has no extrinsic evaluation")
        return np.asarray(self.values(np.atleast_2d(X)), dtype=float)

    def pair(self, gx, gy):
        return _combine(self.rule, np.asarray(gx, float), np.asarray(gy, float))

    def __call__(self, x, y):
        return self.pair(self.at_points(x), self.at_points(y))

    def at_diag(self, chart):
        if self.diag is None:
            raise KernelError("field has no analytic diagonal")
        return self.diag.fn(chart)

    def diag_grad(self, chart):
        """Chart gradient of ``y -> field_x(y)`` at ``y = x``."""
        if self.diag is None:
            raise KernelError("field has no analytic diagonal")
        return _GRAD_FACTOR[self.rule] * self.diag.grad(chart)


class BandwidthField(_PairField):
    """Bandwidth ``r_x(y)``; ``r_dot`` is its one-sided-free gradient at y = x.

    For the ``max`` rule the field has a kink along the gradient of gamma:
    ``r_x(y) ~ gamma + (r_dot + alpha sign(u.s) u).s`` with ``r_dot`` and
    ``alpha * u`` both equal to half the gradient of gamma.
    """

    def r_dot(self, chart):
        return self.diag_grad(chart)

    def kink(self, chart):
        g = self.diag.grad(chart) if self.diag is not None else None
        if self.rule != "max" or g is None:
            n = len(np.atleast_2d(chart))
            return np.zeros(n), np.zeros_like(np.atleast_2d(chart), dtype=float)
        norm = np.linalg.norm(g, axis=1)
        u = np.divide(g, norm[:, None], out=np.zeros_like(g), where=norm[:, None] > 0)
        return 0.5 * norm, u


class WeightField(_PairField):
    """Edge weight ``w_x(y)``; ``grad_w`` is its gradient in y at y = x."""

    def __post_init__(self):
        super().__post_init__()
        if self.rule == "max":
            raise KernelError("weight fields use constant/source/destination/geometric rules")

    def grad_w(self, chart):
        return self.diag_grad(chart)


class SampleLookup:
    """Per-sample values extended off-sample by the nearest sample."""

    def __init__(self, points, values):
        self.points = np.asarray(points, float)
        self.values = np.asarray(values, float)
        self._tree = cKDTree(self.points)

    def __call__(self, X):
        X = np.atleast_2d(X)
        if X.shape == self.points.shape and np.array_equal(X, self.points):
            return self.values.copy()
        _, idx = self._tree.query(X, k=1)
        return self.values[idx]


def _const_callable(value):
    return lambda X: np.full(len(np.atleast_2d(X)), value)


def constant_bandwidth(value=1.0, m=1):
    return BandwidthField(
        "constant", _const_callable(float(value)), constant_field(value, m), {"kind": "constant", "value": float(value)}
    )


def constant_weight(value=1.0, m=1):
    return WeightField(
        "constant", _const_callable(float(value)), constant_field(value, m), {"kind": "constant", "value": float(value)}
    )


# --------------------------------------------------------------------------
# kernel spec


@dataclass(frozen=True, eq=False)
class KernelSpec:
    base: BaseKernel
    bandwidth: BandwidthField
    weight: WeightField
    h: float

    def __post_init__(self):
        if not self.h > 0:
            raise KernelError("h must be positive")

    @property
    def symmetric(self):
        return self.bandwidth.symmetric and self.weight.symmetric


def kernel_values(spec, d, gx, gy, wx, wy):
    """Kernel values from distances and diagonal field values at both ends."""
    r = spec.bandwidth.pair(gx, gy)
    w = spec.weight.pair(wx, wy)
    return w * spec.base(np.asarray(d, float) / (spec.h * r))


def eval_kernel(spec, x, y):
    """``w_x(y) * K0(|y - x| / (h r_x(y)))`` for extrinsic points x, y."""
    x = np.atleast_2d(np.asarray(x, float))
    y = np.atleast_2d(np.asarray(y, float))
    d = np.linalg.norm(y - x, axis=1)
    out = kernel_values(
        spec,
        d,
        spec.bandwidth.at_points(x),
        spec.bandwidth.at_points(y),
        spec.weight.at_points(x),
        spec.weight.at_points(y),
    )
    return float(out[0]) if out.size == 1 else out


# --------------------------------------------------------------------------
# designer


def design_bandwidth_weight(p, q, g, m, manifold=None, grid=None):
    """Symmetric fields whose limit operator is ``(q/p) Delta_q`` with degree g.

    ``gamma = sqrt(q / (p g))`` and ``omega = (p g / q)^(m/2) g / p``, combined
    geometrically: ``r_x(y) = sqrt(gamma(x) gamma(y))`` and likewise for w.
    ``p, q, g`` are :class:`ScalarField` objects; when ``manifold`` is given the
    fields can also be evaluated at extrinsic points.
    """
    m = int(m)
    if grid is None:
        if manifold is None:
            raise KernelError("need a manifold or a validation grid")
        axes = [np.linspace(lo, hi, 41) for lo, hi in manifold.domain]
        mesh = np.meshgrid(*axes, indexing="ij")
        grid = np.stack([a.ravel() for a in mesh], axis=1)
    for name, f in (("p", p), ("q", q), ("g", g)):
        v = f.fn(grid)
        if np.any(~np.isfinite(v)) or np.any(v <= 0):
            raise KernelError(f"{name} must be positive and finite on the validation grid")

    def dlog(f, u):
        return f.grad(u) / f.fn(u)[:, None]

    def gamma(u):
        return np.sqrt(q.fn(u) / (p.fn(u) * g.fn(u)))

    def gamma_grad(u):
        return gamma(u)[:, None] * 0.5 * (dlog(q, u) - dlog(p, u) - dlog(g, u))

    def omega(u):
        pg = p.fn(u) * g.fn(u)
        return (pg / q.fn(u)) ** (m / 2.0) * g.fn(u) / p.fn(u)

    def omega_grad(u):
        dl = 0.5 * m * (dlog(p, u) + dlog(g, u) - dlog(q, u)) + dlog(g, u) - dlog(p, u)
        return omega(u)[:, None] * dl

    src = {"q": {"name": q.name, **q.params}, "g": {"name": g.name, **g.params}, "m": m}
    gam = ScalarField(gamma, gamma_grad, "designed_gamma", src)
    om = ScalarField(omega, omega_grad, "designed_omega", src)
    if manifold is not None:
        gvals = lambda X: gamma(manifold.chart_of(X))  # noqa: E731
        wvals = lambda X: omega(manifold.chart_of(X))  # noqa: E731
    else:
        gvals = wvals = None
    bw = BandwidthField("geometric", gvals, gam, {"kind": "designed", "role": "gamma", **src})
    wf = WeightField("geometric", wvals, om, {"kind": "designed", "role": "omega", **src})
    return bw, wf


# --------------------------------------------------------------------------
# serialization


def _base_to_dict(base):
    if base.kind == "truncated_gaussian":
        return {"kind": base.kind, "cutoff": base.cutoff}
    if base.kind == "indicator":
        return {"kind": "indicator"}
    return {"kind": base.kind, "steps": [[a, z] for a, z in zip(base.heights, base.radii)]}


def _base_from_dict(d):
    kind = d["kind"]
    if kind == "indicator":
        return indicator()
    if kind == "step_sum":
        return step_sum(d["steps"])
    if kind == "truncated_gaussian":
        return truncated_gaussian(d.get("cutoff", 3.0))
    raise KernelError(f"unknown base kernel {kind!r}")


def kernel_spec_to_dict(spec):
    return {
        "base": _base_to_dict(spec.base),
        "h": spec.h,
        "bandwidth": {"rule": spec.bandwidth.rule, "source": spec.bandwidth.source},
        "weight": {"rule": spec.weight.rule, "source": spec.weight.source},
    }


def _scalar_from_dict(d, manifold):
    if d["name"] == "constant":
        return constant_field(d["value"], manifold.m)
    if d["name"] == "density_power":
        return power_field(density_field(manifold), d.get("exponent", 1.0))
    raise KernelError(f"unknown scalar field {d['name']!r}")


def _field_from_dict(cls, d, points, manifold):
    rule, src = d["rule"], d["source"]
    kind = src.get("kind")
    if kind == "constant":
        m = manifold.m if manifold is not None else 1
        return cls(rule, _const_callable(src["value"]), constant_field(src["value"], m), dict(src))
    if kind in ("knn_radius", "knn_density"):
        from . import graphs, density  # local import: graphs depends on kernels

        if points is None:
            raise KernelError(f"{kind} field needs the sample points")
        if kind == "knn_radius":
            radii = graphs.knn_radii(graphs.build_index(points), src["k"])
            vals = radii.rho / src["scale"]
        else:
            vals = density.knn_density(points, src["k"], src["m"]).values
        return cls(rule, SampleLookup(points, vals), None, dict(src))
    if kind == "designed":
        if manifold is None:
            raise KernelError("designed field needs the manifold")
        q = _scalar_from_dict(src["q"], manifold)
        g = _scalar_from_dict(src["g"], manifold)
        bw, wf = design_bandwidth_weight(density_field(manifold), q, g, src["m"], manifold=manifold)
        return bw if src["role"] == "gamma" else wf
    raise KernelError(f"unknown field source {kind!r}")


def kernel_spec_from_dict(d, points=None, manifold=None):
    """Rebuild a :class:`KernelSpec`; sample- or manifold-backed fields need context."""
    return KernelSpec(
        base=_base_from_dict(d["base"]),
        bandwidth=_field_from_dict(BandwidthField, d["bandwidth"], points, manifold),
        weight=_field_from_dict(WeightField, d["weight"], points, manifold),
        h=float(d["h"]),
    )
