"""Synthetic manifolds with known densities.

Every manifold is described by a chart (a box in R^m, possibly periodic), an
embedding into R^b, and a sampling density ``p`` taken with respect to the
manifold's volume element.  Gradients returned by the ``grad_log_p`` callables
are partial derivatives in chart coordinates; :func:`tangent_gradient`
converts them to coordinates in the orthonormal tangent frame, which is what
the limit formulas use.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate, special

__all__ = [
    "ManifoldError",
    "ManifoldSpec",
    "PointCloud",
    "TangentFrame",
    "circle",
    "flat_interval",
    "gauss_sheet",
    "toroidal_helix",
    "make_manifold",
    "sample_points",
    "tangent_frame",
    "tangent_frames",
    "tangent_gradient",
    "normal_displacement",
    "integrate_on_manifold",
    "volume_integral",
]

NORMALIZATION_TOL = 1e-4
_QUAD_ORDER = 256


class ManifoldError(ValueError):
    """Invalid manifold, chart point, or sampling configuration."""


@dataclass(frozen=True, eq=False)
class ManifoldSpec:
    """An analytic manifold with a sampling density.

    Callables take chart coordinates of shape ``(N, m)``.  ``density`` and
    ``volume_element`` return ``(N,)``; ``embedding`` returns ``(N, b)``;
    ``jacobian`` returns ``(N, b, m)``; ``grad_log_p`` returns chart partials
    of ``log p`` with shape ``(N, m)``.
    """

    name: str
    params: dict
    density_name: str
    density_params: dict
    intrinsic_dim: int
    ambient_dim: int
    domain: np.ndarray
    periodic: tuple
    chart_radius: float
    curvature_bound: float
    embedding: Callable
    jacobian: Callable
    density: Callable
    grad_log_p: Callable
    volume_element: Callable
    chart_of: Callable
    _envelope: float = field(default=np.nan, repr=False)

    def __post_init__(self):
        m, b = self.intrinsic_dim, self.ambient_dim
        if m < 1 or b < m:
            raise ManifoldError(f"need 1 <= m <= b, got m={m}, b={b}")
        dom = np.asarray(self.domain, dtype=float).reshape(m, 2)
        object.__setattr__(self, "domain", dom)
        total = integrate_on_manifold(self, lambda u: np.ones(len(u)))
        if abs(total - 1.0) > NORMALIZATION_TOL:
            raise ManifoldError(
                f"density of {self.name}/{self.density_name} integrates to "
                f"{total:.6f}, not 1"
            )
        # rejection envelope for the chart-coordinate density p * vol
        grid = _chart_grid(dom, 400 if m == 1 else 120)
        vals = self.density(grid) * self.volume_element(grid)
        if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
            raise ManifoldError("density must be positive and finite on the chart")
        object.__setattr__(self, "_envelope", 1.05 * float(vals.max()))

    @property
    def m(self):
        return self.intrinsic_dim

    @property
    def b(self):
        return self.ambient_dim

    def to_dict(self):
        return {
            "name": self.name,
            "params": dict(self.params),
            "density": {"name": self.density_name, **self.density_params},
        }

    def log_density(self, chart):
        return np.log(self.density(np.atleast_2d(chart)))

    def boundary_distance(self, chart):
        """Chart-coordinate distance to the edge of the domain (inf if periodic).

        Chart metrics on the shipped manifolds dominate the Euclidean chart
        metric, so this never overstates the geodesic distance.
        """
        u = _as_chart(chart, self.m)
        d = np.full(len(u), np.inf)
        for j in range(self.m):
            if self.periodic[j]:
                continue
            lo, hi = self.domain[j]
            d = np.minimum(d, np.minimum(u[:, j] - lo, hi - u[:, j]))
        return d

    def chart_difference(self, x_chart, y_chart):
        """``y - x`` in chart coordinates, wrapped on periodic axes."""
        x = _as_chart(x_chart, self.m)
        y = _as_chart(y_chart, self.m)
        diff = y - x
        for j in range(self.m):
            if self.periodic[j]:
                period = self.domain[j, 1] - self.domain[j, 0]
                diff[:, j] = (diff[:, j] + period / 2) % period - period / 2
        return diff

    def in_domain(self, chart):
        u = _as_chart(chart, self.m)
        ok = np.ones(len(u), dtype=bool)
        for j in range(self.m):
            if not self.periodic[j]:
                lo, hi = self.domain[j]
                ok &= (u[:, j] >= lo - 1e-12) & (u[:, j] <= hi + 1e-12)
        return ok


@dataclass(frozen=True, eq=False)
class PointCloud:
    """Samples on a manifold; ``chart_coords`` are kept for validation only."""

    points: np.ndarray
    chart_coords: np.ndarray
    seed: int
    manifold: ManifoldSpec | None = None

    @property
    def n(self):
        return self.points.shape[0]


@dataclass(frozen=True, eq=False)
class TangentFrame:
    x: np.ndarray
    H: np.ndarray

    @property
    def projector(self):
        return self.H @ self.H.T


def _as_chart(chart, m):
    u = np.asarray(chart, dtype=float)
    if u.ndim == 0:
        u = u.reshape(1, 1)
    elif u.ndim == 1:
        u = u.reshape(-1, m) if m > 1 else u.reshape(-1, 1)
    return u


def _chart_grid(domain, per_axis):
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in domain]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def integrate_on_manifold(spec, fn, order=_QUAD_ORDER):
    """Integrate ``fn(chart) * p`` against the volume element over the chart.

    Tensor Gauss-Legendre rule; ``fn`` receives chart points ``(N, m)``.
    """
    nodes, weights = np.polynomial.legendre.leggauss(order)
    axes_u, axes_w = [], []
    for lo, hi in spec.domain:
        half = 0.5 * (hi - lo)
        axes_u.append(lo + half * (nodes + 1.0))
        axes_w.append(half * weights)
    mesh = np.meshgrid(*axes_u, indexing="ij")
    u = np.stack([g.ravel() for g in mesh], axis=1)
    wmesh = np.meshgrid(*axes_w, indexing="ij")
    w = np.prod(np.stack([g.ravel() for g in wmesh], axis=1), axis=1)
    vals = np.asarray(fn(u), dtype=float)
    dens = spec.density(u) * spec.volume_element(u)
    return float(np.sum(w * dens * vals))


def volume_integral(spec, fn, order=_QUAD_ORDER):
    """Integrate ``fn(chart)`` against the volume element (no density)."""
    return integrate_on_manifold(spec, lambda u: np.asarray(fn(u), float) / spec.density(u), order)


# --------------------------------------------------------------------------
# shipped manifolds


def _truncnorm_pdf(x, mean, sd, lo, hi):
    z = special.ndtr((hi - mean) / sd) - special.ndtr((lo - mean) / sd)
    return np.exp(-0.5 * ((x - mean) / sd) ** 2) / (sd * np.sqrt(2 * np.pi) * z)


def circle(radius=1.0, density="uniform", **density_params):
    """Circle of the given radius in R^2; chart is the angle in [0, 2*pi).

    Densities: ``uniform`` and ``cosine`` (p proportional to 1 + a cos(theta),
    parameter ``a`` with |a| < 1).
    """
    R = float(radius)
    if R <= 0:
        raise ManifoldError("radius must be positive")

    def embedding(u):
        t = _as_chart(u, 1)[:, 0]
        return np.stack([R * np.cos(t), R * np.sin(t)], axis=1)

    def jacobian(u):
        t = _as_chart(u, 1)[:, 0]
        return np.stack([-R * np.sin(t), R * np.cos(t)], axis=1)[:, :, None]

    def vol(u):
        return np.full(len(_as_chart(u, 1)), R)

    def chart_of(x):
        x = np.atleast_2d(x)
        return (np.arctan2(x[:, 1], x[:, 0]) % (2 * np.pi))[:, None]

    if density == "uniform":
        dparams = {}

        def dens(u):
            return np.full(len(_as_chart(u, 1)), 1.0 / (2 * np.pi * R))

        def glp(u):
            return np.zeros((len(_as_chart(u, 1)), 1))

    elif density == "cosine":
        a = float(density_params.get("a", 0.5))
        if not abs(a) < 1:
            raise ManifoldError("cosine density needs |a| < 1")
        dparams = {"a": a}

        def dens(u):
            t = _as_chart(u, 1)[:, 0]
            return (1 + a * np.cos(t)) / (2 * np.pi * R)

        def glp(u):
            t = _as_chart(u, 1)[:, 0]
            return (-a * np.sin(t) / (1 + a * np.cos(t)))[:, None]

    else:
        raise ManifoldError(f"unknown circle density {density!r}")

    return ManifoldSpec(
        name="circle",
        params={"radius": R},
        density_name=density,
        density_params=dparams,
        intrinsic_dim=1,
        ambient_dim=2,
        domain=np.array([[0.0, 2 * np.pi]]),
        periodic=(True,),
        chart_radius=np.pi / 2,
        curvature_bound=1.0 / R,
        embedding=embedding,
        jacobian=jacobian,
        density=dens,
        grad_log_p=glp,
        volume_element=vol,
        chart_of=chart_of,
    )


def flat_interval(length=1.0, density="uniform", ambient_dim=2, **density_params):
    """Segment [0, length] placed on the first axis of R^ambient_dim.

    Densities: ``uniform`` and ``truncated_normal`` (``mean``, ``sd``;
    defaults centre the bump with sd = length / 4).
    """
    L = float(length)
    b = int(ambient_dim)
    if L <= 0:
        raise ManifoldError("length must be positive")

    def embedding(u):
        x = _as_chart(u, 1)[:, 0]
        out = np.zeros((len(x), b))
        out[:, 0] = x
        return out

    def jacobian(u):
        n = len(_as_chart(u, 1))
        J = np.zeros((n, b, 1))
        J[:, 0, 0] = 1.0
        return J

    def vol(u):
        return np.ones(len(_as_chart(u, 1)))

    def chart_of(x):
        return np.atleast_2d(x)[:, :1].copy()

    if density == "uniform":
        dparams = {}

        def dens(u):
            return np.full(len(_as_chart(u, 1)), 1.0 / L)

        def glp(u):
            return np.zeros((len(_as_chart(u, 1)), 1))

    elif density == "truncated_normal":
        mean = float(density_params.get("mean", L / 2))
        sd = float(density_params.get("sd", L / 4))
        dparams = {"mean": mean, "sd": sd}

        def dens(u):
            return _truncnorm_pdf(_as_chart(u, 1)[:, 0], mean, sd, 0.0, L)

        def glp(u):
            return (-(_as_chart(u, 1)[:, 0] - mean) / sd**2)[:, None]

    else:
        raise ManifoldError(f"unknown interval density {density!r}")

    return ManifoldSpec(
        name="flat_interval",
        params={"length": L, "ambient_dim": b},
        density_name=density,
        density_params=dparams,
        intrinsic_dim=1,
        ambient_dim=b,
        domain=np.array([[0.0, L]]),
        periodic=(False,),
        chart_radius=np.inf,
        curvature_bound=0.0,
        embedding=embedding,
        jacobian=jacobian,
        density=dens,
        grad_log_p=glp,
        volume_element=vol,
        chart_of=chart_of,
    )


def gauss_sheet(bound=2.5, amplitude=0.5, density="truncated_normal"):
    """Wavy sheet (u, v, amplitude * sin u) over [-bound, bound]^2 in R^3.

    The chart coordinates (u, v), which are also the first two extrinsic
    coordinates, are independent truncated standard normals, so the density
    with respect to the surface volume element is that product divided by
    ``sqrt(1 + amplitude^2 cos^2 u)``.  ``density="uniform"`` gives the
    uniform surface density instead.
    """
    T = float(bound)
    A = float(amplitude)
    if T <= 0:
        raise ManifoldError("bound must be positive")

    def embedding(u):
        u = _as_chart(u, 2)
        return np.stack([u[:, 0], u[:, 1], A * np.sin(u[:, 0])], axis=1)

    def jacobian(u):
        u = _as_chart(u, 2)
        J = np.zeros((len(u), 3, 2))
        J[:, 0, 0] = 1.0
        J[:, 1, 1] = 1.0
        J[:, 2, 0] = A * np.cos(u[:, 0])
        return J

    def vol(u):
        u = _as_chart(u, 2)
        return np.sqrt(1.0 + (A * np.cos(u[:, 0])) ** 2)

    def dlogvol(u):
        c, s = np.cos(u[:, 0]), np.sin(u[:, 0])
        return -(A**2) * c * s / (1.0 + (A * c) ** 2)

    def chart_of(x):
        return np.atleast_2d(x)[:, :2].copy()

    if density == "truncated_normal":
        z1 = special.ndtr(T) - special.ndtr(-T)

        def dens(u):
            u = _as_chart(u, 2)
            q = np.exp(-0.5 * (u**2).sum(axis=1)) / (2 * np.pi * z1**2)
            return q / vol(u)

        def glp(u):
            u = _as_chart(u, 2)
            g = -u.copy()
            g[:, 0] -= dlogvol(u)
            return g

    elif density == "uniform":
        gl_nodes, gl_w = np.polynomial.legendre.leggauss(_QUAD_ORDER)
        area = 2 * T * float(np.sum(T * gl_w * vol(np.stack([T * gl_nodes, 0 * gl_nodes], 1))))

        def dens(u):
            return np.full(len(_as_chart(u, 2)), 1.0 / area)

        def glp(u):
            return np.zeros((len(_as_chart(u, 2)), 2))

    else:
        raise ManifoldError(f"unknown sheet density {density!r}")

    return ManifoldSpec(
        name="gauss_sheet",
        params={"bound": T, "amplitude": A},
        density_name=density,
        density_params={},
        intrinsic_dim=2,
        ambient_dim=3,
        domain=np.array([[-T, T], [-T, T]]),
        periodic=(False, False),
        chart_radius=np.inf,
        curvature_bound=abs(A),
        embedding=embedding,
        jacobian=jacobian,
        density=dens,
        grad_log_p=glp,
        volume_element=vol,
        chart_of=chart_of,
    )


def toroidal_helix(R=2.0, r=0.5, windings=8, density="uniform"):
    """Closed helix wound ``windings`` times around a torus; chart t in [0, 2*pi).

    ``density="uniform"`` is uniform in arc length (the curve is then
    isometric to a circle of the same length); ``"uniform_chart"`` is uniform
    in the parameter t.
    """
    R, r, w = float(R), float(r), int(windings)
    if not (R > r > 0) or w < 1:
        raise ManifoldError("need R > r > 0 and windings >= 1")

    def embedding(u):
        t = _as_chart(u, 1)[:, 0]
        rad = R + r * np.cos(w * t)
        return np.stack([rad * np.cos(t), rad * np.sin(t), r * np.sin(w * t)], axis=1)

    def jacobian(u):
        t = _as_chart(u, 1)[:, 0]
        rad = R + r * np.cos(w * t)
        drad = -w * r * np.sin(w * t)
        J = np.stack(
            [
                drad * np.cos(t) - rad * np.sin(t),
                drad * np.sin(t) + rad * np.cos(t),
                w * r * np.cos(w * t),
            ],
            axis=1,
        )
        return J[:, :, None]

    def vol(u):
        t = _as_chart(u, 1)[:, 0]
        return np.sqrt((w * r) ** 2 + (R + r * np.cos(w * t)) ** 2)

    def dlogvol(t):
        rad = R + r * np.cos(w * t)
        return -rad * w * r * np.sin(w * t) / ((w * r) ** 2 + rad**2)

    def chart_of(x):
        x = np.atleast_2d(x)
        return (np.arctan2(x[:, 1], x[:, 0]) % (2 * np.pi))[:, None]

    length, _ = integrate.quad(lambda t: float(vol(np.array([t]))[0]), 0, 2 * np.pi, limit=400)

    if density == "uniform":

        def dens(u):
            return np.full(len(_as_chart(u, 1)), 1.0 / length)

        def glp(u):
            return np.zeros((len(_as_chart(u, 1)), 1))

    elif density == "uniform_chart":

        def dens(u):
            return 1.0 / (2 * np.pi * vol(u))

        def glp(u):
            return (-dlogvol(_as_chart(u, 1)[:, 0]))[:, None]

    else:
        raise ManifoldError(f"unknown helix density {density!r}")

    # curvature |g' x g''| / |g'|^3 maximised on a fine grid
    t = np.linspace(0, 2 * np.pi, 20001)
    h = 1e-4
    d1 = jacobian(t[:, None])[:, :, 0]
    d2 = (jacobian((t + h)[:, None])[:, :, 0] - jacobian((t - h)[:, None])[:, :, 0]) / (2 * h)
    kappa = np.linalg.norm(np.cross(d1, d2), axis=1) / np.linalg.norm(d1, axis=1) ** 3

    return ManifoldSpec(
        name="toroidal_helix",
        params={"R": R, "r": r, "windings": w, "length": length},
        density_name=density,
        density_params={},
        intrinsic_dim=1,
        ambient_dim=3,
        domain=np.array([[0.0, 2 * np.pi]]),
        periodic=(True,),
        chart_radius=np.pi / w,
        curvature_bound=float(kappa.max()),
        embedding=embedding,
        jacobian=jacobian,
        density=dens,
        grad_log_p=glp,
        volume_element=vol,
        chart_of=chart_of,
    )


_FACTORIES = {
    "circle": circle,
    "flat_interval": flat_interval,
    "gauss_sheet": gauss_sheet,
    "toroidal_helix": toroidal_helix,
}


def make_manifold(spec):
    """Build a manifold from its ``to_dict`` form (also accepts a bare name)."""
    if isinstance(spec, str):
        spec = {"name": spec}
    spec = dict(spec)
    name = spec.pop("name")
    params = dict(spec.pop("params", {}))
    if name == "toroidal_helix":
        params.pop("length", None)  # derived, not an input
    dens = dict(spec.pop("density", {}) or {})
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise ManifoldError(f"unknown manifold {name!r}") from None
    if dens:
        params["density"] = dens.pop("name")
        params.update(dens)
    return factory(**params)


# --------------------------------------------------------------------------
# operations


_MAX_REJECTION_ROUNDS = 1000


def sample_points(spec, n, seed):
    """Draw ``n`` i.i.d. points from ``spec.density`` by rejection sampling.

    Proposals are uniform on the chart box and accepted against the
    chart-coordinate density ``p * vol``.
    """
    n = int(n)
    if n < 1:
        raise ManifoldError("n must be >= 1")
    rng = np.random.default_rng(seed)
    lo, hi = spec.domain[:, 0], spec.domain[:, 1]
    accepted = []
    count = 0
    batch = max(256, 2 * n)
    for _ in range(_MAX_REJECTION_ROUNDS):
        u = lo + (hi - lo) * rng.random((batch, spec.m))
        target = spec.density(u) * spec.volume_element(u)
        if np.any(target > spec._envelope):
            raise ManifoldError("rejection envelope exceeded; density misconfigured")
        keep = rng.random(batch) * spec._envelope < target
        accepted.append(u[keep])
        count += int(keep.sum())
        if count >= n:
            break
    else:
        raise ManifoldError("rejection sampler exceeded its retry cap")
    chart = np.concatenate(accepted)[:n]
    return PointCloud(points=spec.embedding(chart), chart_coords=chart, seed=int(seed), manifold=spec)


def tangent_frames(spec, chart):
    """Orthonormal tangent bases ``H`` with shape ``(N, b, m)``.

    Columns are Gram-Schmidt orthonormalised Jacobian columns, oriented so
    that H^T J is upper triangular with a positive diagonal.
    """
    u = _as_chart(chart, spec.m)
    J = spec.jacobian(u)
    Q, Rm = np.linalg.qr(J)
    signs = np.sign(np.diagonal(Rm, axis1=1, axis2=2))
    if np.any(np.abs(np.diagonal(Rm, axis1=1, axis2=2)) < 1e-12):
        raise ManifoldError("rank-deficient embedding Jacobian")
    return Q * signs[:, None, :]


def tangent_frame(spec, chart_point):
    u = _as_chart(chart_point, spec.m)[:1]
    if not spec.in_domain(u).all():
        raise ManifoldError("chart point outside the chart domain")
    H = tangent_frames(spec, u)[0]
    return TangentFrame(x=spec.embedding(u)[0], H=H)


def tangent_gradient(spec, chart, grad_chart):
    """Convert chart partial derivatives to tangent-frame coordinates.

    With J = H R (thin QR) the Riemannian gradient in frame coordinates is
    R^{-T} times the chart partials.
    """
    u = _as_chart(chart, spec.m)
    g = np.asarray(grad_chart, dtype=float).reshape(len(u), spec.m)
    J = spec.jacobian(u)
    _, Rm = np.linalg.qr(J)
    signs = np.sign(np.diagonal(Rm, axis1=1, axis2=2))
    Rm = Rm * signs[:, :, None]
    return np.linalg.solve(np.transpose(Rm, (0, 2, 1)), g[:, :, None])[:, :, 0]


def normal_displacement(spec, x_chart, y_chart):
    """Tangent-projection approximation of the normal coordinates of y at x.

    Returns ``H_x^T (y - x)``, which agrees with geodesic normal coordinates
    to second order.
    """
    x = _as_chart(x_chart, spec.m)
    y = _as_chart(y_chart, spec.m)
    if len(x) == 1 and len(y) > 1:
        x = np.repeat(x, len(y), axis=0)
    diff = spec.chart_difference(x, y)
    if np.any(np.linalg.norm(diff, axis=1) > spec.chart_radius):
        raise ManifoldError("points farther apart than the chart radius")
    H = tangent_frames(spec, x)
    d = spec.embedding(y) - spec.embedding(x)
    s = np.einsum("nbm,nb->nm", H, d)
    return s[0] if s.shape[0] == 1 else s
