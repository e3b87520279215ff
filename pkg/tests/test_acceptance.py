"""The ten acceptance criteria at their stated sizes and tolerances.

Each test records a one-line verdict that is printed in the pytest terminal
summary; ``python tests/test_acceptance.py`` prints the same lines directly.
"""

import time

import numpy as np
import pytest
import scipy.sparse as sp

from laplace_limits import graphs, kernels, laplacians, lle, manifolds, spectral, validate
from laplace_limits.density import knn_density

try:
    from conftest import record
except ImportError:  # run as a script from elsewhere
    def record(number, passed, detail):
        print(f"criterion {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


def _within(est, target, se, tiny):
    return np.all(np.abs(np.asarray(est) - target) <= 3 * np.asarray(se) + tiny)


def test_criterion_01_sphere_moments():
    t0 = time.perf_counter()
    h, ok, worst = 0.1, True, 0.0
    for m in (1, 2, 3):
        r = validate.sphere_moment_oracle(m, h, N=10**6, seed=m)
        tiny = 1e-12 * h**m
        ok &= _within(r["M0"], h**m, r["se0"], tiny)
        ok &= _within(r["M1"], 0.0, r["se1"], tiny * h)
        ok &= _within(r["M2"], h ** (m + 2) / (m + 2) * np.eye(m), r["se2"], tiny * h * h)
        z2 = np.abs(r["M2"] - h ** (m + 2) / (m + 2) * np.eye(m)) / np.maximum(r["se2"], 1e-300)
        worst = max(worst, float(z2.max()), float(np.max(np.abs(r["M1"]) / r["se1"])))
    dt = time.perf_counter() - t0
    ok &= dt < 30
    record(1, ok, f"ball moments for m=1,2,3 within 3 SE (worst |z|={worst:.2f}), {dt:.1f} s")
    assert ok


def test_criterion_02_shifted_sphere_first_moment():
    t0 = time.perf_counter()
    m, h = 2, 0.1
    v_c = 0.01 * h**2 * np.eye(m)[0]
    r = validate.sphere_moment_oracle(m, h, v_c=v_c, N=10**6, seed=0)
    target = h**4 * v_c
    z = (r["M1"] - target) / r["se1"]
    ok = bool(np.all(np.abs(z) <= 3))
    dt = time.perf_counter() - t0
    ok &= dt < 30
    # diagnostic only: the control-variate estimate resolves the two scalings
    cv = validate.sphere_moment_oracle(m, h, v_c=v_c, N=10**6, seed=0, control_variate=True)
    record(
        2,
        ok,
        f"M1 z-scores vs h^4 v_c = {np.round(z, 2).tolist()} (SE {r['se1'][0]:.2e}); "
        f"control-variate M1_x = {cv['M1'][0]:.3e} +- {cv['se1'][0]:.1e} vs h^2 v_c = {h**2 * v_c[0]:.1e}, {dt:.1f} s",
    )
    assert ok


def test_criterion_03_drift_convergence():
    t0 = time.perf_counter()
    spec = manifolds.flat_interval(4.0, "truncated_normal", mean=2.0, sd=1.0)
    grid = [(n, n ** (-1 / 5)) for n in (1000, 2000, 4000, 8000)]
    with pytest.warns(RuntimeWarning):
        rep = validate.run_convergence(spec, "r_neighborhood", grid, range(5), drift_only=True)
    med = rep.pooled_median("drift")
    steps = int(np.sum(np.diff(med) < 0))
    dt = time.perf_counter() - t0
    ok = steps >= 3 and dt < 300
    record(3, ok, f"median interior drift error {np.round(med, 4).tolist()}: {steps}/3 steps decrease, {dt:.0f} s")
    assert ok


def test_criterion_04_or_knn_drift_sign():
    t0 = time.perf_counter()
    spec = manifolds.flat_interval(4.0, "truncated_normal", mean=2.0, sd=1.0)
    n = 8000
    k = int(round(n**0.75))
    cloud = manifolds.sample_points(spec, n, 0)
    g = graphs.build_knn_undirected_or(cloud.points, k)
    drift = validate.tangent_drift(g, cloud, spec)[:, 0]
    rho = validate.local_bandwidth("knn_undirected_or", cloud.points, k)
    mask = validate.interior_mask(spec, cloud.chart_coords, rho)
    frac = validate.sign_agreement(drift, -spec.grad_log_p(cloud.chart_coords)[:, 0], mask)
    dt = time.perf_counter() - t0
    ok = frac >= 0.8 and dt < 120
    record(4, ok, f"OR-kNN drift opposes grad p at {frac:.1%} of {mask.sum()} interior points (k={k}), {dt:.0f} s")
    assert ok


def test_criterion_05_self_tuning_equivalence():
    t0 = time.perf_counter()
    spec = manifolds.circle(density="cosine", a=0.5)
    n = 5000
    d = validate.self_tuning_equivalence(spec, n, int(round(n**0.75)), seed=0)
    bound = 2 * min(d["self_tuning"], d["knn_or"])
    dt = time.perf_counter() - t0
    ok = d["between"] <= bound and dt < 120
    record(
        5,
        ok,
        f"|st - or| = {d['between']:.3f} <= 2 x min(dist to limit) = {bound:.3f} "
        f"(st {d['self_tuning']:.3f}, or {d['knn_or']:.3f}), {dt:.0f} s",
    )
    assert ok


def _random_graph(rng, n):
    X = rng.standard_normal((n, 3))
    g = graphs.build_knn_undirected_or(X, 6)
    W = g.W.copy()
    W.data = rng.uniform(0.1, 2.0, W.nnz)
    W = sp.triu(W, 1)
    return X, graphs.SparseGraph(W + W.T, "generic_kernel", {"h": 1.0}, symmetric=True)


def test_criterion_06_algebraic_identities():
    rng = np.random.default_rng(6)
    worst = 0.0
    for n in (50, 500, 2000):
        X, g = _random_graph(rng, n)
        s = laplacians.Scaling(kernels.indicator(), 3, 0.5)
        Lrw = laplacians.assemble(g, "random_walk", s).matrix
        Lu = laplacians.assemble(g, "unnormalized", s).matrix
        D = sp.diags(g.degree)
        worst = max(worst, abs(Lu - D @ Lrw).max() / g.degree.max())
        worst = max(worst, np.abs(np.asarray(Lrw.sum(axis=1))).max())
        P1 = sp.diags(1 / g.degree) @ g.W
        g2 = graphs.SparseGraph(7.3 * g.W, "generic_kernel", {"h": 1.0}, symmetric=True)
        P2 = sp.diags(1 / g2.degree) @ g2.W
        worst = max(worst, abs(P1 - P2).max())
        model = lle.fit_lle(X, 8, 1e-3)
        worst = max(worst, np.abs(np.asarray(model.W.sum(axis=1)).ravel() - 1).max())
        worst = max(worst, np.abs(model.M @ np.ones(n)).max())
        Wd = graphs.build_knn_directed(X, 7).W
        Wor = graphs.build_knn_undirected_or(X, 7).W
        worst = max(worst, abs(Wor - Wd.maximum(Wd.T)).max())
    ok = worst <= 1e-10
    record(6, ok, f"L_u = D L_rw, row sums, P scale invariance, LLE rows, OR = max(Wd, Wd^T): max dev {worst:.1e}")
    assert ok


def test_criterion_07_green_identity():
    from laplace_limits import limits

    t0 = time.perf_counter()
    spec = manifolds.circle(density="cosine", a=0.5)
    f = np.sin
    fc = lambda u: f(u[:, 0])  # noqa: E731
    rel = []
    for q in (kernels.constant_field(1.0, 1), kernels.power_field(kernels.density_field(spec), 2.0)):
        lhs = manifolds.volume_integral(spec, lambda u: fc(u) * limits.apply_weighted_LB(q, fc, u, spec) * q.fn(u))
        rhs = -limits.smoothness_functional(q, fc, spec)
        rel.append(abs(lhs - rhs) / abs(rhs))
    dt = time.perf_counter() - t0
    ok = max(rel) <= 0.02 and dt < 10
    record(7, ok, f"<f, Delta_q f>_q vs -|grad f|^2_q, q in (uniform, p^2): rel errors {[f'{r:.1e}' for r in rel]}, {dt:.1f} s")
    assert ok


def test_criterion_08_helix_embeddings():
    t0 = time.perf_counter()
    spec = manifolds.toroidal_helix()
    cloud = manifolds.sample_points(spec, 1500, 0)
    g = graphs.build_knn_undirected_or(cloud.points, 10)
    _, _, rms = spectral.fit_circle(spectral.laplacian_eigenmap(g, 2))
    u = cloud.chart_coords[:, 0]
    fns = {"sin": np.sin(u), "cos": np.cos(u), "sin2": np.sin(2 * u)}
    lo, hi = lle.regularization_sweep(cloud.points, 10, [1e-6, 1e-3], fns, 1)
    ratios = {k: (lo["functions"][k]["ratio"], hi["functions"][k]["ratio"]) for k in fns}
    dt = time.perf_counter() - t0
    ok = rms < 0.05 and all(a < b for a, b in ratios.values()) and dt < 120
    shown = ", ".join(f"{k}: {a:.2e} < {b:.2e}" for k, (a, b) in ratios.items())
    record(8, ok, f"eigenmap circle-fit RMS {rms:.2%}; LLE ratio reg 1e-6 vs 1e-3: {shown}; {dt:.0f} s")
    assert ok


def test_criterion_09_pilot_weighted_drift():
    t0 = time.perf_counter()
    spec = manifolds.gauss_sheet()
    res = [validate.pilot_comparison(spec, 2000, 10, seed) for seed in range(5)]
    wins = sum(r["pilot"] < r["knn"] for r in res)
    dt = time.perf_counter() - t0
    ok = wins >= 3 and dt < 300
    pairs = ", ".join(f"{r['pilot']:.2f}/{r['knn']:.2f}" for r in res)
    record(9, ok, f"pilot/plain sup distance to Gaussian-graph field per seed: {pairs}; pilot closer in {wins}/5, {dt:.0f} s")
    assert ok


def test_criterion_10_designer_round_trip():
    t0 = time.perf_counter()
    spec = manifolds.gauss_sheet()
    grid = np.stack(np.meshgrid(np.linspace(-2, 2, 10), np.linspace(-2, 2, 10), indexing="ij"), -1).reshape(-1, 2)
    p = kernels.density_field(spec)
    triples = [
        (kernels.power_field(p, 2.0), kernels.constant_field(1.0, 2)),
        (kernels.constant_field(1.0, 2), p),
        (kernels.power_field(p, 0.5), kernels.power_field(p, -1.0)),
    ]
    worst = 0.0
    for q, g in triples:
        bw, w = kernels.design_bandwidth_weight(p, q, g, 2, manifold=spec)
        gam, om, pv = bw.at_diag(grid), w.at_diag(grid), p.fn(grid)
        worst = max(worst, np.max(np.abs(pv**2 * om * gam**4 / q.fn(grid) - 1)))
        worst = max(worst, np.max(np.abs(pv * om * gam**2 / g.fn(grid) - 1)))
    dt = time.perf_counter() - t0
    ok = worst <= 1e-10 and dt < 1
    record(10, ok, f"p^2 w r^(m+2) = q and p w r^m = g for 3 triples: max rel dev {worst:.1e}, {dt * 1e3:.0f} ms")
    assert ok


if __name__ == "__main__":
    import warnings

    warnings.simplefilter("ignore")
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                pass
    from conftest import ACCEPTANCE_LINES

    for k in sorted(ACCEPTANCE_LINES):
        print(ACCEPTANCE_LINES[k])
