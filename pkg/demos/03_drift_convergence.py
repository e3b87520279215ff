"""Drift error of the r-neighbourhood graph on an interval as n grows.

The sample follows a truncated normal on [0, 4], so the limit drift is the
log-density gradient.  Uses h = n^(-1/5) and pools per-point errors over
five seeds.
"""

import warnings

from laplace_limits import manifolds, validate

spec = manifolds.make_manifold({"name": "flat_interval", "params": {"length": 4.0}, "density": {"name": "truncated_normal", "mean": 2.0, "sd": 1.0}})
grid = [(n, n ** (-1 / 5)) for n in (1000, 4000, 16000)]
with warnings.catch_warnings():
    # the same sample-size warning is reported once per cell below
    warnings.simplefilter("ignore", RuntimeWarning)
    report = validate.run_convergence(spec, "r_neighborhood", grid, seeds=range(5), drift_only=True)
for (n, h), err in zip(report.grid, report.pooled_median("drift")):
    print(f"n={n:6d} h={h:.3f}  pooled median drift error {err:.4f}")
for w in dict.fromkeys(report.warnings):
    print("warning:", w)
