"""Which diffusion does each graph construction converge to?

On a circle sampled with density proportional to 1 + 0.5 cos(theta) the
constructions disagree: the r-neighbourhood graph drifts up the density,
OR-kNN drifts down it, and the directed kNN walk sits in between.  The
drift divided by the step variance does not depend on how the Laplacian is
scaled, so we compare it with the catalogued limit in angular bins,
averaged over five samples because neighbouring points share noise.
"""

import numpy as np

from laplace_limits import limits, manifolds, validate

spec = manifolds.circle(density="cosine", a=0.5)
edges = np.linspace(0, 2 * np.pi, 9)
centers = 0.5 * (edges[1:] + edges[:-1])[:, None]

for construction, param in [("r_neighborhood", 0.25), ("knn_directed", 200), ("knn_undirected_or", 200)]:
    sums, counts = np.zeros(8), np.zeros(8)
    for seed in range(5):
        cloud = manifolds.sample_points(spec, 20000, seed=seed)
        g = validate.build_graph(construction, cloud.points, param, spec.m)
        nd = validate.normalized_drift(g, cloud.points, manifolds.tangent_frames(spec, cloud.chart_coords))[:, 0]
        bins = np.digitize(cloud.chart_coords[:, 0], edges) - 1
        sums += np.bincount(bins, weights=nd, minlength=8)
        counts += np.bincount(bins, minlength=8)
    op = limits.catalog_limit(construction, spec)
    predicted = op.drift(centers)[:, 0] / op.diffusion_scale(centers)
    print(f"{construction:18s} binned {np.round(sums / counts, 2)}")
    print(f"{'':18s} limit  {np.round(predicted, 2)}")
