"""Density-weighted k-NN graphs mimic a Gaussian kernel graph.

On a 2-D surface the plain OR-kNN graph has no density drift at all, while
a Gaussian graph drifts along half the log-density gradient.  Reweighting
edges by a pilot density estimate restores that drift; we compare the
normalised drifts over five seeds.
"""

from laplace_limits import manifolds, validate

spec = manifolds.gauss_sheet()
wins = 0
for seed in range(5):
    res = validate.pilot_comparison(spec, n=2000, k=10, seed=seed)
    wins += res["pilot"] < res["knn"]
    print(f"seed {seed}: sup distance to gaussian graph  knn={res['knn']:.3f}  pilot={res['pilot']:.3f}")
print(f"pilot closer in {wins}/5 seeds")
