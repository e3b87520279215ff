"""Command-line pipeline: sample, build, laplacian, validate, embed, density.

Exit codes: 2 for usage errors, 3 for missing or corrupt data files, 4 for
numerical failures.  Diagnostics go to stderr; stdout carries tables only.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import density, graphs, laplacians, lle, manifolds, spectral, validate
from .io import (
    DataError,
    config_hash,
    file_digest,
    read_array_csv,
    read_matrix,
    read_sidecar,
    write_array_csv,
    write_json,
    write_matrix,
    write_sidecar,
)
from .kernels import KernelError

__all__ = ["main", "ExperimentConfig", "run_suite", "EXIT_USAGE", "EXIT_DATA", "EXIT_NUMERICAL"]

EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4
SCHEMA_VERSION = 1
SUITE_KINDS = ("sphere_moments", "convergence", "drift_sign", "degree", "pilot_comparison", "self_tuning_equivalence")


class UsageError(ValueError):
    pass


class NumericalError(ValueError):
    pass


# --------------------------------------------------------------------------
# experiment configs


@dataclass
class ExperimentConfig:
    manifold: dict
    suites: list
    name: str = "experiment"
    output_dir: str = "."
    schema_version: int = SCHEMA_VERSION
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise DataError("config must be a JSON object")
        if d.get("schema_version") != SCHEMA_VERSION:
            raise DataError(f"unsupported schema_version {d.get('schema_version')!r}")
        for key in ("manifold", "suites"):
            if key not in d:
                raise DataError(f"config lacks {key!r}")
        for s in d["suites"]:
            if s.get("kind") not in SUITE_KINDS:
                raise DataError(f"unknown suite kind {s.get('kind')!r}")
        known = {"manifold", "suites", "name", "output_dir", "schema_version"}
        return cls(
            manifold=d["manifold"],
            suites=list(d["suites"]),
            name=d.get("name", "experiment"),
            output_dir=d.get("output_dir", "."),
            schema_version=SCHEMA_VERSION,
            extra={k: v for k, v in d.items() if k not in known},
        )

    def to_dict(self):
        d = asdict(self)
        extra = d.pop("extra")
        d.update(extra)
        return d


def _grid(suite):
    ns = suite["n"] if isinstance(suite["n"], list) else [suite["n"]]
    if "param" in suite:
        ps = suite["param"] if isinstance(suite["param"], list) else [suite["param"]] * len(ns)
        return [(int(n), p) for n, p in zip(ns, ps)]
    if "h_exponent" in suite:
        return [(int(n), float(n) ** suite["h_exponent"]) for n in ns]
    if "k_exponent" in suite:
        return [(int(n), int(round(float(n) ** suite["k_exponent"]))) for n in ns]
    raise DataError("suite needs param, h_exponent or k_exponent")


def run_suite(spec, suite):
    """Run one validation suite; returns ``(result dict, summary rows)``."""
    kind = suite["kind"]
    if kind == "sphere_moments":
        out, rows = {}, []
        h = suite.get("h", 0.1)
        for m in suite.get("m", [1, 2, 3]):
            r = validate.sphere_moment_oracle(
                m,
                h,
                v_c=suite.get("v_c"),
                alpha=suite.get("alpha", 0.0),
                delta=suite.get("delta", 0.0),
                N=int(suite.get("N", 10**6)),
                seed=suite.get("seed", 0),
            )
            out[f"m={m}"] = {k: np.asarray(v).tolist() for k, v in r.items()}
            rows.append((f"sphere m={m}", f"M0/h^m={r['M0'] / h**m:.5f}", f"M2/h^(m+2)={np.trace(r['M2']) / m / h ** (m + 2):.5f}"))
        return out, rows
    if kind in ("convergence",):
        rep = validate.run_convergence(
            spec,
            suite["construction"],
            _grid(suite),
            suite.get("seeds", [0]),
            f_test=suite.get("test_functions", []),
            drift_only=suite.get("drift_only", False),
        )
        med = rep.pooled_median("drift")
        rows = [(f"{suite['construction']} n={g[0]}", f"param={g[1]:.4g}", f"drift median={e:.4f}") for g, e in zip(rep.grid, med)]
        out = rep.to_dict()
        out["pooled_drift_median"] = med
        return out, rows
    if kind == "drift_sign":
        (n, k), = _grid(suite)
        cloud = manifolds.sample_points(spec, n, suite.get("seed", 0))
        g = validate.build_graph(suite["construction"], cloud.points, k, m=spec.m)
        drift = validate.tangent_drift(g, cloud, spec)[:, 0]
        mask = validate.interior_mask(spec, cloud.chart_coords, validate.local_bandwidth(suite["construction"], cloud.points, k))
        grad = spec.grad_log_p(cloud.chart_coords)[:, 0]
        frac = validate.sign_agreement(drift, -grad, mask)
        return {"n": n, "k": k, "fraction_opposite": frac}, [(f"drift sign n={n} k={k}", f"opposite={frac:.3f}", "")]
    if kind == "degree":
        (n, p), = _grid(suite)
        cloud = manifolds.sample_points(spec, n, suite.get("seed", 0))
        g = validate.build_graph(suite["construction"], cloud.points, p, m=spec.m)
        rel = validate.degree_limit_check(g, spec, suite["construction"], cloud.chart_coords)
        mask = validate.interior_mask(spec, cloud.chart_coords, validate.local_bandwidth(suite["construction"], cloud.points, p))
        cv = float(np.std(g.degree[mask]) / np.mean(g.degree[mask]))
        res = {"median_abs_rel_error": float(np.median(np.abs(rel[mask]))), "degree_cv": cv}
        return res, [(f"degree {suite['construction']} n={n}", f"median rel err={res['median_abs_rel_error']:.4f}", f"cv={cv:.4f}")]
    if kind == "pilot_comparison":
        out, rows, wins = {}, [], 0
        for seed in suite.get("seeds", [0]):
            d = validate.pilot_comparison(spec, int(suite["n"]), int(suite["k"]), seed, pilot_k=suite.get("pilot_k"))
            out[f"seed={seed}"] = d
            wins += d["pilot"] < d["knn"]
            rows.append((f"pilot_comparison seed={seed}", f"knn={d['knn']:.4f}", f"pilot={d['pilot']:.4f}"))
        out["pilot_wins"] = int(wins)
        return out, rows
    if kind == "self_tuning_equivalence":
        (n, k), = _grid(suite)
        d = validate.self_tuning_equivalence(spec, n, k, suite.get("seed", 0))
        return d, [(f"self-tuning vs OR n={n} k={k}", f"between={d['between']:.4f}", f"to limit={min(d['self_tuning'], d['knn_or']):.4f}")]
    raise DataError(f"unknown suite kind {kind!r}")


# --------------------------------------------------------------------------
# commands


def _command_config(args, inputs=()):
    cfg = {k: v for k, v in vars(args).items() if k not in ("func", "out")}
    cfg["inputs"] = {str(p): file_digest(p) for p in inputs}
    return cfg


def _parse_params(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--param expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k] = json.loads(v)
        except json.JSONDecodeError:
            out[k] = v
    return out


def _load_points(path):
    a, header = read_array_csv(path)
    xcols = [i for i, h in enumerate(header) if h.startswith("x")]
    if not xcols:
        raise DataError(f"{path} has no x columns")
    ucols = [i for i, h in enumerate(header) if h.startswith("u")]
    return a[:, xcols], (a[:, ucols] if ucols else None)


def _load_graph(path):
    W = read_matrix(path)
    meta = read_sidecar(path)
    info = meta.get("graph", {})
    try:
        return graphs.SparseGraph(W, info.get("construction", "generic_kernel"), info.get("params", {}), info.get("symmetric", False))
    except graphs.GraphError as exc:
        raise DataError(f"{path}: {exc}") from None


def cmd_sample(args):
    params = _parse_params(args.param)
    mdict = {"name": args.manifold, "params": params}
    if args.density:
        mdict["density"] = {"name": args.density, **_parse_params(args.density_param)}
    spec = manifolds.make_manifold(mdict)
    cloud = manifolds.sample_points(spec, args.n, args.seed)
    header = [f"x{i}" for i in range(spec.b)] + [f"u{i}" for i in range(spec.m)]
    write_array_csv(args.out, np.hstack([cloud.points, cloud.chart_coords]), header)
    write_sidecar(args.out, _command_config(args), manifold=spec.to_dict(), n=cloud.n, seed=cloud.seed)


def cmd_build(args):
    X, _ = _load_points(args.points)
    c = args.construction
    if c == "r_neighborhood":
        if args.h is None:
            raise UsageError("r_neighborhood needs --h")
        g = graphs.build_r_neighborhood(X, args.h)
    else:
        if args.k is None:
            raise UsageError(f"{c} needs --k")
        if c == "pilot_weighted_knn":
            if args.m is None:
                raise UsageError("pilot_weighted_knn needs --m")
            pilot = density.knn_density(X, args.pilot_k or args.k, args.m)
            g = graphs.build_pilot_weighted_knn(X, args.k, pilot)
        else:
            g = validate.build_graph(c, X, args.k)
    write_matrix(args.out, g.W)
    info = {"construction": g.construction, "params": g.params, "symmetric": g.symmetric}
    write_sidecar(args.out, _command_config(args, [args.points]), graph=info)


def cmd_laplacian(args):
    g = _load_graph(args.graph)
    scaling = laplacians.scaling_for(g, args.m, h=args.h)
    L = laplacians.assemble(g, args.kind, scaling)
    write_matrix(args.out, L.matrix)
    write_sidecar(
        args.out,
        _command_config(args, [args.graph]),
        laplacian={"kind": L.kind, "scaling": L.scaling, "h": scaling.h, "Z": scaling.Z, "base": scaling.base.kind},
    )


def cmd_density(args):
    X, _ = _load_points(args.points)
    est = density.knn_density(X, args.k, args.m)
    write_array_csv(args.out, est.values[:, None], ["density"])
    write_sidecar(args.out, _command_config(args, [args.points]), k=est.k, m=est.m, method=est.method)


def cmd_embed(args):
    if args.method == "eigenmap":
        g = _load_graph(args.graph)
        Y = spectral.laplacian_eigenmap(g, args.dim, seed=args.seed)
        inputs = [args.graph]
    else:
        if args.points is None or args.k is None:
            raise UsageError("lle embedding needs --points and --k")
        X, _ = _load_points(args.points)
        Y = lle.embed_lle(lle.fit_lle(X, args.k, args.reg), args.dim, seed=args.seed)
        inputs = [args.points]
    write_array_csv(args.out, Y, [f"y{i}" for i in range(Y.shape[1])])
    write_sidecar(args.out, _command_config(args, inputs))


def cmd_validate(args):
    try:
        raw = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise DataError(f"cannot read config {args.config}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt config {args.config}: {exc}") from None
    cfg = ExperimentConfig.from_dict(raw)
    spec = manifolds.make_manifold(cfg.manifold)
    results, rows = {}, []
    t0 = time.perf_counter()
    for i, suite in enumerate(cfg.suites):
        res, r = run_suite(spec, suite)
        results[f"{i}:{suite['kind']}"] = res
        rows.extend(r)
    # runtime goes to stderr only, keeping the report byte-stable
    print(f"validate: {time.perf_counter() - t0:.1f} s", file=sys.stderr)
    out = Path(args.out) if args.out else Path(cfg.output_dir) / f"{cfg.name}.report.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    report = {"config": cfg.to_dict(), "config_hash": config_hash(cfg.to_dict()), "results": results}
    write_json(out, report)
    write_sidecar(out, cfg.to_dict())
    width = max((len(r[0]) for r in rows), default=10)
    for r in rows:
        print(f"{r[0]:<{width}}  {r[1]:<28}  {r[2]}")


# --------------------------------------------------------------------------
# entry point


def build_parser():
    p = argparse.ArgumentParser(prog="laplace-limits", description="Graph Laplacian limit experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sample", help="sample a point cloud on a manifold")
    s.add_argument("--manifold", required=True, choices=sorted(manifolds._FACTORIES))
    s.add_argument("--param", action="append", help="manifold parameter key=value")
    s.add_argument("--density")
    s.add_argument("--density-param", action="append", help="density parameter key=value")
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sample)

    s = sub.add_parser("build", help="build a graph from a point cloud")
    s.add_argument("--points", required=True)
    s.add_argument("--construction", required=True, choices=validate_constructions())
    s.add_argument("--k", type=int)
    s.add_argument("--h", type=float, help="radius for r_neighborhood")
    s.add_argument("--pilot-k", type=int)
    s.add_argument("--m", type=int, help="intrinsic dimension (pilot weights)")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_build)

    s = sub.add_parser("laplacian", help="assemble a scaled graph Laplacian")
    s.add_argument("--graph", required=True)
    s.add_argument("--kind", choices=laplacians.KINDS, default="random_walk")
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--h", type=float)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_laplacian)

    s = sub.add_parser("validate", help="run validation suites from a config")
    s.add_argument("--config", required=True)
    s.add_argument("--out")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("embed", help="spectral or LLE embedding")
    s.add_argument("--graph")
    s.add_argument("--points")
    s.add_argument("--method", choices=("eigenmap", "lle"), default="eigenmap")
    s.add_argument("--dim", type=int, default=2)
    s.add_argument("--k", type=int)
    s.add_argument("--reg", type=float, default=1e-3)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("density", help="k-NN density estimate")
    s.add_argument("--points", required=True)
    s.add_argument("--k", type=int, required=True)
    s.add_argument("--m", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_density)
    return p


def validate_constructions():
    return [c for c in graphs.CONSTRUCTIONS if c != "generic_kernel"]


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "embed" and args.method == "eigenmap" and not args.graph:
        parser.error("eigenmap embedding needs --graph")
    try:
        args.func(args)
    except (UsageError, graphs.GraphError, manifolds.ManifoldError, KernelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (
        laplacians.LaplacianError,
        spectral.SpectralError,
        lle.LleError,
        validate.ValidationError,
        np.linalg.LinAlgError,
        NumericalError,
    ) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return 0


if __name__ == "__main__":
    sys.exit(main())
